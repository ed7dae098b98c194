"""Choose K and the clustering method on planted regimes and on encounter states.

Prints the AIC/BIC/silhouette table per dataset, the BIC choice, and the
KPCA-KMC vs spectral silhouettes at K = 4.

    python scripts/model_selection.py [--per-regime 125]
"""

import argparse
from pathlib import Path

from prlp.clustering import SpectralParams, compare_methods, select_k
from prlp.config import load_config
from prlp.pipeline import generate_split
from prlp.sim import planted_states

ROOT = Path(__file__).resolve().parent.parent


def report(name, states, cfg):
    print(f"== {name}: {len(states)} states")
    sel = select_k(states, range(cfg.k_min, cfg.k_max + 1), "kpca-kmc", cfg.cluster_restarts, cfg.seed)
    print(" K        AIC        BIC  silhouette")
    for r in sel.table:
        print(f"{r.K:2d} {r.aic:10.1f} {r.bic:10.1f} {r.silhouette:11.3f}")
    print(f"BIC selects K = {sel.best_k}")
    cmp = compare_methods(states, 4, cfg.cluster_restarts, cfg.seed, spectral=SpectralParams(k_nn=cfg.knn))
    sils = ", ".join(f"{m} {s:.3f}" for m, s in cmp.silhouettes.items())
    print(f"K = 4 mean silhouettes: {sils} -> {cmp.method}\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "demo.conf"))
    ap.add_argument("--per-regime", type=int, default=125)
    args = ap.parse_args()

    cfg = load_config(args.config)
    states, _ = planted_states(args.per_regime, cfg.seed, cfg.t_max)
    report("planted regimes", states, cfg)
    train_data, _ = generate_split(cfg)
    report("encounter training split", train_data.dataset.stacked(), cfg)


if __name__ == "__main__":
    main()
