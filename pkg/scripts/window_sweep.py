"""ADE against prediction window length, LSTM vs constant-velocity extrapolation.

Trains one LSTM per T_pred on the training split and scores it on the
held-out split, overall and on turning / hesitating encounters.

    python scripts/window_sweep.py --windows 1,2,3,4,5,6,7,8
"""

import argparse
import csv
import sys
from pathlib import Path

from prlp.config import load_config
from prlp.lstm import train, window_ades
from prlp.pipeline import generate_split
from prlp.rng import derive_seed
from prlp.sim import Behavior, Scenario

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "demo.conf"))
    ap.add_argument("--windows", default="1,2,3,4,5,6,7,8")
    ap.add_argument("--epochs", type=int)
    args = ap.parse_args()

    cfg = load_config(args.config, epochs=args.epochs)
    train_data, test_data = generate_split(cfg)
    hard = [tr for e, tr in zip(test_data.encounters, test_data.smoothed)
            if e.scenario is Scenario.TURNING_RIGHT or e.behavior is Behavior.CROSS_WITH_HESITATION]

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t_pred", "ade_lstm", "ade_cv", "ade_lstm_hard", "ade_cv_hard"])
    for t_pred in (int(v) for v in args.windows.split(",")):
        model = train(train_data.smoothed, cfg.train_config(t_pred=t_pred, rng_seed=derive_seed(cfg.seed, "lstm", t_pred))).model
        le, ce = window_ades(model, test_data.smoothed, t_pred)
        lh, ch = window_ades(model, hard, t_pred)
        w.writerow([t_pred, f"{le.mean():.4f}", f"{ce.mean():.4f}", f"{lh.mean():.4f}", f"{ch.mean():.4f}"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
