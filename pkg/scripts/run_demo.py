"""Run the full demo pipeline and print the headline numbers.

    python scripts/run_demo.py [--config configs/demo.conf] [--out out/demo]
"""

import argparse
import time
from pathlib import Path

from prlp.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "demo.conf"))
    ap.add_argument("--out", default="out/demo")
    args = ap.parse_args()

    t0 = time.perf_counter()
    code = cli_main(["evaluate", "--config", args.config, "--out", args.out, "--log-level", "INFO"])
    if code:
        raise SystemExit(code)
    print(f"finished in {time.perf_counter() - t0:.0f}s\n")
    out = Path(args.out)
    print((out / "summary.txt").read_text())
    print("confusion (rows: output, columns: target)")
    print((out / "confusion.csv").read_text())


if __name__ == "__main__":
    main()
