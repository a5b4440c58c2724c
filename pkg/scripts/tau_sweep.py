"""Run the communication-period sweep and print the measured metric next to the bound."""
import argparse
import csv
from pathlib import Path

from coopsgd.harness import run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "tau_sweep.toml"))
    ap.add_argument("--out", default="runs/tau_sweep")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    run_experiment(args.config, args.out, args.jobs)
    with open(Path(args.out) / "comparison.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'tau':>5} {'seed':>5} {'measured':>12} {'bound':>12} {'satisfied':>9}")
    for r in rows:
        print(f"{r['tau']:>5} {r['seed']:>5} {float(r['measured']):12.5f} {float(r['bound']):12.5f} "
              f"{r['satisfied'] or '-':>9}")


if __name__ == "__main__":
    main()
