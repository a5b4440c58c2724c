"""Per-round versus one-off client selection on label-skewed logistic regression."""
import argparse
from pathlib import Path

from coopsgd.config import ExperimentConfig
from coopsgd.harness import compare_selection_modes

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "selection_modes.toml"))
    ap.add_argument("--out", default="runs/selection_modes")
    ap.add_argument("--alpha", type=float, nargs="*", default=[0.6],
                    help="Dirichlet concentrations to compare (one run set per value)")
    args = ap.parse_args()

    base = ExperimentConfig.load(args.config)
    for alpha in args.alpha:
        cfg = base.with_overrides(objective={"alpha": alpha})
        per_round, static = compare_selection_modes(cfg, Path(args.out) / f"alpha_{alpha:g}")
        gap = static.median_final_loss - per_round.median_final_loss
        print(f"alpha={alpha:<6g} per-round {per_round.median_final_loss:.5f}  "
              f"static {static.median_final_loss:.5f}  gap {gap:+.5f}")


if __name__ == "__main__":
    main()
