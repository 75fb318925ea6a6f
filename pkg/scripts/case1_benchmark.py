"""Learning curves on the synthetic case1 preset for all four models.

Writes report.csv / detail.csv and prints the 100% comparison with the NB
improvement percentages.

    python3 scripts/case1_benchmark.py --reps 10 --fractions 5:100:5 --out runs/case1
"""
import argparse
from pathlib import Path

from regdbn.data import PRESET_SPLITS, preset_spec, split_by_year, synthesize
from regdbn.evaluation import (bootstrap_experiment, detail_to_csv, improvement_pct,
                               parse_fraction_grid, report_to_csv)
from regdbn.finetune import FineTuneConfig
from regdbn.models import BayesNnBuilder, KrBuilder, NbBuilder, RegDbnBuilder


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--fractions", default="5,25,50,75,100")
    ap.add_argument("--finetune-epochs", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--synth-seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/case1")
    args = ap.parse_args()

    ds = synthesize(preset_spec("case1", args.synth_seed))
    train, test = split_by_year(ds, *PRESET_SPLITS["case1"])
    ft = FineTuneConfig(epochs=args.finetune_epochs)
    models = [NbBuilder(), KrBuilder(), BayesNnBuilder((6, 10, 10, 1), finetune=ft),
              RegDbnBuilder((6, 10, 10, 1), 20, 1.0, finetune=ft)]
    fractions = parse_fraction_grid(args.fractions)
    report = bootstrap_experiment(models, train, test, fractions, args.reps, args.seed, args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_to_csv(report))
    (out / "detail.csv").write_text(detail_to_csv(report))

    full = fractions[-1]
    base = report.cell("nb", full)
    print(f"{'model':8s} {'MAE':>8s} {'%impr':>7s} {'RMSE':>8s} {'%impr':>7s}")
    for m in report.models:
        c = report.cell(m, full)
        print(f"{m:8s} {c.mae_avg:8.3f} {improvement_pct(base.mae_avg, c.mae_avg):7.2f} "
              f"{c.rmse_avg:8.3f} {improvement_pct(base.rmse_avg, c.rmse_avg):7.2f}")
    print(f"wrote {out / 'report.csv'}")


if __name__ == "__main__":
    main()
