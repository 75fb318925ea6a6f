"""Per-layer reconstruction error during pretraining, and the fine-tuning
objective afterwards, on the synthetic case1 training years.

    python3 scripts/pretrain_curves.py --out runs/curves
"""
import argparse
from pathlib import Path

from regdbn.data import PRESET_SPLITS, preset_spec, split_by_year, synthesize
from regdbn.finetune import FineTuneConfig, history_to_csv
from regdbn.models import RegDbnBuilder
from regdbn.numerics import RngStream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pretrain-epochs", type=int, default=20)
    ap.add_argument("--finetune-epochs", type=int, default=1000)
    ap.add_argument("--reestimate", action="store_true")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="runs/curves")
    args = ap.parse_args()

    train, _ = split_by_year(synthesize(preset_spec("case1")), *PRESET_SPLITS["case1"])
    builder = RegDbnBuilder((6, 10, 10, 1), args.pretrain_epochs, 1.0,
                            finetune=FineTuneConfig(epochs=args.finetune_epochs,
                                                    reestimate=args.reestimate))
    reg = builder.fit(train, RngStream(args.seed))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["layer,epoch,reconstruction_error"]
    for k, errs in enumerate(reg.pretrain_history, start=1):
        rows += [f"{k},{e},{v!r}" for e, v in enumerate(errs, start=1)]
        print(f"layer {k}: {errs[0]:.5f} -> {errs[-1]:.5f}")
    (out / "pretrain_history.csv").write_text("\n".join(rows) + "\n")
    (out / "finetune_history.csv").write_text(history_to_csv(reg.history))
    h = reg.history
    print(f"fine-tuning F_W: {h[0].F_W:.5f} -> {h[-1].F_W:.5f} over {len(h)} epochs")


if __name__ == "__main__":
    main()
