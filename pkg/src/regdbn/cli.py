"""Command line: ``regdbn synth | train | benchmark | predict``.

Failures print one line ``error: <category>: <message>`` on stderr and exit
with status 1 (2 for usage errors, 3 for I/O errors).

Every ``train`` and ``benchmark`` run writes ``manifest.txt`` into ``--out``:
a ``# regdbn manifest v1`` header followed by ``key = value`` lines, one per
resolved option.  ``regdbn benchmark --manifest FILE`` replays a run.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import PRESET_SPLITS, Dataset, load_csv, preset_spec, split_by_year, synthesize, write_csv
from .errors import RegDbnError, RejectedInputError
from .evaluation import (bootstrap_experiment, detail_to_csv, parse_fraction_grid, report_to_csv)
from .finetune import FineTuneConfig, history_to_csv
from .baselines import KernelModel, NbModel
from .models import BayesNnBuilder, KrBuilder, KrPredictor, NbBuilder, NbPredictor, RegDbnBuilder
from .numerics import RngStream
from .rbm import ActivationParams
from .serialize import load_model, save_model

log = logging.getLogger("regdbn")

PRESETS = {
    "case1": {"structure": "6-10-10-1", "pretrain_lr": 1.0, "pretrain_epochs": 20,
              "finetune_epochs": 1000, "fractions": "5:100:5"},
    "case2": {"structure": "16-30-30-1", "pretrain_lr": 2.0, "pretrain_epochs": 50,
              "finetune_epochs": 500, "fractions": "1:100:1"},
}
MODEL_NAMES = ("nb", "kr", "bayesnn", "regdbn")
MANIFEST_HEADER = "# regdbn manifest v1"

# options recorded in a benchmark manifest, with their argparse destinations
BENCH_KEYS = ("data", "synth", "synth_seed", "target", "year_column", "train_years", "test_years",
              "train_file", "test_file", "preset", "models", "structure", "pretrain_epochs",
              "finetune_epochs", "pretrain_lr", "finetune_lr", "batch_size", "alpha", "beta",
              "reestimate", "reestimate_interval", "theta_low", "theta_high", "sigma",
              "noise_control", "binarize_hidden", "bandwidth", "fractions", "reps", "seed",
              "workers")


class IOFailure(RegDbnError):
    category = "io"


def parse_structure(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(p) for p in str(text).split("-"))
    except ValueError:
        raise RejectedInputError(f"bad structure {text!r}; expected e.g. 6-10-10-1") from None
    if len(sizes) < 3 or sizes[-1] != 1 or min(sizes) < 1:
        raise RejectedInputError(f"structure {text!r} must be input-hidden...-1")
    return sizes


def parse_years(text: str) -> list[int]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = (int(p) for p in part.split("-"))
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    return out


def _add_model_options(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=sorted(PRESETS), default="case1",
                   help="case-study defaults for structure, learning rate and epochs")
    p.add_argument("--structure", help="layer sizes, e.g. 6-10-10-1")
    p.add_argument("--pretrain-epochs", type=int)
    p.add_argument("--finetune-epochs", type=int)
    p.add_argument("--pretrain-lr", type=float)
    p.add_argument("--finetune-lr", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--reestimate", action="store_true", help="evidence re-estimation of alpha/beta")
    p.add_argument("--reestimate-interval", type=int, default=50)
    p.add_argument("--theta-low", type=float, default=0.0)
    p.add_argument("--theta-high", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--noise-control", type=float, default=1.0)
    p.add_argument("--binarize-hidden", action="store_true")
    p.add_argument("--seed", type=int, default=1)


def _add_data_options(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="CSV with a header row")
    src.add_argument("--synth", choices=sorted(PRESETS), help="generate a synthetic preset in memory")
    p.add_argument("--synth-seed", type=int, default=7)
    p.add_argument("--target", default="target")
    p.add_argument("--year-column", default="year")
    p.add_argument("--train-years")
    p.add_argument("--test-years")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regdbn", description="Regularized DBN crash-count regression.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic crash-count CSV")
    p.add_argument("--preset", choices=sorted(PRESETS), default="case1")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--rows", type=int, help="override the preset row count")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("train", help="train one network and save it")
    _add_data_options(p)
    _add_model_options(p)
    p.add_argument("--model", choices=("regdbn", "bayesnn"), default="regdbn")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("benchmark", help="repeated-subsampling comparison of models")
    _add_data_options(p)
    _add_model_options(p)
    p.add_argument("--train-file")
    p.add_argument("--test-file")
    p.add_argument("--models", default="nb,kr,bayesnn,regdbn")
    p.add_argument("--bandwidth", default="silverman", help="silverman, loocv or a number")
    p.add_argument("--fractions", help="percent grid start:stop:step or a comma list")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--manifest", help="replay the options stored in a manifest")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("predict", help="predict with a saved regressor")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default="target")
    p.add_argument("--year-column", default="year")
    p.add_argument("--out", required=True)
    return parser


def _resolve_presets(args):
    preset = PRESETS[args.preset]
    for key in ("structure", "pretrain_lr", "pretrain_epochs", "finetune_epochs"):
        if getattr(args, key, None) is None:
            setattr(args, key, preset[key])
    if hasattr(args, "fractions") and args.fractions is None:
        args.fractions = preset["fractions"]


def _activation(args) -> ActivationParams:
    return ActivationParams(args.theta_low, args.theta_high, args.sigma, args.noise_control)


def _finetune_config(args) -> FineTuneConfig:
    return FineTuneConfig(args.alpha, args.beta, args.finetune_lr, args.finetune_epochs,
                          args.reestimate, args.reestimate_interval, args.seed)


def _load(args) -> Dataset:
    if getattr(args, "synth", None):
        return synthesize(preset_spec(args.synth, args.synth_seed))
    if not args.data:
        raise RejectedInputError("give --data FILE or --synth PRESET")
    year = args.year_column if args.train_years or args.test_years or _has_column(args.data, args.year_column) else None
    return load_csv(args.data, args.target, year)


def _has_column(path, name) -> bool:
    with open(path, encoding="utf-8") as fh:
        return name in [h.strip() for h in fh.readline().split(",")]


def _write_manifest(path: Path, command: str, values: dict):
    lines = [MANIFEST_HEADER, f"command = {command}"]
    for key in sorted(values):
        v = values[key]
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{key} = {v}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise RejectedInputError(f"{path}: malformed manifest line {line!r}")
        out[key.strip()] = value.strip()
    return out


def manifest_argv(manifest: dict) -> list[str]:
    argv = [manifest.get("command", "benchmark")]
    for key, value in manifest.items():
        if key == "command":
            continue
        flag = "--" + key.replace("_", "-")
        if value in ("true", "false"):
            if value == "true":
                argv.append(flag)
        else:
            argv += [flag, value]
    return argv


def _model_builders(args, names):
    structure = parse_structure(args.structure)
    ft = _finetune_config(args)
    act = _activation(args)
    table = {
        "nb": lambda: NbBuilder(),
        "kr": lambda: KrBuilder(_bandwidth(args.bandwidth)),
        "bayesnn": lambda: BayesNnBuilder(structure, act, ft),
        "regdbn": lambda: RegDbnBuilder(structure, args.pretrain_epochs, args.pretrain_lr,
                                        args.batch_size, act, args.binarize_hidden, ft),
    }
    unknown = [n for n in names if n not in table]
    if unknown:
        raise RejectedInputError(f"unknown models {unknown}; choose from {', '.join(MODEL_NAMES)}")
    return [table[n]() for n in names]


def _bandwidth(text):
    try:
        return float(text)
    except ValueError:
        return text


def _split(args, ds: Dataset):
    if args.train_years or args.test_years:
        if not (args.train_years and args.test_years):
            raise RejectedInputError("give both --train-years and --test-years")
        return split_by_year(ds, parse_years(args.train_years), parse_years(args.test_years))
    preset_name = getattr(args, "synth", None) or args.preset
    train_years, test_years = PRESET_SPLITS[preset_name]
    return split_by_year(ds, train_years, test_years)


def cmd_synth(args) -> int:
    spec = preset_spec(args.preset, args.seed)
    if args.rows:
        spec = replace(spec, n_rows=args.rows, year_counts=None)
    ds = synthesize(spec)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(ds, out)
        truth = {"preset": args.preset, **asdict(spec)}
        out.with_suffix(out.suffix + ".truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    except OSError as exc:
        raise IOFailure(str(exc)) from None
    log.info("wrote %d rows x %d features to %s", len(ds), ds.features.shape[1], out)
    return 0


def cmd_train(args) -> int:
    _resolve_presets(args)
    ds = _load(args)
    if args.train_years:
        if ds.years is None:
            raise RejectedInputError("--train-years needs a year column")
        ds = ds.take(np.flatnonzero(np.isin(ds.years, parse_years(args.train_years))))
        if len(ds) == 0:
            raise RejectedInputError("no rows fall in --train-years")
    args.bandwidth = "silverman"
    builder = _model_builders(args, [args.model])[0]
    reg = builder.fit(ds, RngStream(args.seed).child("train"))
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_model(reg, out / "model.json")
        (out / "finetune_history.csv").write_text(history_to_csv(reg.history))
        if reg.pretrain_history:
            rows = ["layer,epoch,reconstruction_error"]
            for k, errs in enumerate(reg.pretrain_history, start=1):
                rows += [f"{k},{e},{v!r}" for e, v in enumerate(errs, start=1)]
            (out / "pretrain_history.csv").write_text("\n".join(rows) + "\n")
        values = {k: getattr(args, k) for k in BENCH_KEYS if hasattr(args, k)}
        values["model"] = args.model
        _write_manifest(out / "manifest.txt", "train", values)
    except OSError as exc:
        raise IOFailure(str(exc)) from None
    return 0


def cmd_benchmark(args, parser) -> int:
    if args.manifest:
        manifest = read_manifest(args.manifest)
        if manifest.get("command", "benchmark") != "benchmark":
            raise RejectedInputError("manifest is not from a benchmark run")
        replay = parser.parse_args(manifest_argv(manifest))
        replay.out = args.out or str(Path(args.manifest).parent)
        args = replay
    if not args.out:
        raise RejectedInputError("--out is required")
    _resolve_presets(args)
    if args.train_file or args.test_file:
        if not (args.train_file and args.test_file):
            raise RejectedInputError("give both --train-file and --test-file")
        train = load_csv(args.train_file, args.target)
        test = load_csv(args.test_file, args.target)
    else:
        train, test = _split(args, _load(args))
    names = [n.strip() for n in args.models.split(",") if n.strip()]
    builders = _model_builders(args, names)
    fractions = parse_fraction_grid(args.fractions)
    report = bootstrap_experiment(builders, train, test, fractions, args.reps, args.seed,
                                  workers=args.workers)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report_to_csv(report))
        (out / "detail.csv").write_text(detail_to_csv(report))
        _write_manifest(out / "manifest.txt", "benchmark",
                        {k: getattr(args, k) for k in BENCH_KEYS})
    except OSError as exc:
        raise IOFailure(str(exc)) from None
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if isinstance(model, NbModel):
        model = NbPredictor(model)
    elif isinstance(model, KernelModel):
        model = KrPredictor(model)
    elif not callable(model):
        raise RejectedInputError(f"{args.model} does not hold a predictive model")
    ds = load_csv(args.data, args.target, args.year_column if _has_column(args.data, args.year_column) else None)
    pred = np.asarray(model(ds.features)).reshape(-1)
    try:
        Path(args.out).write_text("prediction\n" + "".join(f"{v!r}\n" for v in pred.tolist()))
    except OSError as exc:
        raise IOFailure(str(exc)) from None
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "benchmark":
            return cmd_benchmark(args, parser)
        return cmd_predict(args)
    except RegDbnError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 3 if isinstance(exc, IOFailure) else 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
