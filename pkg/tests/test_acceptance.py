"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL  ...`` line (also when
pytest captures output).  Run just this file with::

    pytest -v tests/test_acceptance.py

or directly with ``python3 tests/test_acceptance.py``.
"""
import sys
import time

import numpy as np
import pytest

from regdbn.cli import main as cli_main
from regdbn.data import PRESET_SPLITS, FeatureSpec, SynthSpec, preset_spec, split_by_year, synthesize
from regdbn.dbn import DbnModel, PretrainConfig, pretrain
from regdbn.evaluation import bootstrap_experiment, improvement_pct, mae, rmse
from regdbn.baselines import fit_nb
from regdbn.finetune import FineTuneConfig, gradient, objective, random_net, train, train_mse
from regdbn.models import RegDbnBuilder
from regdbn.numerics import RngStream, finite_diff_gradient, fit_scaler
from regdbn.rbm import ContinuousRbm, Mode, chain_gradient, exact_loglik, exact_loglik_gradient, gibbs_chain

_capture = None


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    global _capture
    _capture = capsys
    yield
    _capture = None


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    if _capture is not None:
        with _capture.disabled():
            print("\n" + line)
    else:
        print(line)
    assert ok, line


# ------------------------------------------------------------ 1


def scaled_max_error(analytic, numeric):
    # element-wise error over the largest gradient component; see the ledger
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(analytic)), np.max(np.abs(numeric))))


def test_criterion_1_gradient_check():
    t0 = time.perf_counter()
    root = RngStream(101)
    worst = 0.0
    for i in range(50):
        s = root.child(f"net{i}")
        net = random_net([6, 10, 10, 1], s)
        net = net.with_flat(s.normal(net.flatten().size))
        x, y = s.uniform(size=(32, 6)), s.uniform(size=32)
        alpha, beta = 1.0, 0.3
        g = gradient(net, x, y, alpha, beta)
        fd = finite_diff_gradient(lambda p: objective(net.with_flat(p), x, y, alpha, beta)[0],
                                  net.flatten(), 1e-6)
        worst = max(worst, scaled_max_error(g, fd))
    elapsed = time.perf_counter() - t0
    report(1, worst < 1e-5 and elapsed < 30,
           f"max relative error {worst:.2e} (< 1e-5), {elapsed:.1f} s (< 30 s)")


# ------------------------------------------------------------ 2


def _binary_rbm(p):
    return ContinuousRbm(p[:4].reshape(2, 2), p[4:6].copy(), p[6:8].copy(), mode=Mode.BINARY)


def test_criterion_2_exact_likelihood_oracle():
    t0 = time.perf_counter()
    root = RngStream(202)
    worst_fd, aligned = 0.0, 0
    for i in range(100):
        s = root.child(f"rbm{i}")
        params = s.normal(8, scale=float(s.uniform(0.5, 2.0)))
        rbm = _binary_rbm(params)
        rows = (s.uniform(size=(4, 2)) < 0.5).astype(float)
        exact = exact_loglik_gradient(rbm, rows).flatten()
        fd = finite_diff_gradient(lambda p: exact_loglik(_binary_rbm(p), rows), params, 1e-6)
        worst_fd = max(worst_fd, float(np.max(np.abs(exact - fd))))
        chains = np.tile(rows, (125, 1))  # 500 chains
        cd = chain_gradient(gibbs_chain(rbm, chains, s.child("cd"))).flatten()
        aligned += float(cd @ exact) > 0
    elapsed = time.perf_counter() - t0
    report(2, worst_fd < 1e-6 and aligned >= 95 and elapsed < 60,
           f"exact vs FD max abs diff {worst_fd:.2e} (< 1e-6), CD-1 aligned in {aligned}/100 (>= 95), "
           f"{elapsed:.1f} s (< 60 s)")


# ------------------------------------------------------------ 3


def test_criterion_3_degenerates_to_backprop():
    train_ds, _ = split_by_year(synthesize(preset_spec("case1")), *PRESET_SPLITS["case1"])
    x = fit_scaler(train_ds.features).apply(train_ds.features)
    y = fit_scaler(train_ds.targets).apply(train_ds.targets)
    net = random_net([6, 10, 10, 1], RngStream(303))
    same = True
    a, b = net, net
    for epoch in range(100):
        a, _ = train(a, x, y, FineTuneConfig(alpha=1.0, beta=0.0, learning_rate=0.5, epochs=1))
        b = train_mse(b, x, y, 0.5, 1)
        same &= bool(np.array_equal(a.flatten(), b.flatten()))
    whole, _ = train(net, x, y, FineTuneConfig(alpha=1.0, beta=0.0, learning_rate=0.5, epochs=100))
    same &= bool(np.array_equal(whole.flatten(), b.flatten()))
    report(3, same, "alpha=1, beta=0 trajectory bit-identical to plain MSE descent over 100 epochs")


# ------------------------------------------------------------ 4


def test_criterion_4_improvement_arithmetic():
    mae_rows = [((11.80, 8.85), 25.00), ((11.80, 8.60), 27.12), ((11.80, 8.00), 32.20)]
    got = [improvement_pct(base, model) for (base, model), _ in mae_rows]
    ok = all(abs(g - want) <= 0.01 for g, (_, want) in zip(got, mae_rows))
    # the printed 42.67 recomputes to 42.71; the other RMSE cells agree to 0.01
    rmse_cells = [improvement_pct(26.60, e) for e in (17.85, 16.51, 15.24)]
    ok_rmse = (abs(rmse_cells[0] - 32.89) <= 0.01 and abs(rmse_cells[1] - 37.93) <= 0.01
               and abs(rmse_cells[2] - 42.67) <= 0.05)
    report(4, ok and ok_rmse,
           "MAE row " + ", ".join(f"{g:.2f}" for g in got) + " (25.00, 27.12, 32.20 +-0.01); "
           "RMSE row " + ", ".join(f"{g:.2f}" for g in rmse_cells) + " (32.89, 37.93 +-0.01; 42.67 +-0.05)")


# ------------------------------------------------------------ 5


def test_criterion_5_metric_properties():
    g = np.random.default_rng(505)
    ok = True
    for i in range(1000):
        n = int(g.integers(1, 50))
        o = g.poisson(5, n).astype(float)
        p = o.copy() if i % 10 == 0 else o + g.normal(0, 3, n) * (g.uniform(size=n) < 0.7)
        m, r = mae(p, o), rmse(p, o)
        identical = bool(np.array_equal(p, o))
        ok &= m <= r * (1 + 1e-15)
        ok &= (m == 0) == identical and (r == 0) == identical
    report(5, ok, "MAE <= RMSE and zero iff identical over 1000 random pairs")


# ------------------------------------------------------------ 6


def test_criterion_6_nb_recovery():
    t0 = time.perf_counter()
    coef = (0.4, 0.3, -0.5, 0.2)
    spec = SynthSpec(5000, tuple(FeatureSpec(f"x{i}", -2.0, 2.0) for i in range(3)), coef, 2.0, seed=606)
    ds = synthesize(spec)
    m = fit_nb(ds.features, ds.targets)
    err = np.abs(m.coefficients - np.array(coef))
    k_rel = abs(m.dispersion - 2.0) / 2.0
    elapsed = time.perf_counter() - t0
    report(6, bool(np.all(err <= 0.05)) and k_rel <= 0.2 and elapsed < 10,
           f"max coefficient error {err.max():.3f} (<= 0.05), dispersion {m.dispersion:.3f} "
           f"({100 * k_rel:.1f}% off, <= 20%), {elapsed:.1f} s (< 10 s)")


# ------------------------------------------------------------ 7


@pytest.mark.slow
def test_criterion_7_learning_curve_shape():
    t0 = time.perf_counter()
    train_ds, test_ds = split_by_year(synthesize(preset_spec("case1")), *PRESET_SPLITS["case1"])
    builder = RegDbnBuilder((6, 10, 10, 1), pretrain_epochs=20, pretrain_lr=1.0,
                            finetune=FineTuneConfig(epochs=1000))
    rep = bootstrap_experiment([builder], train_ds, test_ds, [0.05, 0.25, 0.5, 1.0], reps=10, seed=707)
    lo, hi = rep.cell("regdbn", 0.05), rep.cell("regdbn", 1.0)
    elapsed = time.perf_counter() - t0
    ok = hi.mae_avg < lo.mae_avg and (hi.mae_max - hi.mae_min) <= (lo.mae_max - lo.mae_min)
    report(7, ok and elapsed < 900,
           f"avg MAE 5% {lo.mae_avg:.3f} -> 100% {hi.mae_avg:.3f}; spread {lo.mae_max - lo.mae_min:.3f} "
           f"-> {hi.mae_max - hi.mae_min:.3f}; {elapsed:.0f} s (< 900 s)")


# ------------------------------------------------------------ 8


def test_criterion_8_benchmark_determinism(tmp_path):
    first = tmp_path / "first"
    args = ["benchmark", "--synth", "case1", "--models", "nb,kr,bayesnn,regdbn", "--fractions", "5,20",
            "--reps", "2", "--pretrain-epochs", "3", "--finetune-epochs", "50", "--seed", "808",
            "--out", str(first)]
    assert cli_main(args) == 0
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli_main(["benchmark", "--manifest", str(first / "manifest.txt"), "--out", str(out)]) == 0
        runs.append((out / "report.csv").read_bytes())
    ok = runs[0] == runs[1] == (first / "report.csv").read_bytes()
    report(8, ok, "two replays of one manifest give byte-identical report.csv")


# ------------------------------------------------------------ 9


def test_criterion_9_reconstruction_descent():
    train_ds, _ = split_by_year(synthesize(preset_spec("case1")), *PRESET_SPLITS["case1"])
    x = fit_scaler(train_ds.features).apply(train_ds.features)
    dbn = DbnModel.initialize([6, 10, 10], RngStream(909))
    res = pretrain(dbn, x, PretrainConfig(epochs=20, learning_rate=1.0, batch_size=100, seed=909))
    pairs = [(h[0], h[-1]) for h in res.history]
    ok = len(pairs) == 2 and all(len(h) == 20 for h in res.history) and all(b < a for a, b in pairs)
    report(9, ok, "; ".join(f"layer {k + 1} {a:.4g} -> {b:.4g}" for k, (a, b) in enumerate(pairs)))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
