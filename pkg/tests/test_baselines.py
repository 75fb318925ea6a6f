import numpy as np
import pytest
import statsmodels.api as sm

from regdbn.baselines import (KernelModel, NbModel, fit_kr, fit_nb, nb_loglik, predict_kr,
                              predict_nb, silverman_bandwidth, train_bayesian_nn)
from regdbn.data import Dataset
from regdbn.errors import ConvergenceError, DimensionError, RejectedInputError
from regdbn.finetune import FineTuneConfig, random_net, train
from regdbn.models import BayesNnBuilder
from regdbn.numerics import RngStream, fit_scaler


def nb_sample(n, coef, k, seed, spread=1.0):
    g = RngStream(seed).generator
    x = g.uniform(0, spread, size=(n, len(coef) - 1))
    mu = np.exp(coef[0] + x @ np.asarray(coef[1:]))
    y = g.poisson(g.gamma(k, mu / k))
    return x, y


# ------------------------------------------------------------ negative binomial


def test_intercept_only_recovers_mean():
    x, y = nb_sample(500, [1.5, 0.0], 2.0, 1)
    # one feature with zero true slope, then a design with no features at all
    m = fit_nb(x, y)
    assert predict_nb(m, np.full((1, 1), x.mean()))[0] == pytest.approx(y.mean(), rel=0.05)
    m0 = fit_nb(np.empty((y.size, 0)), y)
    assert np.exp(m0.coefficients[0]) == pytest.approx(y.mean(), rel=1e-8)


def test_parameter_recovery():
    coef, k = [1.0, 0.5, -0.3], 2.0
    x, y = nb_sample(5000, coef, k, 2, spread=3.0)
    m = fit_nb(x, y)
    assert np.all(np.abs(m.coefficients - coef) < 0.05)
    assert m.dispersion == pytest.approx(k, rel=0.2)


def test_poisson_limit_matches_glm():
    g = RngStream(3).generator
    x = g.uniform(0, 1, size=(2000, 2))
    y = g.poisson(np.exp(0.7 + 0.4 * x[:, 0] - 0.6 * x[:, 1]))
    m = fit_nb(x, y)
    glm = sm.GLM(y, sm.add_constant(x), family=sm.families.Poisson()).fit()
    mine = predict_nb(m, x)
    ref = glm.predict(sm.add_constant(x))
    assert np.max(np.abs(mine - ref) / ref) < 1e-3


def test_fit_matches_statsmodels_nb():
    x, y = nb_sample(1500, [1.2, 0.8, -0.5], 1.5, 4)
    m = fit_nb(x, y)
    ref = sm.NegativeBinomial(y, sm.add_constant(x), loglike_method="nb2").fit(disp=0, maxiter=200)
    assert np.allclose(m.coefficients, ref.params[:3], atol=1e-4)
    assert 1 / m.dispersion == pytest.approx(ref.params[3], rel=1e-3)
    assert m.loglik == pytest.approx(ref.llf, abs=1e-5)


def test_loglik_trace_is_monotone():
    x, y = nb_sample(800, [0.5, 1.0, 0.3], 0.8, 5)
    trace = []
    m = fit_nb(x, y, trace=trace)
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    assert trace[-1] == m.loglik
    assert nb_loglik(m.coefficients, m.dispersion, x, y) == pytest.approx(m.loglik, rel=1e-12)


def test_predict_nb_examples():
    m = NbModel(np.array([0.0, 1.0, -1.0]), 2.0)
    assert predict_nb(m, [0.0, 0.0]) == 1.0
    assert predict_nb(m, [1.0, 1.0]) == 1.0
    assert predict_nb(m, [1.0, 0.0]) == pytest.approx(np.e, rel=1e-15)
    with pytest.raises(DimensionError):
        predict_nb(m, [1.0])


def test_nb_rejections():
    x = np.ones((10, 1))
    with pytest.raises(RejectedInputError, match="rank"):
        fit_nb(x, np.arange(10))
    with pytest.raises(RejectedInputError):
        fit_nb(np.arange(10.0)[:, None], np.arange(10) - 1)
    with pytest.raises(RejectedInputError):
        fit_nb(np.arange(10.0)[:, None], np.arange(10) + 0.5)
    with pytest.raises(RejectedInputError):
        fit_nb(np.arange(10.0)[:, None], np.zeros(10))


def test_nb_nonconvergence_keeps_last_iterate():
    x, y = nb_sample(300, [1.0, 0.5], 1.0, 6)
    with pytest.raises(ConvergenceError) as info:
        fit_nb(x, y, max_iter=1, tol=0.0)
    assert isinstance(info.value.last, NbModel)


# ------------------------------------------------------------ kernel regression


def test_kr_single_point():
    m = KernelModel(np.array([[0.0]]), np.array([5.0]), np.array([1.0]))
    assert predict_kr(m, [3.0]) == 5.0


def test_kr_midpoint():
    m = fit_kr([[0.0], [2.0]], [1.0, 3.0], 1.0)
    assert predict_kr(m, [1.0]) == pytest.approx(2.0, rel=1e-15)


def test_kr_infinite_bandwidth_gives_mean():
    x, y = RngStream(7).uniform(size=(20, 3)), RngStream(8).uniform(size=20)
    m = fit_kr(x, y, 1e12)
    assert predict_kr(m, x[0]) == pytest.approx(y.mean(), rel=1e-12)


def test_kr_convex_combination():
    s = RngStream(9)
    x, y = s.uniform(size=(50, 2)), s.uniform(-3, 4, 50)
    preds = predict_kr(fit_kr(x, y), s.uniform(-1, 2, size=(40, 2)))
    assert np.all((preds >= y.min()) & (preds <= y.max()))


def test_kr_underflow_falls_back_to_mean():
    m = fit_kr([[0.0], [1.0]], [2.0, 4.0], 1e-3)
    pred, flag = predict_kr(m, [100.0], with_flag=True)
    assert pred == 3.0 and flag
    pred, flag = predict_kr(m, [0.0], with_flag=True)
    assert pred == 2.0 and not flag


def test_kr_chunking_is_transparent():
    s = RngStream(10)
    m = fit_kr(s.uniform(size=(30, 2)), s.uniform(size=30))
    q = s.uniform(size=(25, 2))
    assert np.allclose(predict_kr(m, q, chunk=4), predict_kr(m, q), rtol=1e-14, atol=0)


def test_silverman_bandwidth():
    x = np.column_stack([np.arange(10.0), np.full(10, 2.0)])
    h = silverman_bandwidth(x)
    assert h[0] == pytest.approx(np.std(np.arange(10.0), ddof=1) * (4 / (4 * 10)) ** (1 / 6))
    assert h[1] == 1.0


def test_loocv_picks_from_grid():
    s = RngStream(11)
    x = s.uniform(size=(80, 1))
    y = np.sin(6 * x[:, 0]) + 0.05 * s.normal(80)
    ratio = fit_kr(x, y, "loocv").bandwidth / silverman_bandwidth(x)
    assert np.any(np.isclose(ratio[0], np.geomspace(0.1, 10, 21)))
    with pytest.raises(RejectedInputError):
        fit_kr(x, y, "scott")


# ------------------------------------------------------------ Bayesian NN


def test_random_init_scale():
    net = random_net([400, 300, 1], RngStream(12))
    assert np.var(net.hidden_weights[0]) == pytest.approx(1 / 400, rel=0.05)


def test_bayesnn_uses_shared_trainer():
    s = RngStream(13)
    x = s.uniform(size=(60, 3))
    y = np.round(10 * x[:, 0] + 2 * x[:, 1])
    ds = Dataset(x, y, ["a", "b", "c"])
    cfg = FineTuneConfig(learning_rate=0.3, epochs=40)
    reg = BayesNnBuilder((3, 4, 1), finetune=cfg).fit(ds, RngStream(14))
    net, _ = train(random_net((3, 4, 1), RngStream(14)), fit_scaler(x).apply(x), fit_scaler(y).apply(y), cfg)
    assert np.array_equal(reg.net.flatten(), net.flatten())
    direct, _ = train_bayesian_nn(fit_scaler(x).apply(x), fit_scaler(y).apply(y), (3, 4, 1), cfg,
                                  RngStream(14))
    assert np.array_equal(direct.flatten(), net.flatten())
