import numpy as np
import pytest

from regdbn.dbn import DbnModel, PretrainConfig, pretrain, propagate_up, train_layer, unfold
from regdbn.errors import DimensionError, RejectedInputError, SchemaError
from regdbn.finetune import forward
from regdbn.numerics import RngStream, Scaler
from regdbn.models import Regressor
from regdbn.rbm import ActivationParams, ContinuousRbm, Mode, mean_hidden
from regdbn.serialize import from_dict, load_model, save_model, to_dict


def data(n=120, d=6, seed=0):
    return RngStream(seed).uniform(size=(n, d))


def test_initialize_shapes_and_determinism():
    a = DbnModel.initialize([6, 10, 10], RngStream(1))
    b = DbnModel.initialize([6, 10, 10], RngStream(1))
    assert a.layer_sizes == [6, 10, 10]
    assert a.layers[0].weights.shape == (6, 10) and a.layers[1].weights.shape == (10, 10)
    for x, y in zip(a.layers, b.layers):
        assert np.array_equal(x.weights, y.weights)
    assert not np.array_equal(a.layers[1].weights[:6], a.layers[0].weights)


def test_mismatched_layers_rejected():
    l1 = ContinuousRbm.initialize(3, 4, RngStream(0))
    l2 = ContinuousRbm.initialize(5, 2, RngStream(0))
    with pytest.raises(DimensionError):
        DbnModel((l1, l2))
    with pytest.raises(RejectedInputError):
        DbnModel.initialize([4], RngStream(0))


def test_single_epoch_matches_manual_layers():
    x = data()
    cfg = PretrainConfig(epochs=1, learning_rate=0.5, batch_size=32, seed=3)
    dbn = DbnModel.initialize([6, 5, 4], RngStream(2))
    res = pretrain(dbn, x, cfg)
    root = RngStream(3)
    l0, _ = train_layer(dbn.layers[0], x, cfg, root.child("layer0"))
    l1, _ = train_layer(dbn.layers[1], mean_hidden(l0, x), cfg, root.child("layer1"))
    assert np.array_equal(res.model.layers[0].weights, l0.weights)
    assert np.array_equal(res.model.layers[1].weights, l1.weights)
    assert np.array_equal(res.model.layers[1].hidden_bias, l1.hidden_bias)


def test_greedy_lower_layers_frozen():
    # training a deeper stack leaves the first layer identical to a one-layer run
    x = data()
    cfg = PretrainConfig(epochs=3, batch_size=40, seed=4)
    deep = pretrain(DbnModel.initialize([6, 5, 4], RngStream(5)), x, cfg)
    shallow = pretrain(DbnModel.initialize([6, 5], RngStream(5)), x, cfg)
    assert np.array_equal(deep.model.layers[0].weights, shallow.model.layers[0].weights)


def test_history_shape_and_descent():
    x = data(300)
    res = pretrain(DbnModel.initialize([6, 8, 8], RngStream(6)), x,
                   PretrainConfig(epochs=15, batch_size=30, seed=7))
    assert [len(h) for h in res.history] == [15, 15]
    for h in res.history:
        assert h[-1] < h[0]


def test_binary_mode_pretraining_runs():
    x = (data(100) > 0.5).astype(float)
    dbn = DbnModel.initialize([6, 4], RngStream(8), mode=Mode.BINARY)
    res = pretrain(dbn, x, PretrainConfig(epochs=5, batch_size=20, seed=1, binarize_hidden=True))
    assert res.model.layers[0].is_finite()


def test_pretrain_is_deterministic():
    x = data()
    cfg = PretrainConfig(epochs=2, batch_size=25, seed=9)
    a = pretrain(DbnModel.initialize([6, 4, 3], RngStream(1)), x, cfg)
    b = pretrain(DbnModel.initialize([6, 4, 3], RngStream(1)), x, cfg)
    assert a.history == b.history
    assert np.array_equal(a.model.layers[1].weights, b.model.layers[1].weights)


def test_pretrain_input_validation():
    dbn = DbnModel.initialize([6, 4], RngStream(0))
    with pytest.raises(RejectedInputError):
        pretrain(dbn, data() * 2, PretrainConfig())
    with pytest.raises(DimensionError):
        pretrain(dbn, data(d=5), PretrainConfig())
    with pytest.raises(RejectedInputError):
        PretrainConfig(learning_rate=11)


def test_propagate_up_examples():
    rbm = ContinuousRbm(np.zeros((2, 3)), np.zeros(2), np.zeros(3), ActivationParams(), Mode.CONTINUOUS)
    out = propagate_up(DbnModel((rbm,)), [[0.3, 0.9]])
    assert np.array_equal(out, np.full((1, 3), 0.5))
    dbn = DbnModel.initialize([6, 5, 4], RngStream(3))
    x = data(7)
    assert np.array_equal(propagate_up(dbn, x), mean_hidden(dbn.layers[1], mean_hidden(dbn.layers[0], x)))


def test_unfold_copies_stack():
    dbn = DbnModel.initialize([6, 5, 4], RngStream(4))
    net = unfold(dbn, RngStream(5))
    assert list(net.structure) == [6, 5, 4, 1]
    for rbm, w, b in zip(dbn.layers, net.hidden_weights, net.hidden_biases):
        assert np.array_equal(rbm.weights, w) and np.array_equal(rbm.hidden_bias, b)
    assert net.output_bias == 0.0
    assert net.activation.sigma == 0.0
    x = data(5)
    expected = propagate_up(dbn, x) @ net.output_weights
    assert np.allclose(forward(net, x), expected, rtol=1e-14)


def test_unfold_is_deterministic_and_independent():
    dbn = DbnModel.initialize([6, 5], RngStream(4))
    a, b = unfold(dbn, RngStream(6)), unfold(dbn, RngStream(6))
    assert np.array_equal(a.flatten(), b.flatten())
    a.hidden_weights[0][0, 0] = 99.0
    assert dbn.layers[0].weights[0, 0] != 99.0


def test_serialization_roundtrip_bit_exact(tmp_path):
    dbn = pretrain(DbnModel.initialize([6, 5, 4], RngStream(7)), data(),
                   PretrainConfig(epochs=2, seed=2)).model
    save_model(dbn, tmp_path / "dbn.json")
    again = load_model(tmp_path / "dbn.json")
    for a, b in zip(dbn.layers, again.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.visible_bias, b.visible_bias)
        assert a.activation == b.activation and a.mode is b.mode

    net = unfold(dbn, RngStream(1))
    reg = Regressor(net, Scaler(np.zeros(6), np.ones(6) * 3), Scaler(np.array([0.0]), np.array([40.0])))
    save_model(reg, tmp_path / "reg.json")
    back = load_model(tmp_path / "reg.json")
    x = data(9) * 3
    assert np.array_equal(reg(x), back(x))
    assert np.array_equal(back.net.flatten(), net.flatten())


def test_unknown_format_rejected(tmp_path):
    d = to_dict(DbnModel.initialize([2, 2], RngStream(0)))
    with pytest.raises(SchemaError):
        from_dict({**d, "format_version": 2})
    with pytest.raises(SchemaError):
        from_dict({**d, "kind": "tree"})
    (tmp_path / "bad.json").write_text("not json")
    with pytest.raises(SchemaError):
        load_model(tmp_path / "bad.json")
