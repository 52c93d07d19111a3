import numpy as np
import pytest

from lib.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from lib.nn import NormMode, build_cnn, build_mlp, softmax_cross_entropy
from lib.train import OptimizerState, TrainConfig, freeze_model, train_step
from lib.utils.errors import FormatError, FrozenParameterError, LengthError


@pytest.fixture
def trained_mlp(rng):
    model = build_mlp(3, [6], 2, seed=7)
    x = rng.standard_normal((8, 3))
    y = rng.integers(0, 2, 8)
    state = OptimizerState.for_parameters(model.parameters())
    for _ in range(5):
        train_step(model, x, y, TrainConfig(), state, 0.1)
    return model, x


def test_trainable_round_trip(tmp_path, trained_mlp):
    model, x = trained_mlp
    path = str(tmp_path / "model.aonkit")
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert not loaded.frozen
    assert np.array_equal(loaded.forward(x, training=False), model.forward(x, training=False))
    for a, b in zip(loaded.parameters(), model.parameters()):
        assert a.name == b.name and np.array_equal(a.value, b.value)

    # the restored power iteration state keeps training in lockstep
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    for net in (model, loaded):
        train_step(net, x, y, TrainConfig(), OptimizerState.for_parameters(net.parameters()), 0.1)
    for a, b in zip(loaded.parameters(), model.parameters()):
        assert np.array_equal(a.value, b.value)


def test_frozen_round_trip(tmp_path, trained_mlp):
    model, x = trained_mlp
    expected = model.forward(x, training=False)
    freeze_model(model)
    path = str(tmp_path / "frozen.aonkit")
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert loaded.frozen
    assert np.array_equal(loaded.forward(x, training=False), expected)
    assert all(layer.is_frozen for layer in loaded.weight_layers())


def test_plain_cnn_round_trip(tmp_path, rng):
    model = build_cnn((1, 6, 6), [2], 3, norm_mode=NormMode.PLAIN, use_bias=True)
    x = rng.standard_normal((2, 1, 6, 6))
    model.forward(x, training=True)
    path = str(tmp_path / "cnn.aonkit")
    save_checkpoint(path, model)
    loaded = load_checkpoint(path)
    assert [layer.kind for layer in loaded.layers] == [layer.kind for layer in model.layers]
    assert np.array_equal(loaded.forward(x, training=False), model.forward(x, training=False))


def test_bad_magic(tmp_path, trained_mlp):
    model, _ = trained_mlp
    path = tmp_path / "model.aonkit"
    save_checkpoint(str(path), model)
    data = path.read_bytes()
    path.write_bytes(b"NOTAKIT0" + data[len(MAGIC):])
    with pytest.raises(FormatError):
        load_checkpoint(str(path))


def test_truncated_payload(tmp_path, trained_mlp):
    model, _ = trained_mlp
    path = tmp_path / "model.aonkit"
    save_checkpoint(str(path), model)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(LengthError):
        load_checkpoint(str(path))
    path.write_bytes(data[:5])
    with pytest.raises(LengthError):
        load_checkpoint(str(path))


def test_frozen_checkpoint_rejects_backward(tmp_path, trained_mlp):
    model, x = trained_mlp
    path = str(tmp_path / "frozen.aonkit")
    save_checkpoint(path, freeze_model(model))
    loaded = load_checkpoint(path)
    _, grad = softmax_cross_entropy(loaded.forward(x, training=False), np.zeros(8, dtype=np.int64))
    with pytest.raises(FrozenParameterError):
        loaded.backward(grad)
