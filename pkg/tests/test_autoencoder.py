import json
import struct

import numpy as np
import pytest

from pqcluster.autoencoder import (
    ArchConfig, Autoencoder, TrainConfig, encode_dataset, evaluate, load_model, mse_grad, mse_loss,
    save_model, train,
)
from pqcluster.autoencoder.training import model_meta
from pqcluster.errors import NumericalError
from pqcluster.synth_gen import GenConfig, gen_dataset
from pqcluster.waveform_data import Dataset, WaveformRecord, preprocess, split
from helpers import max_rel_err, numeric_grad

TINY = ArchConfig(in_channels=3, length=8, kernel=3, enc_channels=(4,), latent=2,
                  dec_channels=(3,), upsample=(2,))


def tiny_dataset(n, rng, spc=4, cycles=2):
    recs = []
    for i in range(n):
        w = rng.normal(size=(3, spc * cycles))
        recs.append(WaveformRecord(f"r{i}", spc, cycles, w[0], w[1], w[2]))
    return Dataset(recs)


def test_tiny_autoencoder_gradients_match_finite_differences(rng):
    model = Autoencoder(TINY, dtype=np.float64, seed=3)
    for _, p in model.parameters():
        p[...] = rng.normal(scale=0.7, size=p.shape)
    x = rng.normal(size=(2, 3, 8))
    model.loss_and_grad(x)
    analytic = {name: g.copy() for name, g in model.gradients()}

    def loss():
        return mse_loss(x, model.forward(x))

    for name, p in model.parameters():
        assert max_rel_err(analytic[name], numeric_grad(loss, p)) < 1e-4, name


def test_default_shapes():
    model = Autoencoder(ArchConfig(), dtype=np.float32, seed=0)
    x = np.random.default_rng(0).normal(size=(3, 4096))
    h = model.encode(x)
    assert h.shape == (60,)
    assert model.decode(h).shape == (3, 4096)
    assert model.encoder.output_shape == (60,)


def test_full_width_plan_shapes():
    arch = ArchConfig.full_width()
    model = Autoencoder(arch, dtype=np.float32)
    dense = model.decoder.layers[0]
    assert (dense.n_in, dense.n_out) == (60, 8192)
    assert model.decoder.layers[2].spec() == {"kind": "reshape", "channels": 64, "length": 128}
    assert [l.out_ch for l in model.encoder.layers if l.kind == "conv1d"] == [16, 32, 32, 64, 64]
    assert [l.out_ch for l in model.decoder.layers if l.kind == "conv1d"] == [32, 16, 3]
    assert model.decoder.output_shape == (3, 4096)


def test_zero_weights_give_zero_code_and_output(rng):
    model = Autoencoder(ArchConfig(), dtype=np.float64)
    x = rng.normal(size=(2, 3, 4096))
    np.testing.assert_array_equal(model.encode(x), np.zeros((2, 60)))
    np.testing.assert_array_equal(model.decode(np.ones(60)), np.zeros((3, 4096)))


def test_zero_input_gives_zero_gradients():
    model = Autoencoder(TINY, dtype=np.float64, seed=1)
    model.loss_and_grad(np.zeros((2, 3, 8)))
    for name, g in model.gradients():
        assert not np.any(g), name


def test_gradients_scale_linearly(rng):
    model = Autoencoder(TINY, dtype=np.float64, seed=2)
    x = rng.normal(size=(3, 3, 8))
    x_hat = model.forward(x)
    model.backward(mse_grad(x, x_hat))
    g1 = [g.copy() for _, g in model.gradients()]
    model.forward(x)
    model.backward(2.0 * mse_grad(x, x_hat))
    for a, (_, b) in zip(g1, model.gradients()):
        np.testing.assert_allclose(b, 2.0 * a, rtol=1e-12, atol=0)


def test_mse_semantics():
    x = np.zeros((1, 3, 4096))
    assert mse_loss(x, x) == 0.0
    assert mse_loss(x, np.ones_like(x)) == 12288.0
    a, b = np.random.default_rng(1).normal(size=(2, 1, 3, 4096))
    assert mse_loss(np.concatenate([a, a]), np.concatenate([b, b])) == pytest.approx(mse_loss(a, b), rel=1e-12)
    with pytest.raises(ValueError):
        mse_loss(np.zeros((1, 3)), np.zeros((1, 4)))


def test_encode_is_deterministic_and_shape_checked(rng):
    model = Autoencoder(ArchConfig(), dtype=np.float32, seed=5)
    x = rng.normal(size=(4, 3, 4096))
    np.testing.assert_array_equal(model.encode(x), model.encode(x.copy()))
    with pytest.raises(ValueError):
        model.encode(np.zeros((1, 3, 2048)))


def test_float32_and_float64_agree(rng):
    m64 = Autoencoder(ArchConfig(), dtype=np.float64, seed=4)
    m32 = m64.astype(np.float32)
    x = rng.normal(size=(2, 3, 4096))
    np.testing.assert_allclose(m32.encode(x), m64.encode(x), rtol=1e-3, atol=1e-3)


def test_training_reduces_loss_on_synthetic_records():
    records = gen_dataset(GenConfig.balanced(6, seed=11)).records[:32]
    ds = split(preprocess(Dataset(records)), seed=0)
    assert len(ds) == 32
    result = train(ds, TrainConfig(epochs=50, seed=0))
    hist = result.history["train"]
    assert len(hist) == 50
    assert hist[-1] < 0.2 * hist[0]
    x = ds.part("train").tensor(np.float32)
    untrained = Autoencoder(result.model.arch, dtype=np.float32, seed=0)
    assert evaluate(result.model, x) < evaluate(untrained, x)


def test_zero_learning_rate_keeps_loss_constant(rng):
    ds = split(tiny_dataset(12, rng), seed=0)
    hist = train(ds, TrainConfig(epochs=4, batch_size=4, learning_rate=0.0, dtype="float64"), TINY).history
    assert np.ptp(hist["train"]) < 1e-12 * abs(hist["train"][0])
    assert np.ptp(hist["val"]) == 0.0


def test_training_is_deterministic(rng):
    ds = split(tiny_dataset(12, rng), seed=0)
    cfg = TrainConfig(epochs=3, batch_size=4, seed=9)
    a = train(ds, cfg, TINY)
    b = train(ds, cfg, TINY)
    assert a.history == b.history
    for (_, p), (_, q) in zip(a.model.parameters(), b.model.parameters()):
        np.testing.assert_array_equal(p, q)


def test_training_needs_split(rng):
    with pytest.raises(ValueError):
        train(tiny_dataset(5, rng), TrainConfig(epochs=1), TINY)


def test_non_finite_loss_aborts(rng):
    ds = tiny_dataset(6, rng)
    huge = Dataset([WaveformRecord(r.id, 4, 2, r.va * 1e200, r.vb, r.vc) for r in ds])
    with pytest.raises(NumericalError):
        train(split(huge, seed=0), TrainConfig(epochs=1, dtype="float64"), TINY)


def test_invalid_train_config():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)


def test_invalid_arch():
    with pytest.raises(ValueError):
        ArchConfig(upsample=(4, 4, 4))
    with pytest.raises(ValueError):
        ArchConfig(dec_channels=(16, 8, 2))


def test_encode_dataset_rows(rng):
    model = Autoencoder(TINY, dtype=np.float64, seed=0)
    ds = tiny_dataset(3, rng)
    dup = Dataset([ds[0], ds[1], WaveformRecord("copy", 4, 2, ds[0].va, ds[0].vb, ds[0].vc)])
    F = encode_dataset(dup, model)
    assert F.shape == (3, 2)
    np.testing.assert_array_equal(F[0], F[2])
    # batched GEMM may round differently from a single-record pass
    np.testing.assert_allclose(F[1], model.encode(ds[1].channels), rtol=1e-12, atol=1e-14)
    assert encode_dataset(Dataset([]), model).shape == (0, 2)


def test_model_file_round_trip(tmp_path, rng):
    model = Autoencoder(ArchConfig(), dtype=np.float32, seed=8)
    path = tmp_path / "model.bin"
    save_model(path, model, {"seed": 8})
    again = load_model(path)
    for (n1, p), (n2, q) in zip(model.parameters(), again.parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p, q)
    x = rng.normal(size=(2, 3, 4096))
    np.testing.assert_array_equal(model.encode(x), again.encode(x))
    assert model_meta(path) == {"seed": 8}

    blob = path.read_bytes()
    (n,) = struct.unpack("<I", blob[:4])
    header = json.loads(blob[4:4 + n])
    assert header["dtype"] == "float32"
    names = [a["name"] for a in header["arrays"]]
    assert names == [name for name, _ in model.parameters()]
    sizes = sum(int(np.prod(a["shape"])) * 4 for a in header["arrays"])
    assert len(blob) == 4 + n + sizes
