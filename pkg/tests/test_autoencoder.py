import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from uwsurrogate.autoencoder import (
    FINE_TUNE_PRESETS,
    AETrainConfig,
    AutoencoderConfig,
    AutoencoderModel,
    ae_loss,
    amplitude_nmse_db,
    features_from_tvirs,
    fine_tune_autoencoder,
    preset_config,
    train_autoencoder,
    tvirs_from_features,
)
from uwsurrogate.errors import InvalidInputError
from uwsurrogate.tvir import StraighteningWarning, Tvir, featurize

SMALL = AutoencoderConfig(num_snapshots=4, num_taps=6, hidden=8, layers=2)


def _h(a, phi):
    a, phi = np.atleast_1d(a).astype(float), np.atleast_1d(phi).astype(float)
    return torch.as_tensor(np.concatenate([a, np.sin(phi), np.cos(phi)])[None], dtype=torch.float64)


# -- loss -------------------------------------------------------------------------

def test_loss_zero_for_identical():
    H = _h([0.3, 1.2], [0.5, -2.0])
    lb = ae_loss(H, H.clone())
    assert float(lb.total) == 0.0


def test_loss_opposite_phase():
    lb = ae_loss(_h(1.0, 0.0), _h(1.0, math.pi))
    assert float(lb.amp_term) == 0.0
    assert float(lb.phase_term) == pytest.approx(4.0)


def test_loss_amplitude_only():
    lb = ae_loss(_h(2.0, 0.3), _h(1.0, 0.3), eta=0.0)
    assert float(lb.amp_term) == pytest.approx(1.0)
    assert float(lb.total) == pytest.approx(1.0)


def test_loss_zero_amplitude_ignores_phase():
    lb = ae_loss(_h(0.0, 0.0), _h(0.0, 2.5))
    assert float(lb.total) == 0.0


def test_loss_batch_mean_and_eta():
    a, b = _h(1.0, 0.0), _h(1.0, math.pi)
    both = ae_loss(torch.stack([a, a]), torch.stack([a, b]), eta=0.5)
    assert float(both.total) == pytest.approx(0.5 * 4.0 / 2)
    with pytest.raises(InvalidInputError):
        ae_loss(a, b, eta=-1)
    with pytest.raises(InvalidInputError):
        ae_loss(a, torch.zeros(1, 6, dtype=torch.float64))


@given(st.integers(0, 2**31), st.integers(1, 8))
def test_loss_invariances(seed, d):
    r = np.random.default_rng(seed)
    x = r.standard_normal((3, d)) + 1j * r.standard_normal((3, d))
    y = r.standard_normal((3, d)) + 1j * r.standard_normal((3, d))
    H, Hh = torch.as_tensor(featurize(x)), torch.as_tensor(featurize(y))
    base = float(ae_loss(H, Hh).total)
    assert base >= 0
    perm = r.permutation(d)
    idx = np.concatenate([perm, perm + d, perm + 2 * d])
    assert float(ae_loss(H[:, idx], Hh[:, idx]).total) == pytest.approx(base, rel=1e-12)
    # phase term equals |x - y|^2 summed over taps
    lb = ae_loss(H, Hh)
    assert float(lb.phase_term) == pytest.approx(float(np.sum(np.abs(x - y) ** 2)), rel=1e-9)


def test_amplitude_nmse():
    H = np.concatenate([np.ones(3), np.zeros(6)])[None]
    Hh = H.copy()
    Hh[0, :3] = 0.9
    assert amplitude_nmse_db(H, Hh) == pytest.approx(-20.0)


# -- model --------------------------------------------------------------------------

def test_default_shapes():
    m = AutoencoderModel(AutoencoderConfig(hidden=8, layers=1), seed=0)
    H = np.zeros((20, 750), dtype=np.float32)
    z = m.encode_np(H)
    assert z.shape == (128,)
    assert m.decode_np(z).shape == (20, 750)
    assert m.encode_np(np.stack([H, H])).shape == (2, 128)


def test_amplitudes_nonnegative_and_shape_errors():
    m = AutoencoderModel(SMALL, seed=1)
    out = m.decode_np(np.random.default_rng(0).standard_normal((5, 128)) * 10)
    assert np.all(out[..., :6] >= 0)
    with pytest.raises(InvalidInputError):
        m.encode_np(np.zeros((3, 18)))
    with pytest.raises(InvalidInputError):
        m.decode_np(np.zeros(12))


def test_same_seed_same_weights_and_outputs():
    H = np.random.default_rng(2).random((4, 18))
    a, b = AutoencoderModel(SMALL, seed=5), AutoencoderModel(SMALL, seed=5)
    assert np.array_equal(a.encode_np(H), b.encode_np(H))
    c = AutoencoderModel(SMALL, seed=6)
    assert not np.array_equal(a.encode_np(H), c.encode_np(H))


def test_save_load_bit_identical(tmp_path):
    m = AutoencoderModel(SMALL, seed=3)
    data = np.random.default_rng(1).random((6, 4, 18)).astype(np.float32)
    m.fit_input_scaling(data)
    with torch.no_grad():
        m.store["dec.out.W"].normal_(generator=torch.Generator().manual_seed(0))
    m.save(tmp_path / "ae.uack")
    back = AutoencoderModel.load(tmp_path / "ae.uack")
    assert back.config == m.config
    assert np.array_equal(back.encode_np(data), m.encode_np(data))
    z = m.encode_np(data)
    assert np.array_equal(back.decode_np(z), m.decode_np(z))


def test_load_rejects_other_kind(tmp_path):
    from uwsurrogate.formats import save_checkpoint

    save_checkpoint(tmp_path / "x.uack", {"kind": "diffusion"}, {})
    with pytest.raises(InvalidInputError):
        AutoencoderModel.load(tmp_path / "x.uack")


def test_feature_helpers_round_trip():
    r = np.random.default_rng(0)
    x = r.standard_normal((4, 30)) + 1j * r.standard_normal((4, 30))
    t = Tvir(x)
    F = features_from_tvirs([t], normalize=False)
    assert F.shape == (1, 4, 90) and F.dtype == np.float32
    back = tvirs_from_features(F, t.time_step, t.delay_step)[0]
    assert np.allclose(back.snapshots, x, atol=1e-5)
    with pytest.warns(StraighteningWarning):
        normed = features_from_tvirs([t])
    assert normed[0, 0, 20] == pytest.approx(1.0)


# -- training ---------------------------------------------------------------------------

def _toy_data(n, seed=0):
    """Two-path channels with slowly varying gains on a short grid."""
    r = np.random.default_rng(seed)
    x = np.zeros((n, 4, 6), dtype=complex)
    x[:, :, 1] = 1.0
    amp = r.uniform(0.2, 0.8, (n, 1))
    ph = r.uniform(-np.pi, np.pi, (n, 1))
    x[:, :, 4] = amp * np.exp(1j * (ph + 0.1 * np.arange(4)))
    return np.stack([featurize(s) for s in x]).astype(np.float32)


def test_toy_training_decreases_loss():
    data = _toy_data(50)
    cfg = AETrainConfig(learning_rate=3e-3, batch_size=10, max_epochs=5, seed=0)
    m, hist = train_autoencoder(data[:40], data[40:], cfg, model_config=SMALL)
    assert len(hist) == 5
    assert hist[-1].train_loss < hist[0].train_loss
    assert min(h.val_loss for h in hist) < hist[0].val_loss


def test_training_is_reproducible():
    data = _toy_data(20)
    cfg = AETrainConfig(batch_size=5, max_epochs=2, seed=4)
    a, _ = train_autoencoder(data[:15], data[15:], cfg, model_config=SMALL)
    b, _ = train_autoencoder(data[:15], data[15:], cfg, model_config=SMALL)
    assert np.array_equal(a.encode_np(data), b.encode_np(data))


def test_zero_epochs_returns_model_unchanged():
    data = _toy_data(10)
    m = AutoencoderModel(SMALL, seed=0)
    before = m.encode_np(data)
    out, hist = train_autoencoder(data[:8], data[8:], AETrainConfig(max_epochs=0), model=m)
    assert hist == []
    assert np.array_equal(out.encode_np(data), before)


def test_fine_tune_leaves_input_untouched():
    data = _toy_data(12)
    m = AutoencoderModel(SMALL, seed=0)
    before = m.encode_np(data)
    tuned, _ = fine_tune_autoencoder(m, data[:10], data[10:], AETrainConfig(batch_size=5, max_epochs=1))
    assert np.array_equal(m.encode_np(data), before)
    assert not np.array_equal(tuned.encode_np(data), before)


def test_training_rejects_bad_data():
    data = _toy_data(4)
    with pytest.raises(InvalidInputError):
        train_autoencoder(data, data[:0], AETrainConfig(), model_config=SMALL)
    with pytest.raises(InvalidInputError):
        train_autoencoder(data, data, AETrainConfig(), model=AutoencoderModel(AutoencoderConfig(4, 7, 8, 1)))


def test_presets():
    assert FINE_TUNE_PRESETS["nov2024"] == {"learning_rate": 1e-2, "patience": 10}
    cfg = preset_config("nof1", max_epochs=3)
    assert (cfg.learning_rate, cfg.patience, cfg.min_lr, cfg.max_epochs) == (5e-3, 15, 1e-6, 3)
    assert preset_config("keppel").learning_rate == 1e-3
    with pytest.raises(InvalidInputError):
        preset_config("bogus")
