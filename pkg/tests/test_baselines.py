import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from uwsurrogate.baselines import ComplexAr1, decompose_tvir, direct_replay, emd, split_trend, stochastic_replay
from uwsurrogate.errors import InvalidInputError, ReplayWindowTooShortError
from uwsurrogate.tvir import Tvir


def _sin_plus_trend(n=200):
    t = np.arange(n) / n
    return t, np.sin(2 * np.pi * 5 * t), 2.0 * t - 0.5


# -- direct replay -----------------------------------------------------------------------

def test_direct_replay_is_identity():
    t = Tvir(np.random.default_rng(0).standard_normal((20, 5)) + 0j)
    out = direct_replay(t)
    assert np.array_equal(out.snapshots, t.snapshots)
    assert np.array_equal(direct_replay(t).snapshots, out.snapshots)


# -- EMD --------------------------------------------------------------------------------------

def test_emd_monotone_and_constant():
    ramp = np.linspace(-1, 3, 50)
    d = emd(ramp)
    assert d.imfs == [] and np.array_equal(d.residue, ramp)
    c = np.full(30, 2.5)
    d = emd(c)
    assert d.imfs == [] and np.array_equal(d.residue, c)


def test_emd_sinusoid_plus_trend():
    _, s, trend = _sin_plus_trend()
    d = emd(s + trend)
    assert len(d.imfs) >= 1
    assert np.corrcoef(d.imfs[0], s)[0, 1] > 0.95
    assert np.corrcoef(d.residue, trend)[0, 1] > 0.95
    assert np.max(np.abs(d.reconstruct() - (s + trend))) < 1e-8


def test_emd_imf_extrema_vs_zero_crossings():
    _, s, trend = _sin_plus_trend()
    imf = emd(s + trend).imfs[0]
    n_ext = np.count_nonzero(np.diff(np.sign(np.diff(imf))) != 0)
    n_zc = np.count_nonzero(np.diff(np.sign(imf)) != 0)
    assert abs(n_ext - n_zc) <= 1


@given(hnp.arrays(np.float64, st.integers(4, 120), elements=st.floats(-1e3, 1e3)))
def test_emd_reconstruction(x):
    d = emd(x)
    assert np.max(np.abs(d.reconstruct() - x)) <= 1e-8 * max(1.0, np.abs(x).max())


def test_emd_errors():
    with pytest.raises(InvalidInputError):
        emd([1.0, 2.0, 3.0])
    with pytest.raises(InvalidInputError):
        emd([1.0, np.nan, 0.0, 1.0])


def test_split_trend_sums_to_input():
    _, s, trend = _sin_plus_trend()
    tr, fast = split_trend(s + trend)
    assert np.allclose(tr + fast, s + trend, atol=1e-12)


# -- AR(1) model ---------------------------------------------------------------------------

def test_complex_ar1_fit_recovers_parameters():
    true = ComplexAr1(0.6 + 0.2j, 2.0)
    w = true.sample(50_000, np.random.default_rng(0))
    fit = ComplexAr1.fit(w)
    assert abs(fit.rho - true.rho) < 0.02
    assert fit.var == pytest.approx(2.0, rel=0.05)
    assert ComplexAr1.fit(np.zeros(10)).var == 0


# -- stochastic replay ------------------------------------------------------------------------

def _smooth_channel(n=200, taps=3):
    t = np.arange(n) * 0.05
    cols = [(1 + 0.05 * t) * np.exp(1j * 0.01 * t), 0.5 - 0.02 * t + 0.1j, np.zeros(n)]
    return Tvir(np.stack(cols[:taps], axis=1))


def test_replay_of_smooth_channel_keeps_trend():
    m = _smooth_channel()
    out = stochastic_replay(m, 20, np.random.default_rng(0))
    assert len(out) == 10 and all(o.num_snapshots == 20 for o in out)
    y = np.concatenate([o.snapshots for o in out])
    for j in range(2):
        rms = np.sqrt(np.mean(np.abs(m.snapshots[:, j]) ** 2))
        dev = np.sqrt(np.mean(np.abs(y[:, j] - m.snapshots[:, j]) ** 2))
        assert dev < 0.05 * rms
    assert np.all(y[:, 2] == 0)
    assert out[0].metadata["replay"] == "stochastic"


def _noisy_channel(n=10_000, seed=0):
    r = np.random.default_rng(seed)
    t = np.arange(n) * 0.05
    trend = np.stack([1 + 0.2 * np.sin(2 * np.pi * t / 400), 0.4 * np.exp(1j * 2 * np.pi * t / 300)], axis=1)
    fast = np.stack([ComplexAr1(0.5, 0.01).sample(n, r), ComplexAr1(0.3j, 0.004).sample(n, r)], axis=1)
    return Tvir(trend + fast)


def test_replay_matches_fast_variance_and_preserves_trend():
    m = _noisy_channel()
    trend, fast = decompose_tvir(m)
    out = np.concatenate([o.snapshots for o in stochastic_replay(m, 20, np.random.default_rng(1))])
    resid = out - trend
    for j in range(2):
        v_in = np.mean(np.abs(fast[:, j]) ** 2)
        v_out = np.mean(np.abs(resid[:, j]) ** 2)
        assert v_out == pytest.approx(v_in, rel=0.1)
        # AR(1) samples are correlated; widen the standard error accordingly
        rho = abs(ComplexAr1.fit(fast[:, j]).rho)
        se = math.sqrt(v_out / resid.shape[0] * (1 + rho) / (1 - rho))
        assert abs(resid[:, j].real.mean()) < 3 * se
        assert abs(resid[:, j].imag.mean()) < 3 * se


def test_replay_reproducible_with_seed():
    m = _noisy_channel(400)
    a = stochastic_replay(m, 20, np.random.default_rng(5))
    b = stochastic_replay(m, 20, np.random.default_rng(5))
    assert all(np.array_equal(x.snapshots, y.snapshots) for x, y in zip(a, b))


def test_replay_window_too_short():
    with pytest.raises(ReplayWindowTooShortError):
        stochastic_replay(_smooth_channel(159), 20, np.random.default_rng(0))
    stochastic_replay(_smooth_channel(160), 20, np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        stochastic_replay(_smooth_channel(200), 0, np.random.default_rng(0))
