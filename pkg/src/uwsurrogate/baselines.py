"""Replay baselines: direct replay and EMD-based stochastic replay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidInputError, ReplayWindowTooShortError
from .tvir import Tvir, split_tvir

MIN_REPLAY_SECONDS = 8.0


def direct_replay(measured: Tvir) -> Tvir:
    """The measured channel itself; noise is added later by the link simulator."""
    return measured


# -- EMD ------------------------------------------------------------------------

@dataclass
class EmdResult:
    imfs: list[np.ndarray] = field(default_factory=list)
    residue: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def reconstruct(self) -> np.ndarray:
        out = self.residue.copy()
        for imf in self.imfs:
            out = out + imf
        return out


def _extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of strict local maxima and minima (plateaus count once, at their start)."""
    d = np.diff(x)
    nz = np.flatnonzero(d != 0)
    if nz.size < 2:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    s = np.sign(d[nz])
    turn = np.flatnonzero(s[:-1] != s[1:])
    idx = nz[turn] + 1
    maxima = idx[s[turn] > 0]
    minima = idx[s[turn] < 0]
    return maxima, minima


def _envelope(x: np.ndarray, idx: np.ndarray, n_mirror: int = 2) -> np.ndarray | None:
    """Cubic spline through ``x[idx]`` with the outermost extrema mirrored
    about both ends of the series."""
    n = x.size
    if idx.size == 0:
        return None
    left = idx[:n_mirror]
    right = idx[-n_mirror:]
    pos = np.concatenate([-left[::-1], idx, 2 * (n - 1) - right[::-1]])
    val = np.concatenate([x[left[::-1]], x[idx], x[right[::-1]]])
    pos, keep = np.unique(pos, return_index=True)
    val = val[keep]
    if pos.size < 2:
        return None
    if pos.size < 4:
        return np.interp(np.arange(n), pos, val)
    return CubicSpline(pos, val)(np.arange(n))


def _sift(x: np.ndarray, sd_stop: float, max_sifts: int) -> np.ndarray | None:
    h = x.copy()
    for k in range(max_sifts):
        mx, mn = _extrema(h)
        upper = _envelope(h, mx)
        lower = _envelope(h, mn)
        if upper is None or lower is None:
            return None if k == 0 else h
        new = h - 0.5 * (upper + lower)
        denom = np.sum(h**2)
        sd = np.sum((h - new) ** 2) / denom if denom > 0 else 0.0
        h = new
        if sd < sd_stop:
            break
    return h


def emd(x, max_imfs: int = 10, sd_stop: float = 0.3, max_sifts: int = 10) -> EmdResult:
    """Empirical mode decomposition of a real series.

    Each IMF is sifted until the normalized squared change between passes
    drops below ``sd_stop`` or ``max_sifts`` passes are done.  Extraction
    stops after ``max_imfs`` IMFs or once the residue has fewer than two
    extrema in total.  ``sum(imfs) + residue`` equals the input up to
    floating-point rounding.
    """
    r = np.asarray(x, dtype=np.float64).reshape(-1)
    if r.size < 4:
        raise InvalidInputError("EMD needs at least 4 samples")
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("EMD input must be finite")
    res = EmdResult(residue=r.copy())
    for _ in range(max_imfs):
        mx, mn = _extrema(res.residue)
        if mx.size + mn.size < 2:
            break
        imf = _sift(res.residue, sd_stop, max_sifts)
        if imf is None:
            break
        res.imfs.append(imf)
        res.residue = res.residue - imf
    return res


# -- stochastic replay -------------------------------------------------------------

@dataclass(frozen=True)
class ComplexAr1:
    """``w[n+1] = rho w[n] + sqrt(var (1 - |rho|^2)) e[n]`` with circular unit-variance ``e``."""

    rho: complex
    var: float

    @classmethod
    def fit(cls, w: np.ndarray) -> "ComplexAr1":
        w = np.asarray(w, dtype=np.complex128)
        var = float(np.mean(np.abs(w) ** 2))
        if var == 0 or w.size < 2:
            return cls(0j, var)
        rho = np.vdot(w[:-1], w[1:]) / np.vdot(w[:-1], w[:-1])
        if abs(rho) >= 1:
            rho = rho / abs(rho) * (1 - 1e-6)
        return cls(complex(rho), var)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        e = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        out = np.empty(n, dtype=np.complex128)
        scale = np.sqrt(self.var * (1 - abs(self.rho) ** 2))
        out[0] = np.sqrt(self.var) * e[0]
        for k in range(1, n):
            out[k] = self.rho * out[k - 1] + scale * e[k]
        return out


def split_trend(series, max_imfs: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Real series -> (slow trend, fast part).

    The trend is the EMD residue plus the last IMF when at least two IMFs
    were found, else the residue alone.
    """
    d = emd(series, max_imfs=max_imfs)
    trend = d.residue.copy()
    if len(d.imfs) >= 2:
        trend = trend + d.imfs[-1]
    return trend, np.asarray(series, dtype=np.float64) - trend


def decompose_tvir(measured: Tvir) -> tuple[np.ndarray, np.ndarray]:
    """Per-tap trend/fast split of real and imaginary parts; returns complex ``(trend, fast)``."""
    x = measured.snapshots
    trend = np.zeros_like(x)
    for j in range(x.shape[1]):
        col = x[:, j]
        if not np.any(col):
            continue
        tr_re, _ = split_trend(col.real)
        tr_im, _ = split_trend(col.imag)
        trend[:, j] = tr_re + 1j * tr_im
    return trend, x - trend


def stochastic_replay(
    measured: Tvir,
    target_snapshots: int,
    rng: np.random.Generator,
    min_duration: float = MIN_REPLAY_SECONDS,
) -> list[Tvir]:
    """Keep the measured per-tap trend, regenerate the fast part from a
    fitted complex AR(1) per tap, and cut the result into TVIRs of
    ``target_snapshots`` snapshots."""
    if measured.duration < min_duration - 1e-9:
        raise ReplayWindowTooShortError(
            f"stochastic replay needs at least {min_duration:g} s of measurement, got {measured.duration:g} s"
        )
    if target_snapshots < 1 or target_snapshots > measured.num_snapshots:
        raise InvalidInputError("target_snapshots must lie in [1, measured length]")
    trend, fast = decompose_tvir(measured)
    out = trend.copy()
    for j in range(fast.shape[1]):
        model = ComplexAr1.fit(fast[:, j])
        if model.var > 0:
            out[:, j] = trend[:, j] + model.sample(fast.shape[0], rng)
    regenerated = measured.with_snapshots(out, metadata={**measured.metadata, "replay": "stochastic"})
    return split_tvir(regenerated, target_snapshots)
