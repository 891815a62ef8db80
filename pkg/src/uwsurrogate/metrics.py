"""Channel statistics: delay/Doppler spreads, coherence, significant taps, CDFs."""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInputError
from .tvir import Tvir

SQRT_HALF = math.sqrt(0.5)


class SaturatingValue(NamedTuple):
    """A measurement that may hit the edge of what the window can resolve."""

    value: float
    saturated: bool


def power_delay_profile(tvir: Tvir) -> np.ndarray:
    return np.mean(np.abs(tvir.snapshots) ** 2, axis=0)


def _check_pdp(pdp) -> np.ndarray:
    p = np.asarray(pdp, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidInputError("PDP must be a finite non-negative vector")
    if not p.max() > 0:
        raise InvalidInputError("PDP has no power")
    return p


def delay_spread(pdp, delay_step: float, threshold_db: float = -10.0) -> float:
    """Span between the first and last taps at or above ``threshold_db`` of the peak."""
    p = _check_pdp(pdp)
    idx = np.flatnonzero(p >= p.max() * 10 ** (threshold_db / 10))
    return float((idx[-1] - idx[0]) * delay_step)


def mean_delay(pdp, delay_step: float) -> float:
    p = _check_pdp(pdp)
    tau = np.arange(p.size) * delay_step
    return float(np.sum(p * tau) / np.sum(p))


def rms_delay_spread(pdp, delay_step: float) -> float:
    p = _check_pdp(pdp)
    tau = np.arange(p.size) * delay_step
    mu = np.sum(p * tau) / np.sum(p)
    var = np.sum(p * (tau - mu) ** 2) / np.sum(p)
    return float(math.sqrt(max(var, 0.0)))


def doppler_spectrum(tvir: Tvir) -> tuple[np.ndarray, np.ndarray]:
    """``(frequencies, power)`` with frequencies ascending, summed over taps."""
    T = tvir.num_snapshots
    if T < 2:
        raise InvalidInputError("Doppler spectrum needs at least two snapshots")
    spec = np.sum(np.abs(np.fft.fft(tvir.snapshots, axis=0)) ** 2, axis=1)
    freqs = np.fft.fftfreq(T, tvir.time_step)
    order = np.argsort(freqs)
    return freqs[order], spec[order]


def doppler_spread(tvir: Tvir, threshold_db: float = -10.0) -> float:
    """Max minus min frequency over Doppler bins at or above ``threshold_db`` of the peak."""
    f, s = doppler_spectrum(tvir)
    if not s.max() > 0:
        raise InvalidInputError("TVIR has no energy")
    keep = f[s >= s.max() * 10 ** (threshold_db / 10)]
    return float(keep.max() - keep.min())


def time_correlation(tvir: Tvir) -> np.ndarray:
    """``R[k]`` for lags ``k = 0..T-1``: magnitude of the lag-k inner product
    of snapshots, divided by the geometric mean of the energies of the two
    overlapping segments, so that ``R[0] = 1`` and a static channel gives 1
    at every lag."""
    x = tvir.snapshots
    T = x.shape[0]
    e = np.sum(np.abs(x) ** 2, axis=1)
    if not e.sum() > 0:
        raise InvalidInputError("TVIR has no energy")
    r = np.zeros(T)
    for k in range(T):
        num = abs(np.vdot(x[k:], x[: T - k]))
        den = math.sqrt(e[: T - k].sum() * e[k:].sum())
        r[k] = num / den if den > 0 else 0.0
    return r


def coherence_time(tvir: Tvir, threshold: float = SQRT_HALF) -> SaturatingValue:
    """Smallest lag with correlation strictly below ``threshold``; otherwise
    the window duration, flagged as saturated."""
    if tvir.num_snapshots < 2:
        raise InvalidInputError("coherence time needs at least two snapshots")
    r = time_correlation(tvir)
    below = np.flatnonzero(r < threshold)
    if below.size == 0:
        return SaturatingValue(tvir.num_snapshots * tvir.time_step, True)
    return SaturatingValue(float(below[0] * tvir.time_step), False)


def frequency_correlation(pdp, delay_step: float, freqs) -> np.ndarray:
    """``|sum_j p_j exp(-2 pi i f j dtau)| / sum_j p_j`` at the given frequencies."""
    p = _check_pdp(pdp)
    tau = np.arange(p.size) * delay_step
    f = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    return np.abs(np.exp(-2j * np.pi * np.outer(f, tau)) @ p) / p.sum()


def coherence_bandwidth(pdp, delay_step: float, threshold: float = SQRT_HALF) -> SaturatingValue:
    """First frequency where the frequency correlation falls below ``threshold``;
    saturates at half the tap rate."""
    p = _check_pdp(pdp)
    nyq = 0.5 / delay_step
    grid = np.linspace(0.0, nyq, 64 * p.size + 1)
    c = frequency_correlation(p, delay_step, grid)
    below = np.flatnonzero(c < threshold)
    if below.size == 0:
        return SaturatingValue(nyq, True)
    k = below[0]
    if k == 0:
        return SaturatingValue(0.0, False)
    g = lambda f: frequency_correlation(p, delay_step, f)[0] - threshold  # noqa: E731
    return SaturatingValue(float(brentq(g, grid[k - 1], grid[k], xtol=1e-12, rtol=1e-14)), False)


def significant_taps(tvir: Tvir, threshold_db: float = -26.0) -> np.ndarray:
    """``(N, 2)`` array of (amplitude, phase) pooled over snapshots, keeping
    taps strictly above ``threshold_db`` relative to each snapshot's strongest tap."""
    out = []
    skipped = 0
    ratio = 10 ** (threshold_db / 20)
    for row in tvir.snapshots:
        a = np.abs(row)
        ref = a.max()
        if not ref > 0:
            skipped += 1
            continue
        keep = a > ref * ratio
        out.append(np.column_stack([a[keep], np.angle(row[keep])]))
    if skipped:
        warnings.warn(f"skipped {skipped} all-zero snapshot(s)", RuntimeWarning, stacklevel=2)
    if not out:
        return np.zeros((0, 2))
    return np.concatenate(out)


def _taps_per_snapshot(tvir: Tvir, threshold_db: float = -26.0) -> float:
    a = np.abs(tvir.snapshots)
    ref = a.max(axis=1, keepdims=True)
    live = ref[:, 0] > 0
    if not live.any():
        return 0.0
    return float(np.mean(np.sum(a[live] > ref[live] * 10 ** (threshold_db / 20), axis=1)))


@dataclass(frozen=True)
class Characteristics:
    mean_delay: float
    delay_spread_10db: float
    rms_delay_spread: float
    doppler_spread_10db: float
    coherence_time: float
    coherence_bandwidth: float
    num_significant_taps: float
    total_gain: float

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> list[float]:
        return list(asdict(self).values())


def characteristics(tvir: Tvir) -> Characteristics:
    pdp = power_delay_profile(tvir)
    dd = tvir.delay_step
    return Characteristics(
        mean_delay=mean_delay(pdp, dd),
        delay_spread_10db=delay_spread(pdp, dd),
        rms_delay_spread=rms_delay_spread(pdp, dd),
        doppler_spread_10db=doppler_spread(tvir),
        coherence_time=coherence_time(tvir).value,
        coherence_bandwidth=coherence_bandwidth(pdp, dd).value,
        num_significant_taps=_taps_per_snapshot(tvir),
        total_gain=float(10 * np.log10(pdp.sum())),
    )


class EmpiricalCdf:
    """Right-continuous empirical CDF: ``F(x) = #{samples <= x} / n``."""

    def __init__(self, samples: Iterable[float]):
        s = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=np.float64).ravel())
        if s.size == 0:
            raise InvalidInputError("empirical CDF needs at least one sample")
        if np.any(np.isnan(s)):
            raise InvalidInputError("samples contain NaN")
        self.samples = s

    def __call__(self, x):
        return np.searchsorted(self.samples, x, side="right") / self.samples.size

    def __len__(self) -> int:
        return self.samples.size


def empirical_cdf(samples) -> EmpiricalCdf:
    return EmpiricalCdf(samples)


def histogram(values, n_bins: int, value_range: tuple[float, float]) -> np.ndarray:
    """Counts over ``n_bins`` half-open bins ``[lo, hi)`` spanning ``value_range``;
    values outside the range are dropped."""
    lo, hi = map(float, value_range)
    if n_bins < 1 or not hi > lo:
        raise InvalidInputError("need n_bins >= 1 and hi > lo")
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise InvalidInputError("histogram of an empty sample set")
    v = v[(v >= lo) & (v < hi)]
    idx = np.floor((v - lo) / (hi - lo) * n_bins).astype(np.int64)
    idx = np.minimum(idx, n_bins - 1)  # guard against rounding just below hi
    return np.bincount(idx, minlength=n_bins)


def write_characteristics_csv(path: str | os.PathLike, rows: Sequence[Characteristics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *Characteristics.names()])
        for i, c in enumerate(rows):
            w.writerow([i, *(repr(float(v)) for v in c.as_row())])


def write_two_column_csv(path: str | os.PathLike, header: tuple[str, str], xs, ys) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, y in zip(xs, ys):
            w.writerow([repr(float(x)), repr(float(y))])
