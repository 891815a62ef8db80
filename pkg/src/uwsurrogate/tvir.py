"""Time-varying impulse responses and their real-valued feature form.

A TVIR is a ``T x D`` complex matrix: rows are channel impulse responses
(snapshots) sampled every ``time_step`` seconds, columns are delay taps
spaced ``delay_step`` seconds apart.  The networks never see complex numbers;
each snapshot is mapped to ``[A, sin(phi), cos(phi)]`` (length ``3D``).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import InvalidInputError, NormalizationError

logger = logging.getLogger(__name__)

DEFAULT_TIME_STEP = 0.05  # 20 Hz snapshot rate
DEFAULT_DELAY_STEP = 1.0 / 12000.0  # 12 kHz tap rate
DEFAULT_ANCHOR = 20
# wrapped taps above this (relative to total energy) make straightening suspect
WRAP_ENERGY_DB = -40.0
_ULP_SEARCH = 4


class StraighteningWarning(UserWarning):
    """Circular shift moved non-negligible energy across the window edge."""


@dataclass
class Tvir:
    """Complex time-varying impulse response with sampling metadata."""

    snapshots: np.ndarray
    time_step: float = DEFAULT_TIME_STEP
    delay_step: float = DEFAULT_DELAY_STEP
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        x = np.asarray(self.snapshots)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InvalidInputError(f"snapshots must be a non-empty T x D array, got shape {x.shape}")
        x = x.astype(np.complex128, copy=False)
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("TVIR contains non-finite values")
        if not (self.time_step > 0 and self.delay_step > 0):
            raise InvalidInputError("time_step and delay_step must be positive")
        self.snapshots = x

    @property
    def num_snapshots(self) -> int:
        return self.snapshots.shape[0]

    @property
    def num_taps(self) -> int:
        return self.snapshots.shape[1]

    @property
    def duration(self) -> float:
        return self.num_snapshots * self.time_step

    def with_snapshots(self, snapshots: np.ndarray, **changes: Any) -> "Tvir":
        changes.setdefault("metadata", dict(self.metadata))
        return replace(self, snapshots=snapshots, **changes)


@dataclass(frozen=True)
class NormalizationRecord:
    scale: float
    shift: int
    anchor_index: int = DEFAULT_ANCHOR


def featurize(cir: np.ndarray) -> np.ndarray:
    """Map complex taps to ``[A, sin(phi), cos(phi)]`` along the last axis.

    Works on a single CIR (``D`` -> ``3D``) or a stack of them
    (``T x D`` -> ``T x 3D``).  Zero taps get ``sin = 0, cos = 1``.
    """
    x = np.asarray(cir, dtype=np.complex128)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("featurize: non-finite input")
    amp = np.abs(x)
    nz = amp > 0
    safe = np.where(nz, amp, 1.0)
    sin = np.where(nz, x.imag / safe, 0.0)
    cos = np.where(nz, x.real / safe, 1.0)
    return np.concatenate([amp, sin, cos], axis=-1)


def defeaturize(h: np.ndarray, return_degenerate: bool = False):
    """Inverse of :func:`featurize`.

    Phase is ``atan2(sin, cos)``, so sin/cos pairs off the unit circle are
    implicitly renormalised.  Negative amplitudes are clamped to zero.  With
    ``return_degenerate=True`` also returns a boolean mask of taps where
    ``A > 0`` but ``sin = cos = 0`` (phase defaulted to 0).
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] % 3:
        raise InvalidInputError(f"feature length {h.shape[-1]} is not divisible by 3")
    d = h.shape[-1] // 3
    amp = np.maximum(h[..., :d], 0.0)
    s, c = h[..., d : 2 * d], h[..., 2 * d :]
    phase = np.arctan2(s, c)  # atan2(0, 0) == 0
    degenerate = (amp > 0) & (s == 0) & (c == 0)
    if np.any(degenerate):
        logger.debug("defeaturize: %d taps with sin=cos=0", int(degenerate.sum()))
    out = amp * np.exp(1j * phase)
    if return_degenerate:
        return out, degenerate
    return out


def featurize_tvir(tvir: Tvir) -> np.ndarray:
    """``T x 3D`` feature sequence of a TVIR."""
    return featurize(tvir.snapshots)


def _np_abs(re: float, im: float) -> float:
    # numpy's complex modulus can differ from Python's abs() by an ulp
    return float(np.abs(np.array([complex(re, im)]))[0])


def _unit_peak(value: complex) -> complex:
    # Force |value| == 1.0 bit-exactly; plain division lands an ulp off ~20% of
    # the time.  Search a few ulps around the quotient in both components.
    y = complex(value.real / abs(value), value.imag / abs(value))
    if _np_abs(y.real, y.imag) == 1.0:
        return y
    res = [y.real]
    ims = [y.imag]
    for _ in range(_ULP_SEARCH):
        res = [float(np.nextafter(res[0], -np.inf))] + res + [float(np.nextafter(res[-1], np.inf))]
        ims = [float(np.nextafter(ims[0], -np.inf))] + ims + [float(np.nextafter(ims[-1], np.inf))]
    best = None
    for i, re in enumerate(res):
        for j, im in enumerate(ims):
            if _np_abs(re, im) == 1.0:
                cost = abs(i - _ULP_SEARCH) + abs(j - _ULP_SEARCH)
                if best is None or cost < best[0]:
                    best = (cost, complex(re, im))
    if best is None:  # pragma: no cover - not observed in practice
        logger.warning("could not place the normalized peak exactly on the unit circle")
        return y
    return best[1]


def normalize_tvir(tvir: Tvir, anchor_index: int = DEFAULT_ANCHOR) -> tuple[Tvir, NormalizationRecord]:
    """Scale by the first-snapshot peak and circularly align it to ``anchor_index``.

    Later snapshots are divided by the same scale, so they may exceed 1.
    Ties for the peak resolve to the lowest tap index.
    """
    x = tvir.snapshots
    d = x.shape[1]
    if not 0 <= anchor_index < d:
        raise InvalidInputError(f"anchor_index {anchor_index} outside [0, {d})")
    first = np.abs(x[0])
    peak = int(np.argmax(first))
    scale = float(first[peak])
    if scale == 0.0:
        raise NormalizationError("first snapshot is all zero")
    shift = anchor_index - peak
    if shift:
        wrapped = x[:, -shift:] if shift > 0 else x[:, :-shift]
        total = float(np.sum(np.abs(x) ** 2))
        w_energy = float(np.sum(np.abs(wrapped) ** 2))
        if w_energy > 0 and 10 * np.log10(w_energy / total) >= WRAP_ENERGY_DB:
            warnings.warn(
                f"straightening wraps {10 * np.log10(w_energy / total):.1f} dB of energy",
                StraighteningWarning,
                stacklevel=2,
            )
    y = np.roll(x / scale, shift, axis=1)
    y[0, anchor_index] = _unit_peak(complex(y[0, anchor_index]))
    rec = NormalizationRecord(scale=scale, shift=shift, anchor_index=anchor_index)
    return tvir.with_snapshots(y), rec


def denormalize_tvir(tvir: Tvir, rec: NormalizationRecord) -> Tvir:
    """Undo :func:`normalize_tvir` (exact when wrapped-around taps were zero)."""
    if rec.anchor_index >= tvir.num_taps:
        raise InvalidInputError("normalization record does not match TVIR width")
    if rec.scale <= 0:
        raise InvalidInputError("normalization scale must be positive")
    y = np.roll(tvir.snapshots, -rec.shift, axis=1) * rec.scale
    return tvir.with_snapshots(y)


def resample_time(tvir: Tvir, target_rate: float) -> Tvir:
    """Resample the snapshot axis to ``target_rate`` Hz.

    Real and imaginary parts of each tap are linearly interpolated; samples
    past the last original snapshot hold its value.  The snapshot count is
    ``round(T * target_rate / rate)`` so the window duration is preserved.
    """
    if not target_rate > 0:
        raise InvalidInputError("target_rate must be positive")
    rate = 1.0 / tvir.time_step
    t_in = tvir.num_snapshots
    if np.isclose(target_rate, rate, rtol=1e-12, atol=0.0):
        return tvir.with_snapshots(tvir.snapshots.copy())
    if target_rate > rate and t_in < 2:
        raise InvalidInputError("need at least 2 snapshots to upsample")
    n_out = max(1, int(round(t_in * target_rate / rate)))
    src = np.arange(t_in) / rate
    dst = np.arange(n_out) / target_rate
    x = tvir.snapshots
    out = np.empty((n_out, x.shape[1]), dtype=np.complex128)
    for j in range(x.shape[1]):
        out[:, j] = np.interp(dst, src, x[:, j].real) + 1j * np.interp(dst, src, x[:, j].imag)
    return tvir.with_snapshots(out, time_step=1.0 / target_rate)


def split_tvir(tvir: Tvir, length: int) -> list[Tvir]:
    """Cut into consecutive non-overlapping ``length``-snapshot TVIRs (tail dropped)."""
    if length < 1:
        raise InvalidInputError("segment length must be >= 1")
    n = tvir.num_snapshots // length
    return [tvir.with_snapshots(tvir.snapshots[i * length : (i + 1) * length].copy()) for i in range(n)]


def compression_ratio(num_snapshots: int = 20, num_taps: int = 250, latent_dim: int = 128) -> float:
    """Real values in a TVIR per latent value."""
    return num_snapshots * num_taps * 2 / latent_dim


def effective_compression_ratio(
    raw_rate: float = 12000.0,
    snapshot_rate: float = 20.0,
    num_snapshots: int = 20,
    num_taps: int = 250,
    latent_dim: int = 128,
) -> float:
    """Compression including the time-axis downsampling.

    Uses the latent ratio rounded to the nearest integer, as quoted for the
    default configuration (``600 * 78 = 46800``).
    """
    return (raw_rate / snapshot_rate) * round(compression_ratio(num_snapshots, num_taps, latent_dim))
