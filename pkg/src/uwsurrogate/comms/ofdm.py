"""Baseband OFDM modem, time-varying channel application and BER evaluation."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
import yaml
from scipy.special import erfc

from .. import rng as rngmod
from ..errors import InvalidInputError
from ..tvir import Tvir

SAMPLE_RATE = 12000.0
BITS_PER_SYMBOL = {"BPSK": 1, "QPSK": 2}


@dataclass(frozen=True)
class OfdmScheme:
    """One OFDM configuration.

    ``pilot_mode="comb"`` spreads ``pilot_count`` pilots evenly over the used
    carriers of every block.  ``pilot_mode="block"`` sends an all-pilot block
    ahead of every ``block_pilot_interval`` data blocks.
    """

    name: str
    num_carriers: int
    num_null_carriers: int
    cp_length: int
    bits_per_block: int
    modulation: str = "BPSK"
    windowed: bool = False
    pilot_count: int = 0
    pilot_mode: str = "block"
    block_pilot_interval: int = 4
    center_carrier_number: int | None = None
    frame_length: int | None = None
    pilot_seed: int = 0

    def __post_init__(self) -> None:
        if self.modulation not in BITS_PER_SYMBOL:
            raise InvalidInputError(f"unsupported modulation {self.modulation!r}")
        if not 0 <= self.num_null_carriers < self.num_carriers:
            raise InvalidInputError("need 0 <= num_null_carriers < num_carriers")
        if self.cp_length < 0 or self.cp_length > self.num_carriers:
            raise InvalidInputError("cp_length must lie in [0, num_carriers]")
        if self.pilot_mode not in ("comb", "block"):
            raise InvalidInputError(f"unknown pilot mode {self.pilot_mode!r}")
        if self.pilot_mode == "comb" and self.pilot_count < 2:
            raise InvalidInputError("comb pilots need at least two pilots")
        if self.block_pilot_interval < 1:
            raise InvalidInputError("block_pilot_interval must be >= 1")
        if self.bits_per_block < 1 or self.bits_per_block % self.bits_per_symbol:
            raise InvalidInputError("bits_per_block must be a positive multiple of bits per symbol")
        if len(self.data_carriers) * self.bits_per_symbol != self.bits_per_block:
            raise InvalidInputError("not enough usable carriers for bits_per_block")

    @property
    def bits_per_symbol(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    @property
    def block_length(self) -> int:
        return self.num_carriers + self.cp_length

    @cached_property
    def active_carriers(self) -> np.ndarray:
        """Signed carrier indices in use, contiguous and centred on DC."""
        n = self.num_carriers - self.num_null_carriers
        return np.arange(n) - n // 2

    @cached_property
    def usable_carriers(self) -> np.ndarray:
        """Active carriers that may carry energy (even ones only when windowed)."""
        a = self.active_carriers
        return a[a % 2 == 0] if self.windowed else a

    @cached_property
    def pilot_carriers(self) -> np.ndarray:
        if self.pilot_mode == "block":
            return np.zeros(0, dtype=np.int64)
        u = self.usable_carriers
        if self.pilot_count > len(u):
            raise InvalidInputError("more pilots than usable carriers")
        pos = np.unique(np.round(np.linspace(0, len(u) - 1, self.pilot_count)).astype(np.int64))
        return u[pos]

    @cached_property
    def data_carriers(self) -> np.ndarray:
        """The first carriers left after pilots; any residual carriers stay idle."""
        u = self.usable_carriers
        free = u[~np.isin(u, self.pilot_carriers)]
        need = self.bits_per_block // BITS_PER_SYMBOL[self.modulation]
        if need > len(free):
            return free  # __post_init__ reports the shortfall
        start = (len(free) - need) // 2
        return free[start : start + need]

    @cached_property
    def estimation_carriers(self) -> np.ndarray:
        """Carriers on which the receiver forms its LS channel estimate."""
        return self.pilot_carriers if self.pilot_mode == "comb" else self.data_carriers

    @cached_property
    def pilot_symbols(self) -> np.ndarray:
        """Unit-amplitude QPSK pilots on :attr:`estimation_carriers`."""
        rng = rngmod.stream(self.pilot_seed, "pilots", self.num_carriers)
        b = rng.integers(0, 2, size=(len(self.estimation_carriers), 2))
        return ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / math.sqrt(2)

    def blocks_in(self, num_samples: int) -> int:
        """Total OFDM blocks (pilot blocks included) that fit in ``num_samples``."""
        return num_samples // self.block_length

    def data_blocks_in(self, num_samples: int) -> int:
        n = self.blocks_in(num_samples)
        if self.pilot_mode == "comb":
            return n
        period = self.block_pilot_interval + 1
        full, rest = divmod(n, period)
        return full * self.block_pilot_interval + max(rest - 1, 0)

    def to_dict(self) -> dict:
        return asdict(self)


# -- preset table -------------------------------------------------------------

def _load_presets() -> dict[str, OfdmScheme]:
    text = resources.files(__package__).joinpath("schemes.yaml").read_text(encoding="utf-8")
    raw = yaml.safe_load(text)
    out: dict[str, OfdmScheme] = {}
    for idx, frame, bits, nulls, centre, n, cp, win in raw["table"]:
        out[str(idx)] = OfdmScheme(
            name=str(idx), num_carriers=n, num_null_carriers=nulls, cp_length=cp,
            bits_per_block=bits, modulation="BPSK", windowed=bool(win),
            center_carrier_number=centre, frame_length=frame,
        )
    nof = raw["NOF1"]
    out["NOF1"] = OfdmScheme(name="NOF1", **nof)
    return out


_PRESETS: dict[str, OfdmScheme] | None = None


def presets() -> dict[str, OfdmScheme]:
    global _PRESETS
    if _PRESETS is None:
        _PRESETS = _load_presets()
    return dict(_PRESETS)


def get_scheme(name: str | int) -> OfdmScheme:
    table = presets()
    key = str(name)
    if key not in table:
        raise InvalidInputError(f"unknown scheme {name!r}")
    return table[key]


# -- mapping ----------------------------------------------------------------

def map_bits(bits: np.ndarray, modulation: str) -> np.ndarray:
    """BPSK: 0 -> +1, 1 -> -1.  QPSK: Gray pairs (b0, b1) -> ((1-2 b0) + i(1-2 b1)) / sqrt 2."""
    b = np.asarray(bits, dtype=np.int8)
    if modulation == "BPSK":
        return (1 - 2 * b).astype(np.complex128)
    pairs = b.reshape(-1, 2)
    return ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1])) / math.sqrt(2)


def demap_symbols(sym: np.ndarray, modulation: str) -> np.ndarray:
    if modulation == "BPSK":
        return (sym.real < 0).astype(np.int8)
    out = np.empty((len(sym), 2), dtype=np.int8)
    out[:, 0] = sym.real < 0
    out[:, 1] = sym.imag < 0
    return out.reshape(-1)


def _window(n: int) -> np.ndarray:
    # periodic Hamming: its DFT touches only bins 0 and +-1
    return 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / n)


def _block_from_carriers(X: np.ndarray, scheme: OfdmScheme) -> np.ndarray:
    x = np.fft.ifft(X, norm="ortho")
    if scheme.windowed:
        x = x * _window(scheme.num_carriers)
    if scheme.cp_length:
        x = np.concatenate([x[-scheme.cp_length :], x])
    return x


def _layout(scheme: OfdmScheme, n_data_blocks: int) -> list[int | None]:
    """Block sequence: ``None`` for a pilot block, else the data block index."""
    if scheme.pilot_mode == "comb":
        return list(range(n_data_blocks))
    seq: list[int | None] = []
    for k in range(n_data_blocks):
        if k % scheme.block_pilot_interval == 0:
            seq.append(None)
        seq.append(k)
    return seq


def ofdm_modulate(bits, scheme: OfdmScheme) -> np.ndarray:
    """Bits to complex baseband samples (one sample per carrier spacing / N)."""
    b = np.asarray(bits, dtype=np.int8).reshape(-1)
    if b.size == 0 or b.size % scheme.bits_per_block:
        raise InvalidInputError(f"bit count must be a positive multiple of {scheme.bits_per_block}")
    if np.any((b != 0) & (b != 1)):
        raise InvalidInputError("bits must be 0 or 1")
    N = scheme.num_carriers
    data_bins = scheme.data_carriers % N
    est_bins = scheme.estimation_carriers % N
    blocks = b.reshape(-1, scheme.bits_per_block)
    out = []
    for k in _layout(scheme, len(blocks)):
        X = np.zeros(N, dtype=np.complex128)
        if k is None:
            X[est_bins] = scheme.pilot_symbols
        else:
            X[data_bins] = map_bits(blocks[k], scheme.modulation)
            if scheme.pilot_mode == "comb":
                X[est_bins] = scheme.pilot_symbols
        out.append(_block_from_carriers(X, scheme))
    return np.concatenate(out)


def _interp_complex(x_new: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.interp(x_new, x, y.real) + 1j * np.interp(x_new, x, y.imag)


def ofdm_demodulate(received, scheme: OfdmScheme, known_channel=None) -> np.ndarray:
    """Strip CP, DFT, LS estimate from pilots (interpolated across data
    carriers), one-tap equalization, hard decisions.

    ``known_channel`` (scalar or per-FFT-bin array) bypasses estimation.
    """
    r = np.asarray(received, dtype=np.complex128).reshape(-1)
    L = scheme.block_length
    if r.size == 0 or r.size % L:
        raise InvalidInputError(f"received length must be a positive multiple of {L}")
    N = scheme.num_carriers
    data_sc = scheme.data_carriers
    est_sc = scheme.estimation_carriers
    data_bins = data_sc % N
    est_bins = est_sc % N
    Y = np.fft.fft(r.reshape(-1, L)[:, scheme.cp_length :], axis=1, norm="ortho")
    gain = 0.54 if scheme.windowed else 1.0

    if scheme.pilot_mode == "block":
        n_blocks = len(Y)
        period = scheme.block_pilot_interval + 1
        if known_channel is None and n_blocks % period == 1:
            raise InvalidInputError("trailing pilot block without data")
    bits = []
    H_est = None
    for i, row in enumerate(Y):
        is_pilot_block = scheme.pilot_mode == "block" and i % (scheme.block_pilot_interval + 1) == 0
        if known_channel is not None:
            H_data = np.broadcast_to(np.asarray(known_channel, dtype=np.complex128), (N,))[data_bins] * gain
            if is_pilot_block:
                continue
        elif scheme.pilot_mode == "comb":
            ls = row[est_bins] / scheme.pilot_symbols
            H_data = _interp_complex(data_sc, est_sc, ls)
        else:
            if is_pilot_block:
                H_est = row[est_bins] / scheme.pilot_symbols
                continue
            H_data = H_est
        eq = row[data_bins] / np.where(H_data == 0, 1, H_data)
        bits.append(demap_symbols(eq, scheme.modulation))
    return np.concatenate(bits) if bits else np.zeros(0, dtype=np.int8)


# -- channel ----------------------------------------------------------------

def _segment_conv(s: np.ndarray, h: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """``(s * h)[lo:hi]`` without computing the rest of the convolution."""
    start = max(0, lo - h.size + 1)
    return np.convolve(s[start:hi], h)[lo - start : hi - start]


def apply_channel(signal, tvir: Tvir, snr_db: float, rng: np.random.Generator | None = None, sample_rate: float = SAMPLE_RATE) -> np.ndarray:
    """Time-varying convolution plus complex white noise at ``snr_db``.

    Output sample ``n`` uses the CIR linearly interpolated between the
    snapshots around time ``n / sample_rate`` (held after the last one).
    The noise power is set from the measured power of the convolved signal;
    ``snr_db = inf`` adds no noise.
    """
    s = np.asarray(signal, dtype=np.complex128).reshape(-1)
    if s.size == 0:
        raise InvalidInputError("empty signal")
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise InvalidInputError("snr_db must be a number or +inf")
    T = tvir.num_snapshots
    if s.size / sample_rate > T * tvir.time_step + 1e-9:
        raise InvalidInputError("signal is longer than the TVIR")
    n = s.size
    pos = np.arange(n) / sample_rate / tvir.time_step
    k0 = np.minimum(np.floor(pos).astype(np.int64), T - 1)
    k1 = np.minimum(k0 + 1, T - 1)
    w = np.where(k0 == k1, 0.0, pos - k0)
    # the channel is linear in h: blend the LTI outputs of the two bracketing
    # snapshots, one snapshot interval at a time
    y = np.empty(n, dtype=np.complex128)
    bounds = np.flatnonzero(np.diff(k0)) + 1
    for lo, hi in zip(np.concatenate([[0], bounds]), np.concatenate([bounds, [n]])):
        a, b = k0[lo], k1[lo]
        ya = _segment_conv(s, tvir.snapshots[a], lo, hi)
        if b != a and not np.array_equal(tvir.snapshots[a], tvir.snapshots[b]):
            # a + w (b - a) keeps equal neighbours exact
            ya = ya + w[lo:hi] * (_segment_conv(s, tvir.snapshots[b], lo, hi) - ya)
        y[lo:hi] = ya
    if snr_db == math.inf:
        return y
    if rng is None:
        raise InvalidInputError("apply_channel needs an rng for finite SNR")
    p_sig = np.mean(np.abs(y) ** 2)
    sigma = math.sqrt(p_sig / 10 ** (snr_db / 10) / 2)
    return y + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


# -- BER --------------------------------------------------------------------

@dataclass(frozen=True)
class BerResult:
    scheme: str
    snr_db: float
    bit_errors: int
    bits_total: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_total


def ber(tx_bits, rx_bits, scheme: str = "", snr_db: float = math.inf) -> BerResult:
    tx = np.asarray(tx_bits).reshape(-1)
    rx = np.asarray(rx_bits).reshape(-1)
    if tx.shape != rx.shape or tx.size == 0:
        raise InvalidInputError("bit sequences must be non-empty and of equal length")
    return BerResult(scheme, snr_db, int(np.count_nonzero(tx != rx)), int(tx.size))


def qpsk_awgn_ber(ebn0_lin):
    """Gray-coded QPSK bit error rate ``Q(sqrt(2 Eb/N0))``."""
    return 0.5 * erfc(np.sqrt(np.asarray(ebn0_lin, dtype=np.float64)))


def run_link(tvir: Tvir, scheme: OfdmScheme, snr_db: float, rng: np.random.Generator, sample_rate: float = SAMPLE_RATE) -> BerResult:
    """Send as many blocks as fit in the TVIR's duration and count bit errors."""
    n_samples = int(round(tvir.num_snapshots * tvir.time_step * sample_rate))
    n_data = scheme.data_blocks_in(n_samples)
    if n_data < 1:
        raise InvalidInputError(f"scheme {scheme.name} does not fit in a {tvir.duration:g} s TVIR")
    bits = rng.integers(0, 2, size=n_data * scheme.bits_per_block, dtype=np.int8)
    tx = ofdm_modulate(bits, scheme)
    rx = apply_channel(tx, tvir, snr_db, rng, sample_rate)
    return ber(bits, ofdm_demodulate(rx, scheme), scheme.name, snr_db)


@dataclass(frozen=True)
class BerSummary:
    scheme: str
    snr_db: float
    mean_ber: float
    p75_ber: float
    n_channels: int
    bits_total: int

    COLUMNS = ("scheme", "snr_db", "mean_ber", "p75_ber", "n_channels", "bits_total")


def evaluate(
    tvirs: Sequence[Tvir],
    scheme: OfdmScheme,
    snr_grid: Iterable[float],
    seed: int = 0,
    trials: int = 1,
) -> list[BerSummary]:
    """BER of ``scheme`` over every TVIR at each SNR; each (tvir, snr, trial)
    uses its own random stream."""
    if not len(tvirs):
        raise InvalidInputError("no channels to evaluate")
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    rows = []
    for snr in snr_grid:
        per_channel = []
        bits_total = 0
        for i, tv in enumerate(tvirs):
            errs = bits = 0
            for k in range(trials):
                res = run_link(tv, scheme, float(snr), rngmod.stream(seed, "ber", scheme.name, i, k, repr(float(snr))))
                errs += res.bit_errors
                bits += res.bits_total
            per_channel.append(errs / bits)
            bits_total += bits
        rows.append(
            BerSummary(scheme.name, float(snr), float(np.mean(per_channel)), float(np.percentile(per_channel, 75)), len(tvirs), bits_total)
        )
    return rows


def write_ber_csv(path: str | os.PathLike, rows: Sequence[BerSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BerSummary.COLUMNS)
        for r in rows:
            w.writerow([r.scheme, repr(r.snr_db), repr(r.mean_ber), repr(r.p75_ber), r.n_channels, r.bits_total])
