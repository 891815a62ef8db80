"""m-sequence channel probes and NLMS tracking of the channel response."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from ..tvir import Tvir

# Feedback taps (exponents of a primitive polynomial over GF(2)) per register length.
PRIMITIVE_TAPS: dict[int, tuple[int, ...]] = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 11, 10, 4),
    13: (13, 12, 11, 8),
    14: (14, 13, 12, 2),
    15: (15, 14),
    16: (16, 15, 13, 4),
}


def msequence(order: int) -> np.ndarray:
    """Maximal-length LFSR output of length ``2**order - 1`` mapped 0 -> +1, 1 -> -1."""
    if order not in PRIMITIVE_TAPS:
        raise InvalidInputError(f"no stored primitive polynomial for order {order}")
    taps = PRIMITIVE_TAPS[order]
    n = (1 << order) - 1
    state = [1] * order
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        out[i] = state[-1]
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return (1 - 2 * out).astype(np.float64)


def nlms_estimate(
    probe,
    received,
    num_taps: int,
    mu: float = 0.5,
    eps_reg: float = 1e-6,
    snapshot_interval: int = 600,
    time_step: float = 0.05,
    delay_step: float = 1 / 12000,
    h0=None,
) -> Tvir:
    """Track ``received[n] = sum_j h_j[n] probe[n - j]`` with NLMS.

    The regressor is ``[probe[n], probe[n-1], ...]`` with zeros before the
    start.  The weights after samples ``interval-1, 2*interval-1, ...`` form
    the snapshots.  Updates whose regressor has no energy are counted in
    ``metadata["zero_energy_updates"]``.
    """
    x = np.asarray(probe, dtype=np.complex128).reshape(-1)
    y = np.asarray(received, dtype=np.complex128).reshape(-1)
    if num_taps < 1:
        raise InvalidInputError("num_taps must be >= 1")
    if not 0 <= mu <= 2:
        raise InvalidInputError("mu must lie in [0, 2]")
    if eps_reg < 0:
        raise InvalidInputError("eps_reg must be non-negative")
    if x.size != y.size or x.size == 0:
        raise InvalidInputError("probe and received must be non-empty and of equal length")
    if snapshot_interval < 1 or x.size < snapshot_interval:
        raise InvalidInputError("need at least one full snapshot interval of samples")
    h = np.zeros(num_taps, dtype=np.complex128) if h0 is None else np.array(h0, dtype=np.complex128)
    if h.shape != (num_taps,):
        raise InvalidInputError("h0 has the wrong length")
    padded = np.concatenate([np.zeros(num_taps - 1, dtype=np.complex128), x])
    snaps = []
    zero_updates = 0
    for n in range(x.size):
        u = padded[n : n + num_taps][::-1]
        e = y[n] - h @ u
        power = np.vdot(u, u).real
        if power == 0:
            zero_updates += 1
        if power + eps_reg > 0:
            h = h + mu * np.conj(u) * e / (power + eps_reg)
        if (n + 1) % snapshot_interval == 0:
            snaps.append(h.copy())
    return Tvir(np.array(snaps), time_step=time_step, delay_step=delay_step,
                metadata={"zero_energy_updates": zero_updates, "mu": mu})


def estimation_nmse_db(h_est, h_true) -> float:
    h_est = np.asarray(h_est)
    h_true = np.asarray(h_true)
    return float(10 * np.log10(np.sum(np.abs(h_est - h_true) ** 2) / np.sum(np.abs(h_true) ** 2)))
