"""Simulated TVIR corpora.

Environments are drawn from the pre-training parameter table, a nominal
multipath arrival structure comes from an isovelocity image-source model of
a flat waveguide, and time variation is added per path as complex AR(1)
fading plus an optional Gaussian delay random walk.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping

import numpy as np

from . import rng as rngmod
from .errors import InvalidInputError
from .formats import write_uatv
from .tvir import DEFAULT_ANCHOR, DEFAULT_DELAY_STEP, DEFAULT_TIME_STEP, Tvir, normalize_tvir

logger = logging.getLogger(__name__)

# (kind, a, b): uniform on [a, b] or normal with mean a and standard deviation b.
PARAMETER_TABLE: dict[str, tuple[str, float, float]] = {
    "surface_sound_speed": ("uniform", 1500.0, 1550.0),
    "sound_speed_gradient": ("normal", 0.0, 0.05),
    "water_depth": ("uniform", 10.0, 100.0),
    "range": ("uniform", 1.0, 1000.0),
    "relative_density": ("uniform", 1.145, 2.5),
    "relative_sound_speed": ("uniform", 0.98, 2.5),
    "absorption": ("uniform", 0.0, 0.0022),
    "surface_reflection_coeff": ("uniform", 0.5, 1.0),
}
DEPTH_MARGIN = 2.5  # source/receiver depth is U(2.5, d - 2.5)


@dataclass(frozen=True)
class Environment:
    surface_sound_speed: float
    sound_speed_gradient: float
    water_depth: float
    source_depth: float
    receiver_depth: float
    range: float
    relative_density: float
    relative_sound_speed: float
    absorption: float
    surface_reflection_coeff: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class Arrival:
    delay: float
    complex_gain: complex
    surface_bounces: int
    bottom_bounces: int
    grazing_angle_bottom: float
    length: float


@dataclass
class PathSet:
    paths: list[Arrival]

    def __post_init__(self) -> None:
        if not self.paths:
            raise InvalidInputError("a PathSet needs at least the direct path")
        self.paths.sort(key=lambda p: p.delay)

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths])

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.complex_gain for p in self.paths], dtype=np.complex128)


@dataclass(frozen=True)
class DynamicsConfig:
    """Small-scale dynamics knobs.

    The defaults are desk-scale placeholders, not measured values.
    """

    doppler_bandwidth: float = 1.0
    fading_std: float = 0.1
    delay_drift_std: float = 0.0

    def __post_init__(self) -> None:
        if self.doppler_bandwidth < 0 or self.fading_std < 0 or self.delay_drift_std < 0:
            raise InvalidInputError("dynamics parameters must be non-negative")


def sample_environment(
    rng: np.random.Generator, table: Mapping[str, tuple[str, float, float]] | None = None
) -> Environment:
    """Draw one environment; fields are independent given the water depth."""
    spec = dict(PARAMETER_TABLE)
    if table:
        spec.update(table)

    def draw(name: str) -> float:
        kind, a, b = spec[name]
        if kind == "uniform":
            return float(rng.uniform(a, b))
        if kind == "normal":
            return float(rng.normal(a, b))
        raise InvalidInputError(f"unknown distribution kind {kind!r} for {name}")

    c = draw("surface_sound_speed")
    g = draw("sound_speed_gradient")
    d = draw("water_depth")
    if d < 2 * DEPTH_MARGIN:
        raise InvalidInputError(f"water depth {d} m leaves no room for source/receiver")
    zs = float(rng.uniform(DEPTH_MARGIN, d - DEPTH_MARGIN))
    zr = float(rng.uniform(DEPTH_MARGIN, d - DEPTH_MARGIN))
    return Environment(
        surface_sound_speed=c,
        sound_speed_gradient=g,
        water_depth=d,
        source_depth=zs,
        receiver_depth=zr,
        range=draw("range"),
        relative_density=draw("relative_density"),
        relative_sound_speed=draw("relative_sound_speed"),
        absorption=draw("absorption"),
        surface_reflection_coeff=draw("surface_reflection_coeff"),
    )


def rayleigh_reflection(
    grazing_angle: float, relative_density: float, relative_sound_speed: float, absorption: float
) -> complex:
    """Plane-wave reflection coefficient of a fluid half-space bottom.

    ``n = (1 + i*absorption) / relative_sound_speed`` is the complex index of
    refraction, ``m`` the density ratio.  The principal square root keeps
    ``|R| <= 1`` for any passive bottom (``absorption >= 0``).
    """
    if relative_sound_speed <= 0:
        raise InvalidInputError("relative_sound_speed must be positive")
    if not 0 < grazing_angle <= math.pi / 2 + 1e-12:
        raise InvalidInputError("grazing angle must be in (0, pi/2]")
    n = (1 + 1j * absorption) / relative_sound_speed
    m = relative_density
    t1 = m * math.sin(grazing_angle)
    t2 = np.sqrt(complex(n * n - math.cos(grazing_angle) ** 2))
    return complex((t1 - t2) / (t1 + t2))


def _vertical_offsets(k: int, zs: float, zr: float, d: float) -> list[tuple[float, int, int]]:
    """Unfolded vertical travel for the two k-bounce image families.

    Returns ``(dz, surface_bounces, bottom_bounces)`` per family.
    """
    if k == 0:
        return [(abs(zr - zs), 0, 0)]
    up_last = zr if k % 2 else d - zr  # first bounce at the surface
    down_last = d - zr if k % 2 else zr  # first bounce at the bottom
    up = (zs + (k - 1) * d + up_last, (k + 1) // 2, k // 2)
    down = ((d - zs) + (k - 1) * d + down_last, k // 2, (k + 1) // 2)
    return [up, down]


def nominal_cir(env: Environment, max_delay: float, max_bounces: int) -> PathSet:
    """Eigenrays of an isovelocity flat waveguide via image sources.

    Path gain is ``(1/L) * (-surface_coeff)^s * R_bottom(theta)^b`` with the
    grazing angle ``theta = atan(dz / range)`` shared by every bounce.  Only
    paths arriving within ``max_delay`` of the direct path are kept.
    """
    if max_delay <= 0:
        raise InvalidInputError("max_delay must be positive")
    if max_bounces < 0:
        raise InvalidInputError("max_bounces must be >= 0")
    d = env.water_depth
    for z in (env.source_depth, env.receiver_depth):
        if not 0 <= z <= d:
            raise InvalidInputError(f"depth {z} m outside the water column [0, {d}]")
    c, r = env.surface_sound_speed, env.range

    direct_len = math.hypot(r, env.receiver_depth - env.source_depth)
    cutoff = direct_len / c + max_delay
    paths: list[Arrival] = []
    for k in range(max_bounces + 1):
        for dz, s, b in _vertical_offsets(k, env.source_depth, env.receiver_depth, d):
            length = math.hypot(r, dz)
            delay = length / c
            if delay > cutoff + 1e-15:
                continue
            theta = math.atan2(dz, r)
            gain = complex(1.0 / length)
            if s:
                gain *= (-env.surface_reflection_coeff) ** s
            if b:
                rb = rayleigh_reflection(
                    theta, env.relative_density, env.relative_sound_speed, env.absorption
                )
                gain *= rb**b
            paths.append(Arrival(delay, gain, s, b, theta if b else 0.0, length))
    return PathSet(paths)


def sinc_kernel(offset: np.ndarray, half_width: int = 4) -> np.ndarray:
    """Hann-windowed sinc evaluated at tap offsets (9 taps for half_width 4)."""
    w = 0.5 * (1 + np.cos(np.pi * offset / (half_width + 1)))
    return np.sinc(offset) * np.where(np.abs(offset) <= half_width + 1, w, 0.0)


def rasterize(
    positions: np.ndarray, gains: np.ndarray, num_taps: int, half_width: int = 4
) -> tuple[np.ndarray, int]:
    """Place paths at fractional tap ``positions`` on a ``num_taps`` grid.

    Returns the CIR and the number of paths dropped for falling off the grid.
    """
    cir = np.zeros(num_taps, dtype=np.complex128)
    dropped = 0
    for pos, g in zip(positions, gains):
        centre = int(np.floor(pos + 0.5))
        if centre < 0 or centre > num_taps - 1:
            dropped += 1
            continue
        taps = np.arange(centre - half_width, centre + half_width + 1)
        keep = (taps >= 0) & (taps < num_taps)
        taps = taps[keep]
        cir[taps] += g * sinc_kernel(taps - pos, half_width)
    return cir, dropped


def ar1_fading(
    num_paths: int, num_snapshots: int, rho: float, std: float, rng: np.random.Generator
) -> np.ndarray:
    """Unit-mean complex AR(1) gains ``1 + u``; each part of ``u`` has std ``std``."""
    gam = np.ones((num_snapshots, num_paths), dtype=np.complex128)
    if std == 0:
        return gam
    innov = np.sqrt(max(0.0, 1.0 - rho * rho)) * std
    u = std * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))
    gam[0] += u
    for t in range(1, num_snapshots):
        u = rho * u + innov * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))
        gam[t] += u
    return gam


def evolve_tvir(
    nominal: PathSet,
    num_snapshots: int,
    dyn: DynamicsConfig,
    num_taps: int = 250,
    time_step: float = DEFAULT_TIME_STEP,
    delay_step: float = DEFAULT_DELAY_STEP,
    rng: np.random.Generator | None = None,
    anchor_index: int = DEFAULT_ANCHOR,
    normalize: bool = True,
) -> Tvir:
    """Perturb a nominal arrival structure into a TVIR.

    Arrivals keep their relative delays; the whole structure is shifted so
    the strongest tap of the first snapshot lands on ``anchor_index``.  Paths drifting off the grid are dropped and
    counted in ``metadata["dropped_paths"]``.
    """
    if num_snapshots < 1:
        raise InvalidInputError("num_snapshots must be >= 1")
    if len(nominal) == 0:
        raise InvalidInputError("empty path set")
    if rng is None:
        rng = np.random.default_rng()
    delays = nominal.delays
    gains = nominal.gains
    n_paths = len(delays)
    base_pos = anchor_index + (delays - delays[0]) / delay_step

    rho = math.exp(-2 * math.pi * dyn.doppler_bandwidth * time_step)
    gam = ar1_fading(n_paths, num_snapshots, rho, dyn.fading_std, rng)
    if dyn.delay_drift_std > 0:
        steps = rng.normal(0.0, dyn.delay_drift_std, size=(num_snapshots, n_paths))
        steps[0] = 0.0
        drift = np.cumsum(steps, axis=0) / delay_step
    else:
        drift = np.zeros((num_snapshots, n_paths))

    # Shift (non-circularly) so the first snapshot's strongest tap sits on the
    # anchor; normalize_tvir then has nothing to wrap.
    first, _ = rasterize(base_pos + drift[0], gains * gam[0], num_taps)
    base_pos = base_pos + (anchor_index - int(np.argmax(np.abs(first))))

    x = np.empty((num_snapshots, num_taps), dtype=np.complex128)
    dropped = 0
    for t in range(num_snapshots):
        x[t], n_drop = rasterize(base_pos + drift[t], gains * gam[t], num_taps)
        dropped += n_drop
    if dropped:
        logger.debug("evolve_tvir: dropped %d path-snapshots outside the delay window", dropped)
    tvir = Tvir(x, time_step=time_step, delay_step=delay_step, metadata={"dropped_paths": dropped})
    if normalize:
        tvir, _ = normalize_tvir(tvir, anchor_index)
    return tvir


@dataclass
class GenerationConfig:
    """Settings for :func:`generate_dataset` (also the YAML schema)."""

    count: int = 100
    paired: bool = False
    num_snapshots: int = 20
    num_taps: int = 250
    snapshot_rate: float = 20.0
    tap_rate: float = 12000.0
    anchor_index: int = DEFAULT_ANCHOR
    max_bounces: int = 4
    doppler_bandwidth: float = 1.0
    fading_std: float = 0.1
    delay_drift_std: float = 0.0
    seed: int = 0
    table: dict[str, list] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "GenerationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown generation keys: {sorted(unknown)}")
        return cls(**dict(data))

    @property
    def dynamics(self) -> DynamicsConfig:
        return DynamicsConfig(self.doppler_bandwidth, self.fading_std, self.delay_drift_std)

    def parameter_table(self) -> dict[str, tuple[str, float, float]]:
        out = {}
        for name, spec in self.table.items():
            if name not in PARAMETER_TABLE:
                raise InvalidInputError(f"unknown environment parameter {name!r}")
            if len(spec) == 2:
                out[name] = (PARAMETER_TABLE[name][0], float(spec[0]), float(spec[1]))
            else:
                out[name] = (str(spec[0]), float(spec[1]), float(spec[2]))
        return out


def simulate_record(cfg: GenerationConfig, index: int) -> Tvir:
    """One dataset record, drawn from its own ``(seed, index)`` stream."""
    rng = rngmod.stream(cfg.seed, "sim-record", index)
    env = sample_environment(rng, cfg.parameter_table())
    delay_step = 1.0 / cfg.tap_rate
    max_delay = (cfg.num_taps - 1 - cfg.anchor_index) * delay_step
    paths = nominal_cir(env, max_delay=max_delay, max_bounces=cfg.max_bounces)
    n = cfg.num_snapshots * (2 if cfg.paired else 1)
    tvir = evolve_tvir(
        paths,
        n,
        cfg.dynamics,
        num_taps=cfg.num_taps,
        time_step=1.0 / cfg.snapshot_rate,
        delay_step=delay_step,
        rng=rng,
        anchor_index=cfg.anchor_index,
    )
    tvir.metadata.update(
        {
            "environment": env.to_dict(),
            "seed": cfg.seed,
            "index": index,
            "num_paths": len(paths),
            "paired": cfg.paired,
            "source": "simulated",
        }
    )
    return tvir


def generate_dataset(cfg: GenerationConfig, path: str | os.PathLike) -> list[Tvir]:
    """Simulate ``cfg.count`` records and write them to a UATV file.

    In paired mode each record holds ``2T`` snapshots: the first half is the
    condition, the second the target.
    """
    if cfg.count < 1:
        raise InvalidInputError("count must be >= 1")
    records = [simulate_record(cfg, i) for i in range(cfg.count)]
    write_uatv(path, records)
    return records


def split_pair(record: Tvir, anchor_index: int = DEFAULT_ANCHOR) -> tuple[Tvir, Tvir]:
    """Split a paired record into separately normalized (condition, target) TVIRs."""
    t = record.num_snapshots
    if t % 2:
        raise InvalidInputError("paired record must have an even number of snapshots")
    half = t // 2
    cond, _ = normalize_tvir(record.with_snapshots(record.snapshots[:half].copy()), anchor_index)
    targ, _ = normalize_tvir(record.with_snapshots(record.snapshots[half:].copy()), anchor_index)
    return cond, targ
