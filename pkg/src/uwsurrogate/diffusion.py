"""Conditional DDPM over 128-d autoencoder latents."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import torch

from . import rng as rngmod
from .errors import InvalidInputError
from .formats import load_checkpoint, save_checkpoint
from .nn.engine import ParamStore, dense_forward, layer_norm, leaky_relu, xavier_uniform
from .nn.training import EpochRecord, TrainConfig, fit

CHECKPOINT_KIND = "diffusion"
EMBED_DIM = 32
LATENT_DIM = 128


# -- schedules ----------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSchedule:
    """Arrays are indexed by ``t - 1`` for steps ``t = 1..T``."""

    kind: str
    beta: np.ndarray
    beta_min: float = float("nan")
    beta_max: float = float("nan")

    @property
    def steps(self) -> int:
        return len(self.beta)

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alpha)

    def check_step(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.steps:
            raise InvalidInputError(f"diffusion step {t} outside 1..{self.steps}")
        return t

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "steps": self.steps, "beta_min": self.beta_min, "beta_max": self.beta_max}

    @classmethod
    def from_betas(cls, beta, kind: str = "custom") -> "NoiseSchedule":
        """Arbitrary betas in ``[0, 1)``; ``beta = 0`` gives no-op steps."""
        b = np.asarray(beta, dtype=np.float64).reshape(-1)
        if b.size < 1 or np.any(b < 0) or np.any(b >= 1):
            raise InvalidInputError("betas must lie in [0, 1)")
        return cls(kind, b)


def sigmoid_beta(frac, beta_min: float = 1e-4, beta_max: float = 1e-2):
    """``beta_min + (beta_max - beta_min) / (1 + exp(-10 (frac - 0.5)))``."""
    return beta_min + (beta_max - beta_min) / (1.0 + np.exp(-10.0 * (np.asarray(frac, dtype=np.float64) - 0.5)))


def make_schedule(kind: str = "linear", steps: int = 100, beta_min: float = 1e-4, beta_max: float = 1e-2) -> NoiseSchedule:
    if steps < 1:
        raise InvalidInputError("schedule needs at least one step")
    if not 0 < beta_min < beta_max < 1:
        raise InvalidInputError("need 0 < beta_min < beta_max < 1")
    if kind == "linear":
        beta = np.linspace(beta_min, beta_max, steps) if steps > 1 else np.array([beta_min])
    elif kind == "sigmoid":
        beta = sigmoid_beta(np.arange(1, steps + 1) / steps, beta_min, beta_max)
    else:
        raise InvalidInputError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(kind, beta, beta_min, beta_max)


def schedule_from_dict(d: dict[str, Any]) -> NoiseSchedule:
    return make_schedule(d["kind"], int(d["steps"]), float(d["beta_min"]), float(d["beta_max"]))


# -- forward process --------------------------------------------------------------

def forward_sample(z0, t: int, eps, sched: NoiseSchedule):
    """``sqrt(abar_t) z0 + sqrt(1 - abar_t) eps``.  Works for numpy or torch;
    ``t`` may be an int or an integer array broadcast against the batch."""
    if np.ndim(t) == 0:
        ab = sched.alpha_bar[sched.check_step(t) - 1]
    else:
        t = np.asarray(t)
        if t.min() < 1 or t.max() > sched.steps:
            raise InvalidInputError(f"diffusion steps outside 1..{sched.steps}")
        ab = sched.alpha_bar[t - 1][:, None]
        if isinstance(z0, torch.Tensor):
            ab = torch.as_tensor(ab, dtype=z0.dtype)
    if isinstance(z0, torch.Tensor):
        ab = torch.as_tensor(ab, dtype=z0.dtype)
        return torch.sqrt(ab) * z0 + torch.sqrt(1 - ab) * eps
    return np.sqrt(ab) * np.asarray(z0) + np.sqrt(1 - ab) * np.asarray(eps)


def iterated_forward(z0, t: int, rng: np.random.Generator, sched: NoiseSchedule) -> np.ndarray:
    """Apply ``z_s = sqrt(1 - beta_s) z_{s-1} + sqrt(beta_s) eps`` for s = 1..t."""
    t = sched.check_step(t)
    z = np.array(z0, dtype=np.float64)
    for s in range(t):
        b = sched.beta[s]
        z = np.sqrt(1 - b) * z + np.sqrt(b) * rng.standard_normal(z.shape)
    return z


def time_embedding(t, dim: int = EMBED_DIM) -> np.ndarray:
    """Interleaved ``[sin(t w_0), cos(t w_0), sin(t w_1), ...]`` with
    ``w_k = 10000^(-2k/dim)``.  ``t`` may be a scalar or a 1-d array."""
    if dim % 2:
        raise InvalidInputError("embedding dimension must be even")
    t_arr = np.asarray(t, dtype=np.float64)
    w = 10000.0 ** (-2.0 * np.arange(dim // 2) / dim)
    ang = t_arr[..., None] * w
    out = np.empty(t_arr.shape + (dim,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


# -- denoiser ---------------------------------------------------------------------

@dataclass(frozen=True)
class DenoiserConfig:
    latent_dim: int = LATENT_DIM
    embed_dim: int = EMBED_DIM
    width: int = 2048
    blocks: int = 3

    @property
    def input_dim(self) -> int:
        return 2 * self.latent_dim + self.embed_dim


class DenoiserModel:
    """Input projection, ``blocks`` x (dense, layer norm, LeakyReLU), a linear
    bridge from the raw input added before the head, head to ``latent_dim``.

    The head starts at zero so an untrained model predicts zero noise.
    """

    def __init__(self, config: DenoiserConfig = DenoiserConfig(), seed: int = 0, dtype: torch.dtype = torch.float32):
        self.config = config
        self.store = ParamStore(dtype)
        rng = rngmod.stream(seed, "denoiser-init")
        c = config
        self.store.add("in.W", xavier_uniform(rng, c.width, c.input_dim))
        self.store.add("in.b", np.zeros(c.width))
        for k in range(c.blocks):
            self.store.add(f"h{k}.W", xavier_uniform(rng, c.width, c.width))
            self.store.add(f"h{k}.b", np.zeros(c.width))
            self.store.add(f"h{k}.ln_g", np.ones(c.width))
            self.store.add(f"h{k}.ln_b", np.zeros(c.width))
        self.store.add("bridge.W", xavier_uniform(rng, c.width, c.input_dim))
        self.store.add("head.W", np.zeros((c.latent_dim, c.width)))
        self.store.add("head.b", np.zeros(c.latent_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        s = self.store
        h = dense_forward(s["in.W"], s["in.b"], x)
        for k in range(self.config.blocks):
            h = dense_forward(s[f"h{k}.W"], s[f"h{k}.b"], h)
            h = leaky_relu(layer_norm(h, s[f"h{k}.ln_g"], s[f"h{k}.ln_b"]))
        h = h + x @ s["bridge.W"].T
        return dense_forward(s["head.W"], s["head.b"], h)

    def copy(self) -> "DenoiserModel":
        out = DenoiserModel.__new__(DenoiserModel)
        out.config = self.config
        out.store = self.store.to(self.store.dtype)
        return out


def _inputs(model: DenoiserModel, z_t, z_c, t) -> torch.Tensor:
    dt = model.store.dtype
    z_t = torch.as_tensor(z_t, dtype=dt)
    z_c = torch.as_tensor(z_c, dtype=dt)
    single = z_t.ndim == 1
    if single:
        z_t, z_c = z_t[None], z_c[None]
    L = model.config.latent_dim
    if z_t.shape[-1] != L or z_c.shape != z_t.shape:
        raise InvalidInputError(f"latents must have shape (..., {L}) and agree")
    t_arr = np.broadcast_to(np.asarray(t), (z_t.shape[0],))
    emb = torch.as_tensor(time_embedding(t_arr, model.config.embed_dim), dtype=dt)
    return torch.cat([z_t, z_c, emb], dim=-1), single


def denoise_predict(model: DenoiserModel, z_t, z_c, t, sched: NoiseSchedule | None = None) -> torch.Tensor:
    """Predicted noise for ``z_t`` given condition ``z_c`` at step ``t``."""
    if sched is not None:
        ts = np.asarray(t)
        if ts.min() < 1 or ts.max() > sched.steps:
            raise InvalidInputError(f"diffusion step outside 1..{sched.steps}")
    x, single = _inputs(model, z_t, z_c, t)
    out = model.forward(x)
    return out[0] if single else out


# -- reverse process --------------------------------------------------------------

def reverse_step(z_t, eps_hat, t: int, sched: NoiseSchedule, rng: np.random.Generator | None = None, noise=None) -> np.ndarray:
    """One ancestral step with ``sigma_t = sqrt(beta_t)``; no noise at ``t = 1``.

    ``noise`` overrides the draw from ``rng`` (same shape as ``z_t``).
    """
    t = sched.check_step(t)
    b = sched.beta[t - 1]
    a = 1.0 - b
    ab = sched.alpha_bar[t - 1]
    z_t = np.asarray(z_t, dtype=np.float64)
    coef = 0.0 if b == 0 else b / math.sqrt(1.0 - ab)
    z = (z_t - coef * np.asarray(eps_hat, dtype=np.float64)) / math.sqrt(a)
    if t > 1 and b > 0:
        if noise is None:
            if rng is None:
                raise InvalidInputError("reverse_step needs rng or noise for t > 1")
            noise = rng.standard_normal(z_t.shape)
        z = z + math.sqrt(b) * np.asarray(noise)
    return z


def generate(model: DenoiserModel, z_c, sched: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Sample ``z_0`` for each condition row in ``z_c`` (whitened space)."""
    z_c = np.asarray(z_c, dtype=np.float64)
    single = z_c.ndim == 1
    zc = z_c[None] if single else z_c
    z = rng.standard_normal(zc.shape)
    with torch.no_grad():
        for t in range(sched.steps, 0, -1):
            eps_hat = denoise_predict(model, z, zc, t).double().numpy()
            z = reverse_step(z, eps_hat, t, sched, rng)
    return z[0] if single else z


# -- whitening and the full surrogate ----------------------------------------------

@dataclass
class Whitening:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, latents: np.ndarray) -> "Whitening":
        x = np.asarray(latents, dtype=np.float64)
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    @classmethod
    def identity(cls, dim: int = LATENT_DIM) -> "Whitening":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, z):
        return (np.asarray(z, dtype=np.float64) - self.mean) / self.std

    def invert(self, w):
        return np.asarray(w, dtype=np.float64) * self.std + self.mean


@dataclass
class LatentDiffusion:
    """Denoiser plus the schedule and whitening it was trained with."""

    model: DenoiserModel
    schedule: NoiseSchedule
    whitening: Whitening

    def sample(self, z_c, rng: np.random.Generator) -> np.ndarray:
        """Raw-latent conditions in, raw-latent samples out."""
        w = generate(self.model, self.whitening.apply(z_c), self.schedule, rng)
        return self.whitening.invert(w)

    def copy(self) -> "LatentDiffusion":
        return LatentDiffusion(self.model.copy(), self.schedule, Whitening(self.whitening.mean.copy(), self.whitening.std.copy()))

    def save(self, path: str | os.PathLike, extra: dict[str, Any] | None = None) -> None:
        hparams = {
            "kind": CHECKPOINT_KIND,
            "config": asdict(self.model.config),
            "schedule": self.schedule.to_dict(),
        }
        if extra:
            hparams.update(extra)
        tensors = dict(self.model.store.state_dict())
        tensors["whitening.mean"] = self.whitening.mean
        tensors["whitening.std"] = self.whitening.std
        save_checkpoint(path, hparams, tensors)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LatentDiffusion":
        hparams, tensors = load_checkpoint(path)
        if hparams.get("kind") != CHECKPOINT_KIND:
            raise InvalidInputError(f"{path} is a {hparams.get('kind')!r} checkpoint, not a diffusion model")
        model = DenoiserModel(DenoiserConfig(**hparams["config"]))
        wm = tensors.pop("whitening.mean").astype(np.float64)
        ws = tensors.pop("whitening.std").astype(np.float64)
        model.store.load_state(tensors)
        return cls(model, schedule_from_dict(hparams["schedule"]), Whitening(wm, ws))


# -- training ---------------------------------------------------------------------

@dataclass
class DiffusionTrainConfig(TrainConfig):
    patience: int = 5
    schedule: dict[str, Any] = field(default_factory=lambda: {"kind": "linear", "steps": 100, "beta_min": 1e-4, "beta_max": 1e-2})
    width: int = 2048
    whiten: bool = True


FINE_TUNE_PRESETS: dict[str, dict[str, float]] = {
    "pretrain": {"learning_rate": 1e-3, "patience": 5},
    "finetune": {"learning_rate": 5e-3, "patience": 50},
}


def noise_loss(model: DenoiserModel, z0: torch.Tensor, zc: torch.Tensor, t: np.ndarray, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """Mean over the batch of ``|eps_hat - eps|^2`` (summed over dimensions)."""
    z_t = forward_sample(z0, t, eps, sched)
    eps_hat = denoise_predict(model, z_t, zc, t)
    return ((eps_hat - eps) ** 2).sum(dim=-1).mean()


def _draw(rng: np.random.Generator, n: int, sched: NoiseSchedule, dim: int) -> tuple[np.ndarray, np.ndarray]:
    t = rng.integers(1, sched.steps + 1, size=n)
    eps = rng.standard_normal((n, dim))
    return t, eps


def _fixed_eval(model: DenoiserModel, targets: np.ndarray, conds: np.ndarray, sched: NoiseSchedule, seed: int) -> float:
    """Noise-prediction loss with steps and noise drawn once from ``seed``."""
    rng = rngmod.stream(seed, "diffusion-validation")
    t, eps = _draw(rng, len(targets), sched, targets.shape[1])
    dt = model.store.dtype
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(targets), 512):
            sl = slice(i, i + 512)
            loss = noise_loss(
                model, torch.as_tensor(targets[sl], dtype=dt), torch.as_tensor(conds[sl], dtype=dt),
                t[sl], torch.as_tensor(eps[sl], dtype=dt), sched,
            )
            total += float(loss) * len(targets[sl])
    return total / len(targets)


def _prepare(model: LatentDiffusion | None, cfg: DiffusionTrainConfig, fit_data: np.ndarray) -> LatentDiffusion:
    if model is not None:
        return model.copy()
    sched = schedule_from_dict(cfg.schedule)
    wh = Whitening.fit(fit_data) if cfg.whiten else Whitening.identity(fit_data.shape[1])
    den = DenoiserModel(DenoiserConfig(latent_dim=fit_data.shape[1], width=cfg.width), seed=cfg.seed)
    return LatentDiffusion(den, sched, wh)


def initial_loss(ld: LatentDiffusion, targets: np.ndarray, conds: np.ndarray, seed: int = 0) -> float:
    """Fixed-draw validation loss, the reference for the smoke threshold."""
    return _fixed_eval(ld.model, ld.whitening.apply(targets), ld.whitening.apply(conds), ld.schedule, seed)


def train_diffusion(
    train_cond: np.ndarray,
    train_target: np.ndarray,
    val_cond: np.ndarray,
    val_target: np.ndarray,
    cfg: DiffusionTrainConfig,
    model: LatentDiffusion | None = None,
) -> tuple[LatentDiffusion, list[EpochRecord]]:
    """Fit the denoiser on condition/target latent pairs (raw latents)."""
    tc, tt = np.asarray(train_cond, np.float64), np.asarray(train_target, np.float64)
    vc, vt = np.asarray(val_cond, np.float64), np.asarray(val_target, np.float64)
    if len(tt) == 0 or len(vt) == 0:
        raise InvalidInputError("train and validation pair sets must be non-empty")
    if tc.shape != tt.shape or vc.shape != vt.shape:
        raise InvalidInputError("condition and target arrays must have the same shape")
    ld = _prepare(model, cfg, np.concatenate([tc, tt]))
    wc, wt = ld.whitening.apply(tc), ld.whitening.apply(tt)
    vwc, vwt = ld.whitening.apply(vc), ld.whitening.apply(vt)
    dt = ld.model.store.dtype
    sched = ld.schedule

    def batch_loss(idx, rng):
        t, eps = _draw(rng, len(idx), sched, wt.shape[1])
        loss = noise_loss(
            ld.model, torch.as_tensor(wt[idx], dtype=dt), torch.as_tensor(wc[idx], dtype=dt),
            t, torch.as_tensor(eps, dtype=dt), sched,
        )
        return loss, {}

    def validate():
        return _fixed_eval(ld.model, vwt, vwc, sched, cfg.seed), {}

    history = fit(ld.model.store, len(wt), batch_loss, validate, cfg, stream_name="diffusion-train")
    return ld, history


def random_pairing(n: int, rng: np.random.Generator) -> np.ndarray:
    """For each target index, a uniformly drawn condition index other than itself."""
    if n < 2:
        raise InvalidInputError("pairing needs at least two latents")
    k = rng.integers(0, n - 1, size=n)
    return k + (k >= np.arange(n))


def fine_tune_generative(
    latents: np.ndarray,
    cfg: DiffusionTrainConfig,
    model: LatentDiffusion | None = None,
    monitor: np.ndarray | None = None,
) -> tuple[LatentDiffusion, list[EpochRecord]]:
    """Unpaired fine-tuning: each epoch pairs every target with a freshly drawn
    condition from the same set.  ``monitor`` (default: the training set)
    gets one fixed pairing that drives the plateau schedule."""
    z = np.asarray(latents, np.float64)
    if len(z) < 2:
        raise InvalidInputError("fine-tuning needs at least two latents")
    mon = z if monitor is None else np.asarray(monitor, np.float64)
    if len(mon) < 2:
        raise InvalidInputError("monitoring set needs at least two latents")
    ld = _prepare(model, cfg, z)
    wz = ld.whitening.apply(z)
    wm = ld.whitening.apply(mon)
    mon_pair = random_pairing(len(wm), rngmod.stream(cfg.seed, "monitor-pairing"))
    dt = ld.model.store.dtype
    sched = ld.schedule
    state = {"epoch_rng_id": None, "pairing": None}

    def batch_loss(idx, rng):
        # fit() hands the same generator to every batch of an epoch; draw the
        # epoch's pairing from it the first time it is seen
        if state["epoch_rng_id"] is not rng:
            state["epoch_rng_id"] = rng
            state["pairing"] = random_pairing(len(wz), rng)
        cond = state["pairing"][idx]
        t, eps = _draw(rng, len(idx), sched, wz.shape[1])
        loss = noise_loss(
            ld.model, torch.as_tensor(wz[idx], dtype=dt), torch.as_tensor(wz[cond], dtype=dt),
            t, torch.as_tensor(eps, dtype=dt), sched,
        )
        return loss, {}

    def validate():
        return _fixed_eval(ld.model, wm, wm[mon_pair], sched, cfg.seed), {}

    history = fit(ld.model.store, len(wz), batch_loss, validate, cfg, stream_name="diffusion-finetune")
    return ld, history


def epoch_pairings(n: int, seed: int, epochs: int) -> list[np.ndarray]:
    """The pairings :func:`fine_tune_generative` would draw for the first
    ``epochs`` epochs, for inspection.  The pairing is drawn right after the
    epoch shuffle."""
    out = []
    for e in range(1, epochs + 1):
        rng = rngmod.stream(seed, "diffusion-finetune", e)
        rng.permutation(n)
        out.append(random_pairing(n, rng))
    return out
