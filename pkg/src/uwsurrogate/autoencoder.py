"""Bi-LSTM autoencoder between TVIR feature sequences and 128-d latents.

Encoder: three stacked bidirectional LSTM layers over the ``T x 3D`` feature
sequence; the top layer's final forward and backward hidden states are
concatenated and projected to the latent.  Decoder: the latent is projected
and fed as the input at every step of another three-layer Bi-LSTM, whose
per-step outputs are projected back to ``3D`` features.  The amplitude block
passes through softplus; sin/cos are left free.
"""

from __future__ import annotations

import copy
import math
import os
from dataclasses import asdict, dataclass, replace
from typing import Any, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from . import rng as rngmod
from .errors import InvalidInputError
from .formats import load_checkpoint, save_checkpoint
from .nn.engine import LstmParams, ParamStore, bilstm_forward, dense_forward, orthogonal, xavier_uniform
from .nn.training import EpochRecord, TrainConfig, fit
from .tvir import Tvir, featurize_tvir, normalize_tvir

LATENT_DIM = 128
CHECKPOINT_KIND = "autoencoder"
# softplus(-4) ~ 0.018, close to the mean tap amplitude of straightened
# channels; starting every tap near 0.7 instead buries the per-sample signal
AMP_BIAS_INIT = -4.0


@dataclass(frozen=True)
class AutoencoderConfig:
    num_snapshots: int = 20
    num_taps: int = 250
    hidden: int = 256
    layers: int = 3
    latent_dim: int = LATENT_DIM

    @property
    def feature_dim(self) -> int:
        return 3 * self.num_taps


@dataclass
class AELossBreakdown:
    total: torch.Tensor
    amp_term: torch.Tensor
    phase_term: torch.Tensor
    eta: float


def _split(h: torch.Tensor, d: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    return h[..., :d], h[..., d : 2 * d], h[..., 2 * d :]


def ae_loss(H: torch.Tensor, H_hat: torch.Tensor, eta: float = 1.0) -> AELossBreakdown:
    """Composite amplitude/phase reconstruction loss.

    Per sample::

        amp   = sum (A - A')^2
        phase = sum (A sin - A' sin')^2 + (A cos - A' cos')^2

    summed over snapshots and taps, then averaged over the batch.  ``H`` may
    be a single ``(T, 3D)`` sequence or a ``(B, T, 3D)`` batch.
    """
    if eta < 0:
        raise InvalidInputError("eta must be non-negative")
    if H.shape != H_hat.shape:
        raise InvalidInputError(f"shape mismatch {tuple(H.shape)} vs {tuple(H_hat.shape)}")
    if H.ndim == 2:
        H, H_hat = H[None], H_hat[None]
    d = H.shape[-1] // 3
    a, s, c = _split(H, d)
    a2, s2, c2 = _split(H_hat, d)
    amp = ((a - a2) ** 2).sum(dim=(1, 2)).mean()
    phase = (((a * s - a2 * s2) ** 2) + ((a * c - a2 * c2) ** 2)).sum(dim=(1, 2)).mean()
    return AELossBreakdown(amp + eta * phase, amp, phase, eta)


def amplitude_nmse_db(H: np.ndarray, H_hat: np.ndarray) -> float:
    """``10 log10(sum (A - A')^2 / sum A^2)`` pooled over everything given."""
    d = H.shape[-1] // 3
    a = np.asarray(H)[..., :d]
    a2 = np.asarray(H_hat)[..., :d]
    return float(10 * np.log10(np.sum((a - a2) ** 2) / np.sum(a**2)))


class AutoencoderModel:
    def __init__(self, config: AutoencoderConfig, seed: int = 0, dtype: torch.dtype = torch.float32):
        self.config = config
        self.store = ParamStore(dtype)
        self._init_params(rngmod.stream(seed, "ae-init"))
        # fixed per-feature standardization applied before the encoder
        self.input_mean = np.zeros(config.feature_dim)
        self.input_std = np.ones(config.feature_dim)

    def fit_input_scaling(self, data: np.ndarray, floor: float = 1e-2) -> None:
        """Set the encoder's input standardization from ``(N, T, 3D)`` data."""
        flat = np.asarray(data, dtype=np.float64).reshape(-1, self.config.feature_dim)
        # rounded through float32 so a saved checkpoint reproduces them exactly
        self.input_mean = flat.mean(axis=0).astype(np.float32).astype(np.float64)
        self.input_std = np.maximum(flat.std(axis=0), floor).astype(np.float32).astype(np.float64)

    # -- parameters ---------------------------------------------------------
    def _add_lstm(self, rng: np.random.Generator, prefix: str, n_in: int) -> None:
        H = self.config.hidden
        b = np.zeros(4 * H)
        b[H : 2 * H] = 1.0  # forget gate
        self.store.add(f"{prefix}.W_ih", xavier_uniform(rng, 4 * H, n_in))
        self.store.add(f"{prefix}.W_hh", np.concatenate([orthogonal(rng, H, H) for _ in range(4)]))
        self.store.add(f"{prefix}.b", b)

    def _add_dense(self, rng: np.random.Generator, prefix: str, n_out: int, n_in: int) -> None:
        self.store.add(f"{prefix}.W", xavier_uniform(rng, n_out, n_in))
        self.store.add(f"{prefix}.b", np.zeros(n_out))

    def _init_params(self, rng: np.random.Generator) -> None:
        c = self.config
        H2 = 2 * c.hidden
        for part, n_in0 in (("enc", c.feature_dim), ("dec", H2)):
            for k in range(c.layers):
                n_in = n_in0 if k == 0 else H2
                for direction in ("fwd", "bwd"):
                    self._add_lstm(rng, f"{part}.l{k}.{direction}", n_in)
            if part == "enc":
                self._add_dense(rng, "enc.proj", c.latent_dim, H2)
                self._add_dense(rng, "dec.inp", H2, c.latent_dim)
        self._add_dense(rng, "dec.out", c.feature_dim, H2)
        with torch.no_grad():
            self.store["dec.out.W"].zero_()
            self.store["dec.out.b"][: c.num_taps] = AMP_BIAS_INIT

    def _layers(self, part: str) -> list[tuple[LstmParams, LstmParams]]:
        s = self.store
        return [
            tuple(
                LstmParams(s[f"{part}.l{k}.{d}.W_ih"], s[f"{part}.l{k}.{d}.W_hh"], s[f"{part}.l{k}.{d}.b"])
                for d in ("fwd", "bwd")
            )
            for k in range(self.config.layers)
        ]

    # -- forward --------------------------------------------------------------
    def _as_batch(self, H) -> tuple[torch.Tensor, bool]:
        x = torch.as_tensor(np.asarray(H) if not isinstance(H, torch.Tensor) else H, dtype=self.store.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        c = self.config
        if x.ndim != 3 or x.shape[1] != c.num_snapshots or x.shape[2] != c.feature_dim:
            raise InvalidInputError(
                f"expected feature sequences of shape ({c.num_snapshots}, {c.feature_dim}), got {tuple(x.shape)}"
            )
        return x, single

    def encode(self, H) -> torch.Tensor:
        """``(T, 3D)`` or ``(B, T, 3D)`` features -> ``(128,)`` or ``(B, 128)`` latents."""
        x, single = self._as_batch(H)
        x = (x - torch.as_tensor(self.input_mean, dtype=x.dtype)) / torch.as_tensor(self.input_std, dtype=x.dtype)
        _, finals = bilstm_forward(x, self._layers("enc"))
        h_fwd, h_bwd = finals[-1]
        z = dense_forward(self.store["enc.proj.W"], self.store["enc.proj.b"], torch.cat([h_fwd, h_bwd], -1))
        return z[0] if single else z

    def decode(self, z) -> torch.Tensor:
        """Latents -> feature sequences (amplitudes through softplus)."""
        z = torch.as_tensor(np.asarray(z) if not isinstance(z, torch.Tensor) else z, dtype=self.store.dtype)
        single = z.ndim == 1
        if single:
            z = z[None]
        c = self.config
        if z.shape[-1] != c.latent_dim:
            raise InvalidInputError(f"latent must have length {c.latent_dim}")
        u = dense_forward(self.store["dec.inp.W"], self.store["dec.inp.b"], z)
        seq = u[:, None, :].expand(-1, c.num_snapshots, -1)
        out, _ = bilstm_forward(seq, self._layers("dec"))
        y = dense_forward(self.store["dec.out.W"], self.store["dec.out.b"], out)
        d = c.num_taps
        y = torch.cat([F.softplus(y[..., :d]), y[..., d:]], dim=-1)
        return y[0] if single else y

    def reconstruct(self, H) -> torch.Tensor:
        return self.decode(self.encode(H))

    # -- numpy conveniences ---------------------------------------------------
    def encode_np(self, H: np.ndarray, batch_size: int = 256) -> np.ndarray:
        H = np.asarray(H)
        if H.ndim == 2:
            return self.encode_np(H[None], batch_size)[0]
        with torch.no_grad():
            return np.concatenate(
                [self.encode(H[i : i + batch_size]).numpy() for i in range(0, len(H), batch_size)]
            )

    def decode_np(self, z: np.ndarray, batch_size: int = 256) -> np.ndarray:
        z = np.asarray(z)
        if z.ndim == 1:
            return self.decode_np(z[None], batch_size)[0]
        with torch.no_grad():
            return np.concatenate(
                [self.decode(z[i : i + batch_size]).numpy() for i in range(0, len(z), batch_size)]
            )

    # -- persistence ----------------------------------------------------------
    def copy(self) -> "AutoencoderModel":
        out = copy.copy(self)
        out.store = self.store.to(self.store.dtype)
        return out

    def to(self, dtype: torch.dtype) -> "AutoencoderModel":
        out = copy.copy(self)
        out.store = self.store.to(dtype)
        return out

    def save(self, path: str | os.PathLike, extra: dict[str, Any] | None = None) -> None:
        hparams = {"kind": CHECKPOINT_KIND, "config": asdict(self.config)}
        if extra:
            hparams.update(extra)
        tensors = dict(self.store.state_dict())
        tensors["input.mean"] = self.input_mean
        tensors["input.std"] = self.input_std
        save_checkpoint(path, hparams, tensors)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AutoencoderModel":
        hparams, tensors = load_checkpoint(path)
        if hparams.get("kind") != CHECKPOINT_KIND:
            raise InvalidInputError(f"{path} is a {hparams.get('kind')!r} checkpoint, not an autoencoder")
        model = cls(AutoencoderConfig(**hparams["config"]))
        model.input_mean = tensors.pop("input.mean").astype(np.float64)
        model.input_std = tensors.pop("input.std").astype(np.float64)
        model.store.load_state(tensors)
        return model


def features_from_tvirs(tvirs: Sequence[Tvir], normalize: bool = True) -> np.ndarray:
    """Stack TVIRs into a ``(N, T, 3D)`` float32 feature array."""
    out = []
    for t in tvirs:
        if normalize:
            t, _ = normalize_tvir(t)
        out.append(featurize_tvir(t))
    return np.asarray(out, dtype=np.float32)


def tvirs_from_features(H: np.ndarray, time_step: float, delay_step: float) -> list[Tvir]:
    from .tvir import defeaturize

    return [Tvir(defeaturize(h), time_step=time_step, delay_step=delay_step) for h in np.asarray(H)]


@dataclass
class AETrainConfig(TrainConfig):
    eta: float = 1.0


# Learning-rate protocols for the fine-tuning stages; min_lr is 1e-6 throughout.
FINE_TUNE_PRESETS: dict[str, dict[str, float]] = {
    "pretrain": {"learning_rate": 1e-3, "patience": 3},
    "noisy-sim": {"learning_rate": 1e-4, "patience": 5},
    "nov2024": {"learning_rate": 1e-2, "patience": 10},
    "nof1": {"learning_rate": 5e-3, "patience": 15},
    "keppel": {"learning_rate": 1e-3, "patience": 10},
}


def preset_config(name: str, **overrides: Any) -> AETrainConfig:
    if name not in FINE_TUNE_PRESETS:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {sorted(FINE_TUNE_PRESETS)}")
    return AETrainConfig(**{**FINE_TUNE_PRESETS[name], **overrides})


def _evaluate(model: AutoencoderModel, data: np.ndarray, eta: float, batch_size: int) -> dict[str, float]:
    tot = amp = phase = 0.0
    with torch.no_grad():
        for i in range(0, len(data), batch_size):
            x = torch.as_tensor(data[i : i + batch_size], dtype=model.store.dtype)
            lb = ae_loss(x, model.reconstruct(x), eta)
            n = len(x)
            tot += float(lb.total) * n
            amp += float(lb.amp_term) * n
            phase += float(lb.phase_term) * n
    n = len(data)
    return {"loss": tot / n, "amp_term": amp / n, "phase_term": phase / n}


def train_autoencoder(
    train: np.ndarray,
    val: np.ndarray,
    cfg: AETrainConfig,
    model: AutoencoderModel | None = None,
    model_config: AutoencoderConfig | None = None,
) -> tuple[AutoencoderModel, list[EpochRecord]]:
    """Fit the autoencoder on ``(N, T, 3D)`` feature arrays.

    Returns the parameters with the best validation loss and the per-epoch
    history (also written to ``cfg.log_path`` as CSV when set).
    """
    train = np.asarray(train, dtype=np.float32)
    val = np.asarray(val, dtype=np.float32)
    if len(train) == 0 or len(val) == 0:
        raise InvalidInputError("train and validation sets must be non-empty")
    if model is None:
        mc = model_config or AutoencoderConfig(num_snapshots=train.shape[1], num_taps=train.shape[2] // 3)
        model = AutoencoderModel(mc, seed=cfg.seed)
        model.fit_input_scaling(train)
    c = model.config
    if train.shape[1:] != (c.num_snapshots, c.feature_dim) or val.shape[1:] != train.shape[1:]:
        raise InvalidInputError("data shape does not match the autoencoder architecture")
    if cfg.max_epochs == 0:
        return model, []

    def batch_loss(idx: np.ndarray, rng: np.random.Generator):
        x = torch.as_tensor(train[idx], dtype=model.store.dtype)
        lb = ae_loss(x, model.reconstruct(x), cfg.eta)
        return lb.total, {"amp_term": float(lb.amp_term.detach()), "phase_term": float(lb.phase_term.detach())}

    def validate():
        m = _evaluate(model, val, cfg.eta, max(cfg.batch_size, 256))
        return m["loss"], {}

    history = fit(
        model.store, len(train), batch_loss, validate, cfg,
        log_columns=("amp_term", "phase_term"), stream_name="ae-train",
    )
    return model, history


def fine_tune_autoencoder(
    model: AutoencoderModel, train: np.ndarray, val: np.ndarray, cfg: AETrainConfig
) -> tuple[AutoencoderModel, list[EpochRecord]]:
    """Continue training a copy of ``model``; the input model is untouched."""
    return train_autoencoder(train, val, cfg, model=model.copy())
