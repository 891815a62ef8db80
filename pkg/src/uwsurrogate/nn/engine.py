"""Differentiable kernels for the autoencoder and the denoiser.

Tensors are ``torch.Tensor``; reverse-mode gradients come from torch's
autograd tape.  Parameters live in a :class:`ParamStore` so models can be
checkpointed, cast to float64 for gradient checks, and updated by the
optimizers in :mod:`uwsurrogate.nn.optim`.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np
import torch

from ..errors import InvalidInputError, UsageError

LEAKY_SLOPE = 0.01
LN_EPS = 1e-5


class ParamStore:
    """Named parameter tensors; gradients accumulate in ``tensor.grad``."""

    def __init__(self, dtype: torch.dtype = torch.float32):
        self.dtype = dtype
        self._params: "OrderedDict[str, torch.Tensor]" = OrderedDict()

    def add(self, name: str, value) -> torch.Tensor:
        if name in self._params:
            raise InvalidInputError(f"duplicate parameter name {name!r}")
        t = torch.as_tensor(np.asarray(value), dtype=self.dtype).clone().requires_grad_(True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grad(self, name: str) -> torch.Tensor:
        g = self._params[name].grad
        return torch.zeros_like(self._params[name]) if g is None else g

    def to(self, dtype: torch.dtype) -> "ParamStore":
        """A detached copy with every parameter cast to ``dtype``."""
        out = ParamStore(dtype)
        for k, v in self._params.items():
            out._params[k] = v.detach().to(dtype).clone().requires_grad_(True)
        return out

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.detach().cpu().numpy().copy()) for k, v in self._params.items())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise InvalidInputError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        with torch.no_grad():
            for k, p in self._params.items():
                v = torch.as_tensor(np.asarray(state[k]), dtype=self.dtype)
                if v.shape != p.shape:
                    raise InvalidInputError(f"shape mismatch for {k}: {tuple(v.shape)} vs {tuple(p.shape)}")
                p.copy_(v)


# -- initialisation ---------------------------------------------------------

def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


# -- kernels ----------------------------------------------------------------

def dense_forward(W: torch.Tensor, b: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """``y = W x + b`` applied to the last axis of ``x``."""
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise InvalidInputError(
            f"dense: W {tuple(W.shape)}, b {tuple(b.shape)}, x {tuple(x.shape)} do not agree"
        )
    return x @ W.T + b


def leaky_relu(x: torch.Tensor, slope: float = LEAKY_SLOPE) -> torch.Tensor:
    return torch.where(x >= 0, x, slope * x)


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor, eps: float = LN_EPS) -> torch.Tensor:
    """Standardise over the last axis (biased variance), then ``gain * x + bias``."""
    if x.shape[-1] < 2:
        raise InvalidInputError("layer_norm needs at least 2 features")
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise InvalidInputError("layer_norm gain/bias shape mismatch")
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * gain + bias


class LstmParams(NamedTuple):
    """One LSTM direction: ``W_ih (4H, F)``, ``W_hh (4H, H)``, ``b (4H)``; gate order i, f, g, o."""

    W_ih: torch.Tensor
    W_hh: torch.Tensor
    b: torch.Tensor

    @property
    def hidden(self) -> int:
        return self.W_hh.shape[1]


def _lstm_gates(pre: torch.Tensor, c_prev: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    i, f, g, o = pre.chunk(4, dim=-1)
    c = torch.sigmoid(f) * c_prev + torch.sigmoid(i) * torch.tanh(g)
    h = torch.sigmoid(o) * torch.tanh(c)
    return h, c


def lstm_cell(
    x_t: torch.Tensor, h_prev: torch.Tensor, c_prev: torch.Tensor, params: LstmParams
) -> tuple[torch.Tensor, torch.Tensor]:
    """Standard LSTM step without peepholes."""
    H = params.hidden
    if (
        params.W_ih.shape[0] != 4 * H
        or x_t.shape[-1] != params.W_ih.shape[1]
        or h_prev.shape[-1] != H
        or c_prev.shape[-1] != H
    ):
        raise InvalidInputError("lstm_cell: dimension mismatch")
    pre = x_t @ params.W_ih.T + h_prev @ params.W_hh.T + params.b
    return _lstm_gates(pre, c_prev)


def _run_direction(seq: torch.Tensor, params: LstmParams, reverse: bool) -> tuple[torch.Tensor, torch.Tensor]:
    bsz, T, _ = seq.shape
    H = params.hidden
    xw = seq @ params.W_ih.T + params.b  # input contribution for all steps at once
    h = seq.new_zeros(bsz, H)
    c = seq.new_zeros(bsz, H)
    outs: list[torch.Tensor] = [None] * T  # type: ignore[list-item]
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        h, c = _lstm_gates(xw[:, t] + h @ params.W_hh.T, c)
        outs[t] = h
    return torch.stack(outs, dim=1), h


def bilstm_forward(
    seq: torch.Tensor, layers: Sequence[tuple[LstmParams, LstmParams]]
) -> tuple[torch.Tensor, list[tuple[torch.Tensor, torch.Tensor]]]:
    """Stacked bidirectional LSTM with zero initial states.

    ``seq`` is ``(B, T, F)``.  Returns per-step outputs ``(B, T, 2H)`` of the
    top layer (``[h_fwd_t, h_bwd_t]``) and, per layer, the final forward
    state (after step T) and final backward state (after step 1).
    """
    if seq.ndim != 3 or seq.shape[1] < 1:
        raise InvalidInputError("bilstm_forward expects a non-empty (B, T, F) sequence")
    finals = []
    x = seq
    for fwd, bwd in layers:
        out_f, h_f = _run_direction(x, fwd, reverse=False)
        out_b, h_b = _run_direction(x, bwd, reverse=True)
        x = torch.cat([out_f, out_b], dim=-1)
        finals.append((h_f, h_b))
    return x, finals


# -- gradients --------------------------------------------------------------

def backward(loss: torch.Tensor, store: ParamStore | None = None) -> None:
    """Accumulate d(loss)/d(param) into each parameter's ``.grad`` (``+=``)."""
    if not isinstance(loss, torch.Tensor) or loss.numel() != 1:
        raise UsageError("backward needs a scalar loss tensor")
    if loss.grad_fn is None and not loss.requires_grad:
        if store is not None and any(p.requires_grad for _, p in store.items()):
            # constant loss: nothing recorded, gradients are zero
            for _, p in store.items():
                if p.grad is None:
                    p.grad = torch.zeros_like(p)
            return
        raise UsageError("backward called before a forward pass recorded a graph")
    loss.backward()


def gradient_check(
    loss_fn: Callable[[ParamStore], torch.Tensor],
    store: ParamStore,
    eps: float = 1e-5,
    max_entries: int = 64,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
) -> float:
    """Max relative error between autograd and central differences.

    ``loss_fn(store)`` must rebuild the loss from the store's current values.
    Up to ``max_entries`` random entries per parameter are probed.  The
    relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if store.dtype != torch.float64:
        raise UsageError("gradient_check requires a float64 ParamStore")
    rng = rng if rng is not None else np.random.default_rng(0)
    store.zero_grad()
    backward(loss_fn(store), store)
    worst = 0.0
    with torch.no_grad():
        for name, p in store.items():
            analytic = store.grad(name).reshape(-1)
            flat = p.view(-1)
            n = flat.numel()
            idx = rng.choice(n, size=min(n, max_entries), replace=False)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss_fn(store).item()
                flat[i] = orig - eps
                down = loss_fn(store).item()
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                a = analytic[i].item()
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, err)
    return worst
