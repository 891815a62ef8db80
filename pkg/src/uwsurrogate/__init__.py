"""Desk-scale surrogate modelling of time-varying underwater acoustic channels.

Subpackages and modules:

- :mod:`~uwsurrogate.tvir`: channel container, feature map, straightening
- :mod:`~uwsurrogate.channel_sim`: image-source simulator and dataset generation
- :mod:`~uwsurrogate.nn`: differentiable kernels, Adam and the plateau schedule
- :mod:`~uwsurrogate.autoencoder`: Bi-LSTM TVIR autoencoder
- :mod:`~uwsurrogate.diffusion`: conditional latent DDPM
- :mod:`~uwsurrogate.metrics`: channel statistics
- :mod:`~uwsurrogate.comms`: OFDM BER simulation, m-sequences, NLMS
- :mod:`~uwsurrogate.baselines`: direct and stochastic replay
"""

from .errors import (
    FormatError,
    InvalidInputError,
    NormalizationError,
    ReplayWindowTooShortError,
    TrainingDivergedError,
    UsageError,
    UwSurrogateError,
)
from .tvir import Tvir

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "InvalidInputError",
    "NormalizationError",
    "ReplayWindowTooShortError",
    "TrainingDivergedError",
    "Tvir",
    "UsageError",
    "UwSurrogateError",
    "__version__",
]
