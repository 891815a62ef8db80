"""OFDM link simulation and m-sequence/NLMS channel probing."""

from .ofdm import (
    BerResult,
    BerSummary,
    OfdmScheme,
    apply_channel,
    ber,
    evaluate,
    get_scheme,
    ofdm_demodulate,
    ofdm_modulate,
    presets,
    qpsk_awgn_ber,
    run_link,
    write_ber_csv,
)
from .probe import estimation_nmse_db, msequence, nlms_estimate

__all__ = [
    "BerResult", "BerSummary", "OfdmScheme", "apply_channel", "ber", "evaluate", "get_scheme",
    "ofdm_demodulate", "ofdm_modulate", "presets", "qpsk_awgn_ber", "run_link", "write_ber_csv",
    "estimation_nmse_db", "msequence", "nlms_estimate",
]
