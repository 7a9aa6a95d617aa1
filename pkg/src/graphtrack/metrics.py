"""Error and signal-to-noise summaries used by the experiment reports."""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, ZeroNoise, ZeroReference
from .graphs import SpectralBasis


def nmse(estimates: np.ndarray, truth: np.ndarray) -> float:
    """Sum of squared errors over the summed squared reference.

    Rows are recordings (a single vector works too); shapes must match.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    ref = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != ref.shape:
        raise DimensionMismatch(f"shapes {est.shape} vs {ref.shape}")
    denom = float((ref**2).sum())
    if denom <= 0.0:
        raise ZeroReference("reference energy is zero; relative error undefined")
    return float(((est - ref) ** 2).sum()) / denom


def to_db(value: float) -> float:
    if value <= 0.0:
        return float("-inf")
    return 10.0 * float(np.log10(value))


def nmse_db(estimates: np.ndarray, truth: np.ndarray) -> float:
    return to_db(nmse(estimates, truth))


def average_snr(signals: np.ndarray, sigma_v2: float) -> float:
    """Average measurement SNR in dB over all recordings and nodes."""
    if not (sigma_v2 > 0.0):
        raise ZeroNoise("sigma_v2 must be positive")
    sig = np.atleast_2d(np.asarray(signals, dtype=float))
    r, n = sig.shape
    power = float((sig**2).sum())
    if power <= 0.0:
        raise ZeroReference("signals have zero energy")
    return to_db(power / (n * r * sigma_v2))


def average_snr_per_frequency(basis: SpectralBasis, signals: np.ndarray, sigma_v2: float) -> np.ndarray:
    """Linear per-frequency SNR: summed squared spectral coefficient over the
    recording count times the noise variance."""
    if not (sigma_v2 > 0.0):
        raise ZeroNoise("sigma_v2 must be positive")
    sig = np.atleast_2d(np.asarray(signals, dtype=float))
    if sig.shape[1] != basis.n_nodes:
        raise DimensionMismatch(f"signals have {sig.shape[1]} columns, graph has {basis.n_nodes}")
    coeffs = sig @ basis.vectors
    r = sig.shape[0]
    return (coeffs**2).sum(axis=0) / (r * sigma_v2)
