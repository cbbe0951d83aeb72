"""Mask-based multi-source MVDR beamforming from PSD matrices, without a steering vector."""
from __future__ import annotations

import logging

import numpy as np

from .errors import InvalidParam, ShapeMismatch, ZeroTrace
from .linalg import DEFAULT_LOADING, hermitian_solve, hermitize, trace
from .masks import mask_channel_average

ZERO_TRACE_TOL = 1e-12
_MASK_SUM_FLOOR = 1e-10

log = logging.getLogger(__name__)


def reference_vector(n_channels: int, ref_channel: int = 0) -> np.ndarray:
    """One-hot reference microphone selector."""
    if not 0 <= ref_channel < n_channels:
        raise InvalidParam(f"reference channel {ref_channel} outside 0..{n_channels - 1}")
    u = np.zeros(n_channels)
    u[ref_channel] = 1.0
    return u


def psd(X: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Mask-weighted spatial covariance per bin, ``(F, C, C)``.

    ``m`` is a channel-averaged ``(T, F)`` mask; weights are normalized to sum
    to one over time.
    """
    X = np.asarray(X)
    m = np.asarray(m, dtype=np.float64)
    if X.ndim != 3 or m.shape != X.shape[:2]:
        raise ShapeMismatch(f"mask {m.shape} does not match spectrogram {X.shape}")
    num = np.einsum("tf,tfc,tfd->fcd", m, X, X.conj())
    den = np.maximum(np.sum(m, axis=0), _MASK_SUM_FLOOR)
    return hermitize(num / den[:, None, None])


def normalized_solve_filter(numer_psd, denom_cov, u, loading=DEFAULT_LOADING, threads=1):
    """``solve(denom, numer) / trace(solve(denom, numer)) @ u`` per bin.

    Raises :class:`ZeroTrace` when the trace is zero or below ``1e-12`` times
    the Frobenius norm of ``solve(denom, numer)``.
    """
    ratio = hermitian_solve(denom_cov, numer_psd, loading, threads=threads)
    tr = np.atleast_1d(trace(ratio))
    # relative test: the trace carries the units of the numerator statistics
    size = np.atleast_1d(np.linalg.norm(ratio, axis=(-2, -1)))
    bad = np.flatnonzero((np.abs(tr) <= ZERO_TRACE_TOL * size) | (size == 0))
    if len(bad):
        raise ZeroTrace(f"trace normalization vanished at {len(bad)} bin(s), first {bad[0]}")
    tr = tr.reshape(ratio.shape[:-2])
    return (ratio / tr[..., None, None]) @ u


def mvdr_filter(psd_target, psd_interference, u, loading: float = DEFAULT_LOADING, threads: int = 1) -> np.ndarray:
    """Trace-normalized MVDR weights ``(..., C)`` for target/interference PSDs ``(..., C, C)``."""
    psd_target = np.asarray(psd_target, dtype=np.complex128)
    psd_interference = np.asarray(psd_interference, dtype=np.complex128)
    if psd_target.shape != psd_interference.shape:
        raise ShapeMismatch(f"PSD shapes differ: {psd_target.shape} vs {psd_interference.shape}")
    u = np.asarray(u, dtype=np.float64)
    if u.shape != psd_target.shape[-1:]:
        raise ShapeMismatch(f"reference vector {u.shape} does not match {psd_target.shape[-1]} channels")
    return normalized_solve_filter(psd_target, psd_interference, u, loading, threads)


def beamform_apply(X: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Apply per-bin weights: ``out[t, f] = g[f]ᴴ x[t, f]``."""
    X = np.asarray(X)
    if g.shape != X.shape[1:]:
        raise ShapeMismatch(f"filter {g.shape} does not match spectrogram {X.shape}")
    return np.einsum("fc,tfc->tf", g.conj(), X)


def mvdr_separate(
    X: np.ndarray,
    masks: np.ndarray,
    ref_channel: int = 0,
    loading: float = DEFAULT_LOADING,
    threads: int = 1,
    silence_degenerate: bool = False,
) -> list[np.ndarray]:
    """Separate ``J`` sources given masks ``(J+1, T, F, C)`` (index 0 = noise).

    The interference of source ``j`` is the sum of all other PSDs, noise included.
    With ``silence_degenerate`` a source whose filter hits :class:`ZeroTrace`
    comes out as zeros (with a logged warning) instead of aborting.
    """
    masks = np.asarray(masks)
    if masks.ndim != 4 or masks.shape[1:] != X.shape:
        raise ShapeMismatch(f"masks {masks.shape} do not match spectrogram {X.shape}")
    if masks.shape[0] < 2:
        raise InvalidParam("need a noise mask plus at least one source mask")
    u = reference_vector(X.shape[-1], ref_channel)
    psds = [psd(X, mask_channel_average(m)) for m in masks]
    outputs = []
    for j in range(1, len(psds)):
        interference = sum(p for i, p in enumerate(psds) if i != j)
        try:
            g = mvdr_filter(psds[j], interference, u, loading, threads)
        except ZeroTrace as exc:
            if not silence_degenerate:
                raise
            log.warning("source %d: %s; emitting silence", j, exc)
            outputs.append(np.zeros(X.shape[:2], dtype=np.complex128))
            continue
        outputs.append(beamform_apply(X, g))
    return outputs
