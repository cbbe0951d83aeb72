"""Mask-based weighted prediction error (WPE) dereverberation.

The late reverberation of every channel is predicted from ``K`` delayed
frames (delays ``D .. D+K-1``) of all channels and subtracted. Prediction
weights come from the power-weighted normal equations, with the power
``lambda`` either taken from a mask or from the current estimate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParam, ShapeMismatch, TooFewFrames
from .linalg import DEFAULT_LOADING, hermitian_solve, hermitize
from .masks import DEFAULT_POWER_FLOOR, lambda_from_mask, uniform_mask


@dataclass(frozen=True)
class WpeConfig:
    delay: int = 3
    taps: int = 5
    iterations: int = 1
    loading: float = DEFAULT_LOADING
    power_floor: float = DEFAULT_POWER_FLOOR

    def __post_init__(self):
        if self.delay < 1 or self.taps < 1 or self.iterations < 1:
            raise InvalidParam(f"need delay, taps, iterations >= 1, got {self}")
        if self.loading < 0 or self.power_floor < 0:
            raise InvalidParam("loading and power_floor must be non-negative")


def stack_delayed(X: np.ndarray, delay: int, taps: int) -> np.ndarray:
    """Return ``(T, F, C*taps)`` where block ``k`` holds ``X[t - delay - k]``.

    Frames before the start of the signal are zero.
    """
    X = np.asarray(X)
    T, F, C = X.shape
    if T <= delay + taps:
        raise TooFewFrames(f"need more than delay+taps={delay + taps} frames, got {T}")
    out = np.zeros((T, F, C * taps), dtype=np.complex128)
    for k in range(taps):
        d = delay + k
        out[d:, :, k * C : (k + 1) * C] = X[: T - d]
    return out


def wpe_filter(X: np.ndarray, lam: np.ndarray, cfg: WpeConfig = WpeConfig(), threads: int = 1) -> np.ndarray:
    """Prediction filter ``G`` of shape ``(F, C*K, C)``."""
    X = np.asarray(X, dtype=np.complex128)
    if lam.shape != X.shape[:2]:
        raise ShapeMismatch(f"power {lam.shape} does not match spectrogram {X.shape}")
    stacked = stack_delayed(X, cfg.delay, cfg.taps)
    weighted = stacked / lam[..., None]
    cov = hermitize(np.einsum("tfa,tfb->fab", weighted, stacked.conj()))
    corr = np.einsum("tfa,tfc->fac", weighted, X.conj())
    return hermitian_solve(cov, corr, cfg.loading, threads=threads)


def wpe_apply(X: np.ndarray, G: np.ndarray, cfg: WpeConfig = WpeConfig()) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    T, F, C = X.shape
    if G.shape != (F, C * cfg.taps, C):
        raise ShapeMismatch(f"filter {G.shape} does not fit spectrogram {X.shape} with {cfg.taps} taps")
    stacked = stack_delayed(X, cfg.delay, cfg.taps)
    return X - np.einsum("fkc,tfk->tfc", G.conj(), stacked)


def wpe_run(X: np.ndarray, mask: np.ndarray | None = None, cfg: WpeConfig = WpeConfig(), threads: int = 1) -> np.ndarray:
    """Iterate power estimation, filter estimation and filtering.

    The first iteration takes ``lambda`` from ``mask`` applied to the input
    (uniform mask when ``mask`` is None). Later iterations re-estimate it from
    the current output with a uniform mask. The filter always acts on the input.
    ``lambda`` is floored at ``cfg.power_floor`` times the bin's mean power.
    """
    X = np.asarray(X, dtype=np.complex128)
    if mask is None:
        mask = uniform_mask(X.shape)
    est = X
    for it in range(cfg.iterations):
        source, weights = (X, mask) if it == 0 else (est, uniform_mask(X.shape))
        lam = lambda_from_mask(source, weights, rel_floor=cfg.power_floor)
        G = wpe_filter(X, lam, cfg, threads=threads)
        est = wpe_apply(X, G, cfg)
    return est
