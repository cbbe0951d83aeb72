"""Weighted power minimization distortionless response (WPD) beamforming.

A convolutional beamformer that dereverberates and beamforms in one filter.
Each output frame is ``w̄ᴴ x̄[t]`` where ``x̄[t]`` stacks the current frame with
``K`` past frames at delays ``D .. D+K-1``.

Two ways to compute ``w̄`` are provided. :func:`wpd_filter_new` needs only the
power-normalized covariance ``R`` and a mask-based PSD of the zero-padded
target; it works per source and needs no steering vector.
:func:`wpd_filter_reference` is the classic steering-vector solution, kept as
an independent cross-check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .beamform_mvdr import normalized_solve_filter, reference_vector
from .errors import DegenerateSteering, InvalidParam, ShapeMismatch, TooFewFrames, ZeroTrace
from .linalg import DEFAULT_LOADING, hermitian_solve, hermitize
from .masks import DEFAULT_POWER_FLOOR, lambda_from_mask, mask_channel_average
from .wpe import stack_delayed

_MASK_SUM_FLOOR = 1e-10
DEGENERATE_TOL = 1e-12

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WpdConfig:
    delay: int = 3
    taps: int = 5
    loading: float = DEFAULT_LOADING
    ref_channel: int = 0
    shared_mask: bool = True
    noise_in_power: bool = False
    power_floor: float = DEFAULT_POWER_FLOOR
    # "shifted" weights stacked frame t-D by 1/lam[t]; "aligned" uses 1/lam[t-D]
    power_alignment: str = "shifted"

    def __post_init__(self):
        if self.power_alignment not in ("shifted", "aligned"):
            raise InvalidParam(f"unknown power_alignment {self.power_alignment!r}")
        if self.taps < 0:
            raise InvalidParam("taps must be >= 0")
        if self.taps >= 1 and self.delay < 1:
            raise InvalidParam("delay must be >= 1 when taps >= 1")
        if self.loading < 0 or self.power_floor < 0:
            raise InvalidParam("loading and power_floor must be non-negative")


def stack_current_and_past(X: np.ndarray, delay: int, taps: int) -> np.ndarray:
    """``(T, F, C*(taps+1))``: frame ``t``, then frames ``t-delay`` .. ``t-delay-taps+1``."""
    X = np.asarray(X, dtype=np.complex128)
    if X.shape[0] <= delay + taps:
        raise TooFewFrames(f"need more than delay+taps={delay + taps} frames, got {X.shape[0]}")
    if taps == 0:
        return X.copy()
    return np.concatenate([X, stack_delayed(X, delay, taps)], axis=-1)


def pad_to_stack(v: np.ndarray, taps: int) -> np.ndarray:
    """Zero-extend ``(..., C)`` to ``(..., C*(taps+1))``; used for ``v̄`` and ``ū``."""
    v = np.asarray(v)
    pad = np.zeros(v.shape[:-1] + (v.shape[-1] * taps,), dtype=v.dtype)
    return np.concatenate([v, pad], axis=-1)


def wpd_covariance(X: np.ndarray, lam: np.ndarray, cfg: WpdConfig = WpdConfig()) -> np.ndarray:
    """Power-normalized covariance ``R`` per bin, ``(F, N, N)`` with ``N = C(K+1)``.

    Frame ``t - D`` of the stacked signal is weighted by ``1 / lam[t]``, for
    ``t = D .. T-1``. With ``cfg.power_alignment == "aligned"`` every frame is
    weighted by its own power instead.
    """
    X = np.asarray(X, dtype=np.complex128)
    if lam.shape != X.shape[:2]:
        raise ShapeMismatch(f"power {lam.shape} does not match spectrogram {X.shape}")
    stacked = stack_current_and_past(X, cfg.delay, cfg.taps)
    T = X.shape[0]
    D = cfg.delay
    if cfg.power_alignment == "aligned":
        return hermitize(np.einsum("tfa,tfb->fab", stacked / lam[..., None], stacked.conj()))
    shifted = stacked[: T - D]
    weighted = shifted / lam[D:, :, None]
    return hermitize(np.einsum("tfa,tfb->fab", weighted, shifted.conj()))


def padded_psd(X: np.ndarray, m: np.ndarray, cfg: WpdConfig = WpdConfig()) -> np.ndarray:
    """Mask-weighted PSD of the target padded with zeros to the stacked length.

    Only the top-left ``C x C`` block can be non-zero.
    """
    X = np.asarray(X, dtype=np.complex128)
    m = np.asarray(m, dtype=np.float64)
    if X.ndim != 3 or m.shape != X.shape[:2]:
        raise ShapeMismatch(f"mask {m.shape} does not match spectrogram {X.shape}")
    T, F, C = X.shape
    n = C * (cfg.taps + 1)
    den = np.maximum(np.sum(m, axis=0), _MASK_SUM_FLOOR)
    out = np.zeros((F, n, n), dtype=np.complex128)
    out[:, :C, :C] = hermitize(np.einsum("tf,tfc,tfd->fcd", m, X, X.conj()) / den[:, None, None])
    return out


def wpd_filter_new(R, psd_padded, u, loading: float = DEFAULT_LOADING, threads: int = 1) -> np.ndarray:
    """Steering-vector-free WPD weights ``R⁻¹Φ̃ ū / tr(R⁻¹Φ̃)``.

    ``u`` is the one-hot reference of length ``C``; it is zero-padded here to
    match ``R``.
    """
    R = np.asarray(R, dtype=np.complex128)
    psd_padded = np.asarray(psd_padded, dtype=np.complex128)
    if R.shape != psd_padded.shape:
        raise ShapeMismatch(f"R {R.shape} and padded PSD {psd_padded.shape} differ")
    u = np.asarray(u, dtype=np.float64)
    n = R.shape[-1]
    if n % u.shape[-1]:
        raise ShapeMismatch(f"reference of length {u.shape[-1]} does not divide stack size {n}")
    u_bar = pad_to_stack(u, n // u.shape[-1] - 1)
    return normalized_solve_filter(psd_padded, R, u_bar, loading, threads)


def wpd_filter_reference(R, v_bar, v_ref, loading: float = DEFAULT_LOADING, threads: int = 1) -> np.ndarray:
    """Classic WPD weights ``R⁻¹v̄ / (v̄ᴴR⁻¹v̄) · conj(v_ref)`` from a padded steering vector."""
    R = np.asarray(R, dtype=np.complex128)
    v_bar = np.asarray(v_bar, dtype=np.complex128)
    if v_bar.shape != R.shape[:-1]:
        raise ShapeMismatch(f"steering {v_bar.shape} does not match R {R.shape}")
    r_inv_v = hermitian_solve(R, v_bar, loading, threads=threads)
    denom = np.sum(v_bar.conj() * r_inv_v, axis=-1)
    if np.any(np.abs(denom) < DEGENERATE_TOL):
        raise DegenerateSteering("v̄ᴴR⁻¹v̄ vanished")
    return r_inv_v / denom[..., None] * np.conj(v_ref)[..., None]


def wpd_separate(
    X: np.ndarray,
    masks: np.ndarray,
    cfg: WpdConfig = WpdConfig(),
    power_masks: np.ndarray | None = None,
    threads: int = 1,
    silence_degenerate: bool = False,
) -> list[np.ndarray]:
    """Separate and dereverberate ``J`` sources; masks are ``(J+1, T, F, C)``.

    The mask of source ``j`` drives both its power estimate (hence ``R``) and
    its padded PSD. With ``cfg.shared_mask`` False, ``power_masks`` (same
    layout) feed the power path instead. The noise mask (index 0) is ignored
    unless ``cfg.noise_in_power`` adds it into the power-path mask.
    ``silence_degenerate`` turns a :class:`ZeroTrace` source into zeros.
    """
    X = np.asarray(X, dtype=np.complex128)
    masks = np.asarray(masks, dtype=np.float64)
    if masks.ndim != 4 or masks.shape[1:] != X.shape:
        raise ShapeMismatch(f"masks {masks.shape} do not match spectrogram {X.shape}")
    if masks.shape[0] < 2:
        raise InvalidParam("need a noise mask plus at least one source mask")
    if cfg.shared_mask:
        power_masks = masks
    elif power_masks is None or np.shape(power_masks) != masks.shape:
        raise InvalidParam("split-mask mode needs power masks shaped like the beamforming masks")
    u = reference_vector(X.shape[-1], cfg.ref_channel)
    stacked = stack_current_and_past(X, cfg.delay, cfg.taps)
    outputs = []
    for j in range(1, masks.shape[0]):
        m_pow = power_masks[j]
        if cfg.noise_in_power:
            m_pow = np.clip(m_pow + power_masks[0], 0.0, 1.0)
        lam = lambda_from_mask(X, m_pow, rel_floor=cfg.power_floor)
        R = wpd_covariance(X, lam, cfg)
        phi = padded_psd(X, mask_channel_average(masks[j]), cfg)
        try:
            w = wpd_filter_new(R, phi, u, cfg.loading, threads)
        except ZeroTrace as exc:
            if not silence_degenerate:
                raise
            log.warning("source %d: %s; emitting silence", j, exc)
            outputs.append(np.zeros(X.shape[:2], dtype=np.complex128))
            continue
        outputs.append(np.einsum("fk,tfk->tf", w.conj(), stacked))
    return outputs


def equivalence_check(
    n_channels: int,
    taps: int,
    trials: int = 100,
    seed: int = 0,
    phi_scale: float = 1.0,
    ref_channel: int = 0,
    loading: float = DEFAULT_LOADING,
) -> float:
    """Max relative gap between the two WPD solutions on random rank-1 targets.

    Each trial draws a PD ``R`` and a steering vector ``v``, builds
    ``Φ̃ = φ v̄v̄ᴴ`` and compares :func:`wpd_filter_new` against
    :func:`wpd_filter_reference` with ``v_ref = v[ref_channel]``.
    """
    rng = np.random.default_rng(seed)
    n = n_channels * (taps + 1)
    u = reference_vector(n_channels, ref_channel)
    worst = 0.0
    for _ in range(trials):
        M = rng.standard_normal((2 * n, n)) + 1j * rng.standard_normal((2 * n, n))
        R = M.conj().T @ M + np.eye(n)
        v = rng.standard_normal(n_channels) + 1j * rng.standard_normal(n_channels)
        v_bar = pad_to_stack(v, taps)
        phi = rng.uniform(0.1, 10.0) * phi_scale
        psd_padded = phi * np.outer(v_bar, v_bar.conj())
        w_new = wpd_filter_new(R, psd_padded, u, loading)
        w_ref = wpd_filter_reference(R, v_bar, v_bar @ pad_to_stack(u, taps), loading)
        worst = max(worst, np.linalg.norm(w_new - w_ref) / np.linalg.norm(w_ref))
    return float(worst)
