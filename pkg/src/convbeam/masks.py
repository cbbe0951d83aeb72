"""Time-frequency masks and the mask-driven power estimate.

Masks are real arrays in ``[0, 1]`` shaped like the spectrogram they weight,
``(T, F, C)``. A full mask set stacks ``J + 1`` of them along a leading axis,
index 0 being the noise (everything that is not an early source image).
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import MissingGroundTruth, ShapeMismatch, UnsupportedFormat
from .stft import StftConfig, stft

LAMBDA_FLOOR = 1e-10
# relative power floor used by the WPE/WPD frontends
DEFAULT_POWER_FLOOR = 1e-2
_DENOM_FLOOR = 1e-10
_IRM_EPS = 1e-10
MASK_MAGIC = b"CBMASK01"


def mask_channel_average(m: np.ndarray) -> np.ndarray:
    """Average a ``(..., T, F, C)`` mask over channels."""
    return np.mean(np.asarray(m, dtype=np.float64), axis=-1)


def uniform_mask(shape) -> np.ndarray:
    return np.ones(shape, dtype=np.float64)


def lambda_from_mask(
    X: np.ndarray,
    m: np.ndarray,
    floor: float = LAMBDA_FLOOR,
    rel_floor: float = 0.0,
) -> np.ndarray:
    """Time-varying power ``(T, F)`` of the masked signal.

    Each channel's mask is normalized by its mean over time before weighting
    ``|x|^2``; the result is averaged over channels. It is then floored at
    ``floor`` and at ``rel_floor`` times the bin's average input power, which
    keeps near-zero mask values from dominating ``1/lambda`` weighted sums.
    """
    X = np.asarray(X)
    m = np.asarray(m, dtype=np.float64)
    if X.shape != m.shape or X.ndim != 3:
        raise ShapeMismatch(f"spectrogram {X.shape} and mask {m.shape} differ")
    time_mean = np.maximum(np.mean(m, axis=0, keepdims=True), _DENOM_FLOOR)
    mag2 = X.real**2 + X.imag**2
    lam = np.maximum(np.mean((m / time_mean) * mag2, axis=-1), floor)
    if rel_floor > 0:
        lam = np.maximum(lam, rel_floor * np.mean(mag2, axis=(0, 2))[None, :])
    return lam


def _scene_spectra(scene, cfg: StftConfig):
    early = getattr(scene, "early_images", None)
    if early is None or len(early) == 0:
        raise MissingGroundTruth("scene carries no early source images")
    early_specs = np.stack([np.abs(stft(img, cfg)) for img in early])
    residual = scene.noise + np.sum(scene.late_images, axis=0)
    return early_specs, np.abs(stft(residual, cfg))


def oracle_masks(scene, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Magnitude ratio masks for noise (index 0) and every source.

    The target of source ``j`` is its early image; late reverberation of all
    sources is lumped into the noise term.
    """
    early, resid = _scene_spectra(scene, cfg)
    denom = np.sum(early, axis=0) + resid + _IRM_EPS
    masks = np.concatenate([resid[None], early], axis=0) / denom
    return np.clip(masks, 0.0, 1.0)


def oracle_irm(scene, j: int, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Mask of a single source ``j`` (1-based; 0 returns the noise mask)."""
    early = getattr(scene, "early_images", None)
    n_src = 0 if early is None else len(early)
    if not 0 <= j <= n_src:
        raise MissingGroundTruth(f"scene has {n_src} sources, no source {j}")
    return oracle_masks(scene, cfg)[j]


def oracle_early_mask(scene, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Mask of all early images together vs. late reverberation plus noise."""
    early, resid = _scene_spectra(scene, cfg)
    total = np.sum(early, axis=0)
    return np.clip(total / (total + resid + _IRM_EPS), 0.0, 1.0)


def save_masks(path, masks: np.ndarray) -> None:
    """Write a mask tensor.

    Layout: 8-byte magic ``CBMASK01``, uint32 ndim, ndim x uint64 dims, then
    the values as little-endian float64 in C order. All integers little-endian.
    """
    masks = np.ascontiguousarray(masks, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MASK_MAGIC)
        fh.write(struct.pack("<I", masks.ndim))
        fh.write(struct.pack(f"<{masks.ndim}Q", *masks.shape))
        fh.write(masks.tobytes())


def load_masks(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != MASK_MAGIC:
        raise UnsupportedFormat(f"{path}: not a mask file")
    (ndim,) = struct.unpack_from("<I", data, 8)
    dims = struct.unpack_from(f"<{ndim}Q", data, 12)
    offset = 12 + 8 * ndim
    count = int(np.prod(dims)) if ndim else 1
    if len(data) - offset != 8 * count:
        raise UnsupportedFormat(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(dims).astype(np.float64)
