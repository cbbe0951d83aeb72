"""Multi-channel STFT analysis and overlap-add synthesis.

Spectrograms are laid out ``(T, F, C)``: frames, one-sided bins, channels.
Waveforms are ``(C, N)``; a 1-d waveform is treated as a single channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParam, TooShort

_NORM_FLOOR = 1e-10


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 16000
    win_len: int = 400
    hop: int = 160
    fft_size: int = 512
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop <= self.win_len <= self.fft_size:
            raise InvalidParam(
                f"need 0 < hop <= win_len <= fft_size, got {self.hop}, {self.win_len}, {self.fft_size}"
            )
        if self.window != "hann":
            raise InvalidParam(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, n_samples: int) -> int:
        return (n_samples - self.win_len) // self.hop + 1


def analysis_window(cfg: StftConfig) -> np.ndarray:
    """Periodic Hann window of length ``win_len``."""
    n = np.arange(cfg.win_len)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / cfg.win_len)


def _as_channels(wave) -> np.ndarray:
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim == 1:
        wave = wave[None, :]
    if wave.ndim != 2 or wave.shape[0] < 1:
        raise DimensionMismatch(f"expected (C, N) waveform, got shape {wave.shape}")
    return wave


def stft(wave, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Frame, window, zero-pad each frame at its tail to ``fft_size``, rFFT.

    Frame ``t`` covers samples ``[t*hop, t*hop + win_len)``; samples past the
    last complete frame are not analysed.
    """
    wave = _as_channels(wave)
    n = wave.shape[1]
    if n < cfg.win_len:
        raise TooShort(f"signal has {n} samples, need at least {cfg.win_len}")
    n_frames = cfg.num_frames(n)
    idx = np.arange(n_frames)[:, None] * cfg.hop + np.arange(cfg.win_len)[None, :]
    # (C, T, win_len)
    frames = wave[:, idx] * analysis_window(cfg)
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)
    return np.ascontiguousarray(spec.transpose(1, 2, 0))


def istft(spec, cfg: StftConfig = StftConfig(), out_len: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`; returns ``(C, out_len)``.

    Each sample is divided by the summed squared window covering it (floored),
    so reconstruction is exact wherever at least one frame has non-zero weight.
    """
    spec = np.asarray(spec)
    if spec.ndim == 2:
        spec = spec[..., None]
    if spec.ndim != 3 or spec.shape[1] != cfg.n_bins:
        raise DimensionMismatch(f"spectrogram shape {spec.shape} does not match {cfg.n_bins} bins")
    n_frames, _, n_chan = spec.shape
    covered = (n_frames - 1) * cfg.hop + cfg.win_len if n_frames else 0
    if out_len is None:
        out_len = covered
    win = analysis_window(cfg)

    frames = np.fft.irfft(spec.transpose(2, 0, 1), n=cfg.fft_size, axis=-1)[..., : cfg.win_len]
    frames = frames * win
    length = max(out_len, covered)
    out = np.zeros((n_chan, length))
    norm = np.zeros(length)
    for t in range(n_frames):
        s = t * cfg.hop
        out[:, s : s + cfg.win_len] += frames[:, t]
        norm[s : s + cfg.win_len] += win**2
    out /= np.maximum(norm, _NORM_FLOOR)
    return out[:, :out_len]
