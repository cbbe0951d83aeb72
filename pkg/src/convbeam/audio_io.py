"""Multi-channel RIFF/WAVE reading and writing (PCM16 and IEEE float32)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import DimensionMismatch, SampleRateMismatch, UnsupportedFormat

MAX_CHANNELS = 8
PCM16_SCALE = 32767.0


@dataclass
class Waveform:
    sample_rate: int
    samples: np.ndarray  # (C, N) float64

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise DimensionMismatch(f"waveform must be (C, N), got {samples.shape}")
        self.samples = samples

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]


def quantize_pcm16(x: np.ndarray) -> np.ndarray:
    """Scale by 32767, round half away from zero, clip to the int16 range used."""
    scaled = np.asarray(x, dtype=np.float64) * PCM16_SCALE
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, -PCM16_SCALE, PCM16_SCALE).astype(np.int16)


def read_wav(path) -> Waveform:
    with warnings.catch_warnings():
        # unknown chunks are skipped by scipy with a warning
        warnings.simplefilter("ignore", wavfile.WavFileWarning)
        try:
            rate, data = wavfile.read(path)
        except ValueError as exc:
            raise UnsupportedFormat(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = np.clip(data.astype(np.float64) / PCM16_SCALE, -1.0, 1.0)
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path}: sample type {data.dtype} not supported (pcm16/float32 only)")
    samples = samples.T if samples.ndim == 2 else samples[None, :]
    if samples.shape[0] > MAX_CHANNELS:
        raise UnsupportedFormat(f"{path}: {samples.shape[0]} channels, at most {MAX_CHANNELS}")
    return Waveform(int(rate), samples)


def write_wav(path, wave: Waveform, format: str = "float32") -> None:
    if wave.n_channels > MAX_CHANNELS:
        raise UnsupportedFormat(f"{wave.n_channels} channels, at most {MAX_CHANNELS}")
    if format == "float32":
        data = wave.samples.astype(np.float32)
    elif format == "pcm16":
        data = quantize_pcm16(wave.samples)
    else:
        raise UnsupportedFormat(f"unknown sample format {format!r}")
    # interleaved frames: channel 0 first
    data = np.ascontiguousarray(data.T) if wave.n_channels > 1 else data[0]
    wavfile.write(path, wave.sample_rate, data)


def check_same_rate(*waves: Waveform) -> int:
    rates = {w.sample_rate for w in waves}
    if len(rates) > 1:
        raise SampleRateMismatch(f"inputs disagree on sample rate: {sorted(rates)}")
    return rates.pop()
