"""Synthetic reverberant multi-microphone scenes with ground truth.

Room responses are parametric: a unit direct tap followed by randomly placed,
random-sign reflections whose energy decays by 60 dB over ``rt60`` seconds.
Every rendered image is split at a fixed boundary after the direct path into
an early part (the enhancement target) and a late part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import Waveform, read_wav, write_wav
from .errors import InvalidParam, LengthMismatch, SampleRateMismatch

SPEED_OF_SOUND = 343.0
SCENE_FORMAT = "convbeam-scene-1"
_SPARSE_EARLY_S = 0.005


@dataclass
class RoomImpulseResponse:
    taps: np.ndarray
    sample_rate: int = 16000
    early_boundary_ms: float = 50.0

    @property
    def direct_index(self) -> int:
        nz = np.flatnonzero(self.taps)
        return int(nz[0]) if len(nz) else 0

    @property
    def split_index(self) -> int:
        return self.direct_index + int(round(self.early_boundary_ms * 1e-3 * self.sample_rate))

    def early(self) -> np.ndarray:
        h = np.zeros_like(self.taps)
        h[: self.split_index] = self.taps[: self.split_index]
        return h

    def late(self) -> np.ndarray:
        h = np.zeros_like(self.taps)
        h[self.split_index :] = self.taps[self.split_index :]
        return h


@dataclass
class MixtureScene:
    sample_rate: int
    sources: np.ndarray  # (J, N) dry signals
    rirs: list  # J lists of C RoomImpulseResponse
    early_images: np.ndarray  # (J, C, N)
    late_images: np.ndarray  # (J, C, N)
    noise: np.ndarray  # (C, N)
    mixture: np.ndarray  # (C, N)
    rt60: float = 0.0
    snr_db: float = math.inf
    seed: int = 0
    early_boundary_ms: float = 50.0
    extra: dict = field(default_factory=dict)

    @property
    def n_sources(self) -> int:
        return self.early_images.shape[0]

    @property
    def n_channels(self) -> int:
        return self.mixture.shape[0]

    @property
    def images(self) -> np.ndarray:
        return self.early_images + self.late_images


def _arrival_offsets(rng, tail: int, n: int) -> np.ndarray:
    # arrival density grows quadratically with time, like image sources in a room
    return np.maximum(1, np.ceil(tail * rng.random(n) ** (1.0 / 3.0))).astype(int)


def _reflection_amplitudes(offsets: np.ndarray, rt60: float, sample_rate: int) -> np.ndarray:
    # 1/tau undoes the quadratic arrival density so energy decays at the rt60 rate;
    # clamped near the direct path where arrivals are sparse anyway
    tau = offsets / sample_rate
    return np.exp(-3.0 * math.log(10.0) * tau / rt60) * (_SPARSE_EARLY_S / np.maximum(tau, _SPARSE_EARLY_S))


def synth_rir(
    rt60: float,
    delay_base: int = 0,
    n_reflections: int = 2000,
    seed: int = 0,
    sample_rate: int = 16000,
    drr_db: float = 0.0,
    early_boundary_ms: float = 50.0,
) -> RoomImpulseResponse:
    """Parametric impulse response.

    The direct tap has amplitude 1 at ``delay_base``. Reflections land
    at later samples up to ``rt60`` seconds after it, increasingly dense with
    time, with amplitudes chosen so the energy decays 60 dB over ``rt60``, and are
    scaled so the total reflected energy sits ``drr_db`` below the direct tap.
    ``rt60 == 0`` gives the direct tap alone.
    """
    if rt60 < 0 or delay_base < 0 or n_reflections < 0:
        raise InvalidParam(f"invalid RIR parameters rt60={rt60}, delay_base={delay_base}, n={n_reflections}")
    if rt60 == 0 or n_reflections == 0:
        taps = np.zeros(delay_base + 1)
        taps[delay_base] = 1.0
        return RoomImpulseResponse(taps, sample_rate, early_boundary_ms)

    rng = np.random.default_rng(seed)
    tail = int(math.ceil(rt60 * sample_rate))
    taps = np.zeros(delay_base + tail + 1)
    offsets = _arrival_offsets(rng, tail, n_reflections)
    signs = rng.choice([-1.0, 1.0], size=n_reflections)
    amps = signs * _reflection_amplitudes(offsets, rt60, sample_rate)
    reflections = np.zeros(tail + 1)
    np.add.at(reflections, offsets, amps)
    energy = np.sum(reflections**2)
    if energy > 0:
        reflections *= math.sqrt(10.0 ** (-drr_db / 10.0) / energy)
    taps[delay_base:] = reflections
    taps[delay_base] = 1.0
    return RoomImpulseResponse(taps, sample_rate, early_boundary_ms)


def synth_array_rirs(
    rt60: float,
    direct_delays,
    mic_positions,
    n_reflections: int = 2000,
    seed: int = 0,
    sample_rate: int = 16000,
    drr_db: float = 0.0,
    early_boundary_ms: float = 50.0,
    reflection_base: int | None = None,
) -> list[RoomImpulseResponse]:
    """Responses of one source at a linear array, one per microphone.

    Reflections share their arrival time, sign and amplitude across the array
    but each comes from its own random direction, so microphone ``c`` receives
    it shifted by ``mic_positions[c] * sin(direction)`` (rounded to samples).
    Reflection times count from ``reflection_base`` (default: the earliest
    direct delay). Each response individually has the structure of
    :func:`synth_rir`.
    """
    direct_delays = np.asarray(direct_delays, dtype=int)
    mic_positions = np.asarray(mic_positions, dtype=float)
    if direct_delays.shape != mic_positions.shape:
        raise LengthMismatch("need one direct delay per microphone position")
    if rt60 < 0 or np.any(direct_delays < 0) or n_reflections < 0:
        raise InvalidParam(f"invalid RIR parameters rt60={rt60}, delays={direct_delays}, n={n_reflections}")
    if rt60 == 0 or n_reflections == 0:
        return [synth_rir(0.0, int(d), 0, sample_rate=sample_rate, early_boundary_ms=early_boundary_ms) for d in direct_delays]

    rng = np.random.default_rng(seed)
    tail = int(math.ceil(rt60 * sample_rate))
    offsets = _arrival_offsets(rng, tail, n_reflections)
    signs = rng.choice([-1.0, 1.0], size=n_reflections)
    directions = rng.uniform(-np.pi / 2, np.pi / 2, size=n_reflections)
    amps = signs * _reflection_amplitudes(offsets, rt60, sample_rate)
    amps *= math.sqrt(10.0 ** (-drr_db / 10.0) / np.sum(amps**2))
    base = int(np.min(direct_delays)) if reflection_base is None else int(reflection_base)
    out = []
    for d, pos in zip(direct_delays, mic_positions):
        shift = np.rint(pos * np.sin(directions) * sample_rate / SPEED_OF_SOUND).astype(int)
        # arrivals never precede this microphone's direct path
        arrival = np.maximum(base + offsets + shift, d + 1)
        taps = np.zeros(int(arrival.max()) + 1)
        np.add.at(taps, arrival, amps)
        taps[:d] = 0.0
        taps[d] = 1.0
        out.append(RoomImpulseResponse(taps, sample_rate, early_boundary_ms))
    return out


def _convolve(signal: np.ndarray, h: np.ndarray, n: int) -> np.ndarray:
    nz = np.flatnonzero(h)
    if len(nz) == 0:
        return np.zeros(n)
    if len(nz) == 1:
        # pure delay and gain: keep it exact
        out = np.zeros(n)
        k = nz[0]
        if k < n:
            out[k:] = h[k] * signal[: n - k]
        return out
    return fftconvolve(signal, h)[:n]


def render_scene(
    sources,
    rirs,
    snr_db: float = math.inf,
    seed: int = 0,
    sample_rate: int | None = None,
    rt60: float = 0.0,
) -> MixtureScene:
    """Convolve each dry source with its per-microphone responses and add noise.

    ``rirs[j][c]`` is the response from source ``j`` to microphone ``c``.
    White Gaussian noise is scaled so that the energy of all images over the
    energy of the noise (all channels pooled) equals ``snr_db``.
    """
    sources = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    J, N = sources.shape
    if len(rirs) != J or len({len(row) for row in rirs}) != 1:
        raise LengthMismatch(f"need one row of per-microphone responses per source ({J})")
    C = len(rirs[0])
    rates = {r.sample_rate for row in rirs for r in row}
    if sample_rate is not None:
        rates.add(sample_rate)
    if len(rates) != 1:
        raise SampleRateMismatch(f"sample rates disagree: {sorted(rates)}")
    rate = rates.pop()
    boundaries = {r.early_boundary_ms for row in rirs for r in row}

    early = np.zeros((J, C, N))
    late = np.zeros((J, C, N))
    for j in range(J):
        for c in range(C):
            early[j, c] = _convolve(sources[j], rirs[j][c].early(), N)
            late[j, c] = _convolve(sources[j], rirs[j][c].late(), N)

    images = np.sum(early + late, axis=0)
    if math.isinf(snr_db) and snr_db > 0:
        noise = np.zeros((C, N))
    else:
        noise = np.random.default_rng(seed).standard_normal((C, N))
        image_energy = np.sum(images**2)
        noise *= math.sqrt(image_energy / (np.sum(noise**2) * 10.0 ** (snr_db / 10.0)))
    mixture = images + noise
    return MixtureScene(
        sample_rate=rate,
        sources=sources,
        rirs=[list(row) for row in rirs],
        early_images=early,
        late_images=late,
        noise=noise,
        mixture=mixture,
        rt60=rt60,
        snr_db=snr_db,
        seed=seed,
        early_boundary_ms=boundaries.pop() if len(boundaries) == 1 else float("nan"),
    )


def speech_like(n_samples: int, sample_rate: int = 16000, seed: int = 0) -> np.ndarray:
    """Deterministic speech-like test signal.

    Voiced segments are a gliding harmonic series (random pitch and spectral
    tilt), gated by a syllable-rate envelope, with sparse noise bursts standing
    in for fricatives. Normalized to unit RMS.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / sample_rate
    f0_base = rng.uniform(95.0, 240.0)
    f0 = f0_base * (
        1.0
        + 0.10 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
        + 0.04 * np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, 2 * np.pi))
    )
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    formants = rng.uniform([300, 900, 2000], [900, 2000, 3200])
    voiced = np.zeros(n_samples)
    for k in range(1, int(0.45 * sample_rate / f0_base) + 1):
        fk = k * f0_base
        gain = sum(np.exp(-0.5 * ((fk - fc) / 150.0) ** 2) for fc in formants) + 0.3 / k
        voiced += gain * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    seg = int(0.12 * sample_rate)
    n_seg = n_samples // seg + 1
    smooth = np.hanning(int(0.04 * sample_rate))
    smooth /= smooth.sum()

    def envelope(p_on):
        gates = np.repeat((rng.random(n_seg) < p_on).astype(float), seg)[:n_samples]
        return np.convolve(gates, smooth, mode="same")

    fric = rng.standard_normal(n_samples)
    fric = fric - np.convolve(fric, np.ones(4) / 4, mode="same")  # crude high-pass
    out = voiced * envelope(0.6) + 0.5 * fric * envelope(0.12)
    return out / max(np.sqrt(np.mean(out**2)), 1e-12)


def _sub_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def make_scene(
    n_sources: int = 2,
    n_channels: int = 2,
    rt60: float = 0.3,
    snr_db: float = 20.0,
    seed: int = 0,
    duration: float = 4.0,
    sample_rate: int = 16000,
    mic_spacing: float = 0.08,
    drr_db: float = 8.0,
    n_reflections: int = 2000,
    early_boundary_ms: float = 50.0,
    level: float = 0.05,
) -> MixtureScene:
    """Render a random scene of speech-like sources in front of a linear array.

    The default direct-to-reverberant ratio of 8 dB corresponds to talkers
    close to the array (roughly half a metre in a small office).

    Microphones sit ``mic_spacing`` apart starting at the origin. Random
    quantities are keyed by ``(seed, source)`` and the noise is drawn channel
    by channel, so adding microphones leaves the existing ones' images unchanged.
    """
    n = int(round(duration * sample_rate))
    angle_rng = np.random.default_rng(_sub_seed(seed, 1))
    # distinct arrival directions at least 30 degrees apart
    while True:
        angles = angle_rng.uniform(-75.0, 75.0, size=n_sources)
        if n_sources == 1 or np.min(np.diff(np.sort(angles))) >= 30.0:
            break
    sources = np.stack([level * speech_like(n, sample_rate, _sub_seed(seed, 2, j)) for j in range(n_sources)])
    delay_base = 40
    positions = mic_spacing * np.arange(n_channels)
    rirs = []
    for j in range(n_sources):
        lags = positions * math.sin(math.radians(angles[j])) * sample_rate / SPEED_OF_SOUND
        rirs.append(
            synth_array_rirs(
                rt60,
                direct_delays=delay_base + np.rint(lags).astype(int),
                mic_positions=positions,
                n_reflections=n_reflections,
                seed=_sub_seed(seed, 3, j),
                sample_rate=sample_rate,
                drr_db=drr_db,
                early_boundary_ms=early_boundary_ms,
                reflection_base=delay_base,
            )
        )
    scene = render_scene(sources, rirs, snr_db, seed=_sub_seed(seed, 4), sample_rate=sample_rate, rt60=rt60)
    scene.seed = seed
    scene.extra = {"angles_deg": [round(float(a), 3) for a in angles], "drr_db": drr_db, "mic_spacing": mic_spacing}
    return scene


def _fmt(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def write_scene(scene: MixtureScene, directory) -> Path:
    """Write a scene directory: ``scene.txt`` manifest plus float32 WAV components.

    Files: ``mixture.wav`` and ``noise.wav`` (C channels), ``source_<j>.wav``
    (mono dry signal), ``early_<j>.wav``, ``late_<j>.wav`` and ``rir_<j>.wav``
    (C channels each), ``j`` counting sources from 1.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rate = scene.sample_rate
    write_wav(d / "mixture.wav", Waveform(rate, scene.mixture))
    write_wav(d / "noise.wav", Waveform(rate, scene.noise))
    for j in range(scene.n_sources):
        k = j + 1
        write_wav(d / f"source_{k}.wav", Waveform(rate, scene.sources[j]))
        write_wav(d / f"early_{k}.wav", Waveform(rate, scene.early_images[j]))
        write_wav(d / f"late_{k}.wav", Waveform(rate, scene.late_images[j]))
        length = max(len(r.taps) for r in scene.rirs[j])
        taps = np.zeros((scene.n_channels, length))
        for c, r in enumerate(scene.rirs[j]):
            taps[c, : len(r.taps)] = r.taps
        write_wav(d / f"rir_{k}.wav", Waveform(rate, taps))
    manifest = {
        "format": SCENE_FORMAT,
        "sample_rate": rate,
        "num_sources": scene.n_sources,
        "num_channels": scene.n_channels,
        "num_samples": scene.mixture.shape[1],
        "rt60": float(scene.rt60),
        "snr_db": float(scene.snr_db),
        "seed": scene.seed,
        "early_boundary_ms": float(scene.early_boundary_ms),
    }
    manifest.update(scene.extra)
    lines = [f"{key}={_fmt(val)}" for key, val in manifest.items()]
    (d / "scene.txt").write_text("\n".join(lines) + "\n")
    return d


def read_manifest(path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidParam(f"{path}: malformed line {line!r}")
        out[key.strip()] = value.strip()
    return out


def read_scene(directory) -> MixtureScene:
    d = Path(directory)
    meta = read_manifest(d / "scene.txt")
    if meta.get("format") != SCENE_FORMAT:
        raise InvalidParam(f"{d}: unknown scene format {meta.get('format')!r}")
    J = int(meta["num_sources"])
    boundary = float(meta["early_boundary_ms"])
    mixture = read_wav(d / "mixture.wav")
    rate = mixture.sample_rate
    early, late, sources, rirs = [], [], [], []
    for k in range(1, J + 1):
        early.append(read_wav(d / f"early_{k}.wav").samples)
        late.append(read_wav(d / f"late_{k}.wav").samples)
        sources.append(read_wav(d / f"source_{k}.wav").samples[0])
        rir = read_wav(d / f"rir_{k}.wav")
        rirs.append([RoomImpulseResponse(np.trim_zeros(h, "b"), rate, boundary) for h in rir.samples])
    return MixtureScene(
        sample_rate=rate,
        sources=np.stack(sources),
        rirs=rirs,
        early_images=np.stack(early),
        late_images=np.stack(late),
        noise=read_wav(d / "noise.wav").samples,
        mixture=mixture.samples,
        rt60=float(meta["rt60"]),
        snr_db=float(meta["snr_db"]),
        seed=int(meta["seed"]),
        early_boundary_ms=boundary,
    )
