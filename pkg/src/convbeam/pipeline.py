"""End-to-end frontends: plain MVDR, WPE followed by MVDR, and WPD."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .beamform_mvdr import mvdr_separate
from .errors import InvalidParam
from .linalg import DEFAULT_LOADING
from .masks import oracle_early_mask, oracle_masks, uniform_mask
from .metrics import MetricReport, best_permutation_si_sdr
from .stft import StftConfig, istft, stft
from .wpd import WpdConfig, wpd_separate
from .wpe import WpeConfig, wpe_run

ARCHITECTURES = ("mvdr", "wpe_mvdr", "wpd")
WPE_MODES = ("shared", "per_source")


@dataclass
class PipelineConfig:
    architecture: str = "wpd"
    stft: StftConfig = field(default_factory=StftConfig)
    wpe: WpeConfig = field(default_factory=WpeConfig)
    wpd: WpdConfig = field(default_factory=WpdConfig)
    wpe_mode: str = "shared"
    ref_channel: int = 0
    loading: float = DEFAULT_LOADING
    threads: int = 1

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise InvalidParam(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.wpe_mode not in WPE_MODES:
            raise InvalidParam(f"wpe_mode must be one of {WPE_MODES}, got {self.wpe_mode!r}")
        if self.threads < 1:
            raise InvalidParam("threads must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


def separate(
    X: np.ndarray,
    masks: np.ndarray,
    cfg: PipelineConfig,
    wpe_mask: np.ndarray | None = None,
    power_masks: np.ndarray | None = None,
    silence_degenerate: bool = False,
) -> list[np.ndarray]:
    """Run the configured frontend on ``X`` (``T, F, C``) with masks ``(J+1, T, F, C)``.

    ``wpe_mask`` drives the shared WPE stage of ``wpe_mvdr`` (uniform if None);
    ``power_masks`` are the power-path masks of WPD in split-mask mode.
    Returns one ``(T, F)`` spectrogram per source.
    """
    kw = dict(threads=cfg.threads, silence_degenerate=silence_degenerate)
    if cfg.architecture == "mvdr":
        return mvdr_separate(X, masks, cfg.ref_channel, cfg.loading, **kw)
    if cfg.architecture == "wpe_mvdr":
        if cfg.wpe_mode == "shared":
            dereverbed = wpe_run(X, wpe_mask, cfg.wpe, threads=cfg.threads)
            return mvdr_separate(dereverbed, masks, cfg.ref_channel, cfg.loading, **kw)
        outputs = []
        for j in range(1, masks.shape[0]):
            dereverbed = wpe_run(X, masks[j], cfg.wpe, threads=cfg.threads)
            outputs.append(mvdr_separate(dereverbed, masks, cfg.ref_channel, cfg.loading, **kw)[j - 1])
        return outputs
    return wpd_separate(X, masks, cfg.wpd, power_masks=power_masks, **kw)


def separate_scene(scene, cfg: PipelineConfig, masks: np.ndarray | None = None) -> list[np.ndarray]:
    """Separate a simulated scene with oracle masks; returns time-domain ``(N,)`` signals."""
    X = stft(scene.mixture, cfg.stft)
    if masks is None:
        masks = oracle_masks(scene, cfg.stft)
    wpe_mask = oracle_early_mask(scene, cfg.stft) if cfg.architecture == "wpe_mvdr" else None
    outputs = separate(X, masks, cfg, wpe_mask=wpe_mask)
    n = scene.mixture.shape[1]
    return [istft(Y, cfg.stft, n)[0] for Y in outputs]


def interior(n_samples: int, cfg: StftConfig = StftConfig()) -> slice:
    """Samples away from the first/last analysis window, where metrics are taken."""
    return slice(cfg.win_len, n_samples - cfg.win_len)


def evaluate_scene(scene, estimates, ref_channel: int = 0, cfg: StftConfig = StftConfig()) -> MetricReport:
    """SI-SDR of each estimate against the early image at the reference microphone.

    Only interior samples are scored.
    """
    sl = interior(scene.mixture.shape[1], cfg)
    references = [img[ref_channel][sl] for img in scene.early_images]
    return best_permutation_si_sdr(
        [np.asarray(e)[sl] for e in estimates], references, unprocessed=scene.mixture[ref_channel][sl]
    )


def uniform_masks(n_sources: int, shape) -> np.ndarray:
    """Mask set for blind runs: every source and the noise get an all-ones mask."""
    return np.stack([uniform_mask(shape)] * (n_sources + 1))
