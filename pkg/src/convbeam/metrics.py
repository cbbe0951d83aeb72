"""Scale-invariant SDR and permutation-resolved separation reports."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, TooManySources, ZeroReference

SI_SDR_CLAMP = 100.0
MAX_PERMUTATION_SOURCES = 4


def si_sdr(estimate, reference) -> float:
    """SI-SDR in dB, clamped to ``[-100, 100]``."""
    e = np.asarray(estimate, dtype=np.float64).ravel()
    r = np.asarray(reference, dtype=np.float64).ravel()
    if e.shape != r.shape or e.size == 0:
        raise LengthMismatch(f"estimate {e.shape} and reference {r.shape} must match and be non-empty")
    ref_energy = float(np.dot(r, r))
    if ref_energy == 0.0:
        raise ZeroReference("reference signal is all zeros")
    target = (np.dot(e, r) / ref_energy) * r
    num = float(np.dot(target, target))
    den = float(np.sum((e - target) ** 2))
    if num == 0.0:
        return -SI_SDR_CLAMP
    if den == 0.0:
        return SI_SDR_CLAMP
    return float(np.clip(10.0 * math.log10(num / den), -SI_SDR_CLAMP, SI_SDR_CLAMP))


@dataclass
class MetricReport:
    si_sdr: list[float]
    si_sdr_improvement: list[float]  # NaN when no unprocessed signal was given
    permutation: tuple[int, ...]  # permutation[j] = estimate index paired with reference j

    @property
    def mean_si_sdr(self) -> float:
        return float(np.mean(self.si_sdr))

    @property
    def mean_improvement(self) -> float:
        return float(np.mean(self.si_sdr_improvement))

    def lines(self) -> list[str]:
        return [
            f"src={j + 1} si_sdr={s:.4f} delta={d:.4f}"
            for j, (s, d) in enumerate(zip(self.si_sdr, self.si_sdr_improvement))
        ]


def best_permutation_si_sdr(estimates, references, unprocessed=None) -> MetricReport:
    """Pair estimates with references to maximize mean SI-SDR (exhaustive search).

    ``unprocessed``, if given, is the signal each reference is compared against
    without enhancement (e.g. the reference-microphone mixture); improvements are
    reported relative to it.
    """
    estimates = [np.asarray(e, dtype=np.float64) for e in estimates]
    references = [np.asarray(r, dtype=np.float64) for r in references]
    J = len(references)
    if len(estimates) != J:
        raise LengthMismatch(f"{len(estimates)} estimates for {J} references")
    if J > MAX_PERMUTATION_SOURCES:
        raise TooManySources(f"{J} sources; exhaustive search supports at most {MAX_PERMUTATION_SOURCES}")
    scores = np.array([[si_sdr(e, r) for e in estimates] for r in references])
    best = max(itertools.permutations(range(J)), key=lambda p: np.mean(scores[np.arange(J), p]))
    chosen = [float(scores[j, best[j]]) for j in range(J)]
    if unprocessed is None:
        deltas = [math.nan] * J
    else:
        deltas = [chosen[j] - si_sdr(unprocessed, references[j]) for j in range(J)]
    return MetricReport(chosen, deltas, tuple(int(p) for p in best))
