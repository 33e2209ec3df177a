"""Per-bin responsibility estimation by randomized partition interventions.

One iteration assigns spectrum bins uniformly at random to p parts, queries
the classifier on the reconstruction of every nonempty part subset, and
credits each bin of every minimal passing subset with 1/|reconstructed bins|.
Parts that earned credit are recursively re-partitioned, holding the rest of
their passing subset fixed as context.  Iterations accumulate until the
Earth Mover's Distance between the newest map and the running total falls
below a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import Classification, ClassifierHandle, QueryBudgetExceeded
from .signals import Spectrum, TimeSignal

# Calibrated on the synthetic corpus at 12001 bins (3 s at 8 kHz); the EMD is
# in units of bins, so rescale for very different spectrum sizes.  See
# scripts/calibrate_epsilon.py and scripts/epsilon_calibration.log.
DEFAULT_EPSILON = 80.0


@dataclass(frozen=True)
class PartitionConfig:
    p: int = 4
    max_depth: int = 3
    iterations: int = 20
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")


@dataclass
class ResponsibilityMap:
    """Accumulated per-bin scores; bins never in a passing subset stay 0."""

    scores: np.ndarray
    iterations_run: int
    emd_trace: tuple[float, ...] = ()
    incomplete: bool = False

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1:
            raise ValueError("scores must be a 1-D vector")
        if np.any(self.scores < 0.0):
            raise ValueError("responsibility scores must be non-negative")

    def to_csv(self, spectrum: Spectrum) -> str:
        lines = ["bin_index,frequency_hz,score"]
        for k, s in enumerate(self.scores):
            lines.append(f"{k},{spectrum.bin_frequency(k):.6f},{s!r}")
        return "\n".join(lines) + "\n"


def earth_movers_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1-D EMD with unit bin spacing: sum of |cumulative difference|.

    Inputs are normalized to unit mass, so only the shapes compare.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"shapes must match, got {a.shape} and {b.shape}")
    if np.any(a < 0.0) or np.any(b < 0.0):
        raise ValueError("distributions must be non-negative")
    ma, mb = a.sum(), b.sum()
    if ma <= 0.0 or mb <= 0.0:
        raise ValueError("distributions must have positive mass")
    return float(np.sum(np.abs(np.cumsum(a / ma - b / mb))))


def classify_bins(spectrum: Spectrum, keep: np.ndarray, handle: ClassifierHandle) -> Classification:
    """Classify the time reconstruction of the spectrum restricted to ``keep``."""
    kept = np.zeros_like(spectrum.bins)
    kept[keep] = spectrum.bins[keep]
    x = np.fft.irfft(kept, n=spectrum.original_length)
    return handle.classify(TimeSignal(x, spectrum.sample_rate))


def _submask_passes(bits: int, passing: np.ndarray) -> bool:
    sub = (bits - 1) & bits
    while sub:
        if passing[sub]:
            return True
        sub = (sub - 1) & bits
    return False


def _refine(spectrum: Spectrum, handle: ClassifierHandle, target_label: str,
            rng: np.random.Generator, scores: np.ndarray,
            scope: np.ndarray, context: np.ndarray, depth: int, config: PartitionConfig) -> None:
    if len(scope) < 2:
        return
    perm = rng.permutation(scope)
    parts = [np.sort(part) for part in np.array_split(perm, min(config.p, len(scope)))]
    n_subsets = (1 << len(parts)) - 1

    passing = np.zeros(n_subsets + 1, dtype=bool)
    members: list[np.ndarray | None] = [None] * (n_subsets + 1)
    for bits in range(1, n_subsets + 1):
        member = np.concatenate([parts[j] for j in range(len(parts)) if bits >> j & 1])
        members[bits] = member
        keep = np.concatenate([member, context]) if len(context) else member
        passing[bits] = classify_bins(spectrum, keep, handle).label == target_label

    for bits in range(1, n_subsets + 1):
        if not passing[bits] or _submask_passes(bits, passing):
            continue
        member = members[bits]
        # The all-parts subset at depth >= 1 reconstructs exactly the parent's
        # passing set, which the parent already credited.
        if not (bits == n_subsets and depth >= 1):
            scores[member] += 1.0 / (len(member) + len(context))
        if depth < config.max_depth:
            for j in range(len(parts)):
                if not bits >> j & 1:
                    continue
                rest = [parts[i] for i in range(len(parts)) if i != j and bits >> i & 1]
                child_context = np.concatenate([context, *rest]) if rest else context
                _refine(spectrum, handle, target_label, rng, scores,
                        parts[j], child_context, depth + 1, config)


def calculate_responsibility(spectrum: Spectrum, handle: ClassifierHandle,
                             config: PartitionConfig, target: Classification,
                             seed=None) -> ResponsibilityMap:
    """One randomized-partition iteration (a single R_i).

    On budget exhaustion the partial map is returned flagged incomplete.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n_bins = len(spectrum.bins)
    scores = np.zeros(n_bins, dtype=np.float64)
    incomplete = False
    try:
        _refine(spectrum, handle, target.label, rng, scores,
                np.arange(n_bins), np.empty(0, dtype=np.int64), 0, config)
    except QueryBudgetExceeded:
        incomplete = True
    return ResponsibilityMap(scores, iterations_run=1, incomplete=incomplete)


def accumulate(handle: ClassifierHandle, spectrum: Spectrum,
               config: PartitionConfig) -> ResponsibilityMap:
    """Iterate calculate_responsibility with fresh partitions, summing into R_g.

    The EMD between the normalized incoming map and the normalized running
    total is computed before each update; the loop stops when it reaches
    config.epsilon or after config.iterations.  The first iteration has no
    prior map to compare against and records +inf.
    """
    target = handle.classify(TimeSignal(
        np.fft.irfft(spectrum.bins, n=spectrum.original_length), spectrum.sample_rate))
    total = np.zeros(len(spectrum.bins), dtype=np.float64)
    trace: list[float] = []
    incomplete = False
    iterations_run = 0
    for i in range(config.iterations):
        seed = np.random.SeedSequence([config.seed, i])
        r_i = calculate_responsibility(spectrum, handle, config, target, seed=seed)
        if total.sum() > 0.0 and r_i.scores.sum() > 0.0:
            trace.append(earth_movers_distance(r_i.scores, total))
        else:
            trace.append(float("inf"))
        total += r_i.scores
        iterations_run += 1
        if r_i.incomplete:
            incomplete = True
            break
        if trace[-1] <= config.epsilon:
            break
    return ResponsibilityMap(total, iterations_run=iterations_run,
                             emd_trace=tuple(trace), incomplete=incomplete)
