"""Minimal frequency-domain manipulations that flip the classification.

The Fourier attack scales complex bins of the full spectrum: phase 1 applies
the strongest mutation to the top-1, top-2, ... responsibility-ranked
sufficient bins until the label flips; phase 2 holds that bin count fixed and
sweeps mutations from weakest to strongest, returning the first that still
flips.  The STFT attack localizes a successful Fourier attack in time by
applying its mutation to the mapped bins of the highest-magnitude frames,
escalating the frame size only when a size yields no flip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .classifier import Classification, ClassifierHandle
from .responsibility import ResponsibilityMap
from .signals import BinSet, Spectrum, TimeSignal, istft, stft, map_bins

DEFAULT_DELTAS = (0.0, 0.25, 0.5, 2.0, 4.0, 8.0)
DEFAULT_BUDGET = 1000
DEFAULT_FRAME_SCHEDULE = (256, 512, 1024)


def perturbation_order(delta: float) -> tuple[float, float]:
    """Sort key from weakest to strongest: |ln delta|, deletion (0) strongest.

    Ties in |ln delta| (e.g. 0.5 vs 2.0) break toward the smaller scalar.
    """
    if delta < 0.0:
        raise ValueError(f"mutation scalars must be >= 0, got {delta}")
    return (math.inf, delta) if delta == 0.0 else (abs(math.log(delta)), delta)


@dataclass(frozen=True)
class AttackConfig:
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not self.deltas:
            raise ValueError("deltas must be nonempty")
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        for d in self.deltas:
            perturbation_order(d)


@dataclass(frozen=True)
class MutationPlan:
    """Outcome of the mutation search; failure keeps the sentinel Nones."""

    deltas: tuple[float, ...]
    budget: int
    chosen_delta: float | None
    bins_modified: BinSet
    n_frequencies: int | None

    def __post_init__(self):
        if self.chosen_delta is not None and self.chosen_delta not in self.deltas:
            raise ValueError(f"chosen delta {self.chosen_delta} not in {self.deltas}")
        if self.n_frequencies is not None and self.n_frequencies > self.budget:
            raise ValueError(f"{self.n_frequencies} frequencies exceed budget {self.budget}")
        if self.n_frequencies is not None and self.n_frequencies != len(self.bins_modified):
            raise ValueError("n_frequencies disagrees with bins_modified")

    @property
    def success(self) -> bool:
        return self.chosen_delta is not None


@dataclass(frozen=True)
class AttackResult:
    altered: TimeSignal
    altered_spectrum: Spectrum | None
    before: Classification
    after: Classification
    plan: MutationPlan
    query_count: int
    linf_delta: float
    l2_delta: float
    frames_modified: int | None = None
    frame_size_used: int | None = None

    @property
    def success(self) -> bool:
        return self.after.label != self.before.label

    def __post_init__(self):
        if self.plan.success and not self.success:
            raise ValueError("plan reports success but the label did not flip")


def _apply_delta(spectrum: Spectrum, bins: np.ndarray, delta: float) -> Spectrum:
    altered = spectrum.bins.copy()
    altered[bins] *= delta
    return Spectrum(altered, spectrum.original_length, spectrum.sample_rate)


def _classify_spectrum(spectrum: Spectrum, handle: ClassifierHandle
                       ) -> tuple[TimeSignal, Classification]:
    x = TimeSignal(np.fft.irfft(spectrum.bins, n=spectrum.original_length),
                   spectrum.sample_rate)
    return x, handle.classify(x)


def _sentinel(signal: TimeSignal, before: Classification, config: AttackConfig,
              queries: int, **stft_fields) -> AttackResult:
    plan = MutationPlan(deltas=tuple(config.deltas), budget=config.budget,
                        chosen_delta=None, bins_modified=BinSet.of([]),
                        n_frequencies=None)
    return AttackResult(altered=signal, altered_spectrum=None, before=before,
                        after=before, plan=plan, query_count=queries,
                        linf_delta=0.0, l2_delta=0.0, **stft_fields)


def fourier_attack(spectrum: Spectrum, rmap: ResponsibilityMap, sufficient: BinSet,
                   handle: ClassifierHandle, config: AttackConfig = AttackConfig()
                   ) -> AttackResult:
    """Flip the label by scaling the fewest, weakest sufficient bins.

    Untouched bins of the altered spectrum are bit-identical to the source.
    Non-success is a value: the sentinel plan records the exhausted budget.
    """
    if len(sufficient) == 0:
        raise ValueError("sufficient bin set must be nonempty")
    queries_before = handle.query_count
    original_signal, before = _classify_spectrum(spectrum, handle)

    ranked = np.asarray(sufficient.indices)
    ranked = ranked[np.lexsort((ranked, -rmap.scores[ranked]))]
    delta_max = max(config.deltas, key=perturbation_order)

    n_flip = None
    for k in range(1, min(len(ranked), config.budget) + 1):
        _, c = _classify_spectrum(_apply_delta(spectrum, ranked[:k], delta_max), handle)
        if c.label != before.label:
            n_flip = k
            break
    if n_flip is None:
        return _sentinel(original_signal, before, config,
                         handle.query_count - queries_before)

    bins = ranked[:n_flip]
    chosen = delta_max
    after = c
    for delta in sorted(config.deltas, key=perturbation_order):
        _, c = _classify_spectrum(_apply_delta(spectrum, bins, delta), handle)
        if c.label != before.label:
            chosen, after = delta, c
            break

    altered_spectrum = _apply_delta(spectrum, bins, chosen)
    altered = TimeSignal(np.fft.irfft(altered_spectrum.bins, n=spectrum.original_length),
                         spectrum.sample_rate)
    diff = altered.samples - original_signal.samples
    plan = MutationPlan(deltas=tuple(config.deltas), budget=config.budget,
                        chosen_delta=chosen, bins_modified=BinSet.of(bins),
                        n_frequencies=n_flip)
    return AttackResult(altered=altered, altered_spectrum=altered_spectrum,
                        before=before, after=after, plan=plan,
                        query_count=handle.query_count - queries_before,
                        linf_delta=float(np.max(np.abs(diff))),
                        l2_delta=float(np.linalg.norm(diff)))


def stft_attack(signal: TimeSignal, attack: AttackResult, handle: ClassifierHandle,
                frame_schedule: tuple[int, ...] = DEFAULT_FRAME_SCHEDULE,
                allow_failed: bool = False) -> AttackResult:
    """Localize a Fourier attack: mutate mapped bins frame by frame.

    Frames are tried in descending total magnitude over the mapped bins (ties
    to the earlier frame); the mutation set grows cumulatively until the label
    flips.  The next frame size is tried only if the current one never flips.
    Mutations live in the spectrogram domain, so time-domain leakage outside
    the targeted frames is inherent to overlap-add reconstruction.
    """
    if not attack.plan.success and not allow_failed:
        raise ValueError("source attack did not succeed; pass allow_failed to force")
    queries_before = handle.query_count
    before = handle.classify(signal)
    source_bins = attack.plan.bins_modified
    delta = attack.plan.chosen_delta
    if len(source_bins) == 0 or delta is None:
        return _sentinel(signal, before, AttackConfig(deltas=attack.plan.deltas,
                                                      budget=attack.plan.budget),
                         handle.query_count - queries_before,
                         frames_modified=None, frame_size_used=None)

    for frame_size in frame_schedule:
        if frame_size > len(signal):
            continue
        gram = stft(signal, frame_size)
        mapped = map_bins(source_bins, gram).indices
        magnitude = np.abs(gram.frames[mapped, :]).sum(axis=0)
        frame_order = np.lexsort((np.arange(gram.n_frames), -magnitude))
        frame_limit = min(gram.n_frames, attack.plan.budget)
        frames = np.copy(gram.frames)
        for t in range(1, frame_limit + 1):
            frames[np.ix_(mapped, frame_order[t - 1:t])] *= delta
            candidate = istft(replace(gram, frames=frames.copy()))
            c = handle.classify(candidate)
            if c.label != before.label:
                diff = candidate.samples - signal.samples
                plan = MutationPlan(deltas=attack.plan.deltas, budget=attack.plan.budget,
                                    chosen_delta=delta,
                                    bins_modified=attack.plan.bins_modified,
                                    n_frequencies=attack.plan.n_frequencies)
                return AttackResult(altered=candidate, altered_spectrum=None,
                                    before=before, after=c, plan=plan,
                                    query_count=handle.query_count - queries_before,
                                    linf_delta=float(np.max(np.abs(diff))),
                                    l2_delta=float(np.linalg.norm(diff)),
                                    frames_modified=t, frame_size_used=frame_size)
    return _sentinel(signal, before, AttackConfig(deltas=attack.plan.deltas,
                                                  budget=attack.plan.budget),
                     handle.query_count - queries_before,
                     frames_modified=None, frame_size_used=None)
