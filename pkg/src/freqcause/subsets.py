"""Greedy extraction of sufficient, necessary, and complete bin sets.

Bins are walked in descending responsibility order in steps of one
equal-score cell (or a fixed chunk).  Three conditions are checked per step
on fresh classifier queries: the prefix reconstruction keeps the label above
a score gate (sufficient), the complement reconstruction flips (necessary),
and the prefix score matches the original to two decimals (complete).  Each
set is reported at the first step where its full condition holds for
chain_length consecutive steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import Classification, ClassifierHandle
from .responsibility import ResponsibilityMap, classify_bins
from .signals import BinSet, Spectrum, TimeSignal, inverse, mask


@dataclass(frozen=True)
class ExtractionConfig:
    chain_length: int = 5
    min_score_ratio: float = 0.5
    step: int | None = None  # bins per greedy step; None = one equal-score cell

    def __post_init__(self):
        if self.chain_length < 1:
            raise ValueError(f"chain_length must be >= 1, got {self.chain_length}")
        if not 0.0 < self.min_score_ratio <= 1.0:
            raise ValueError(f"min_score_ratio must be in (0, 1], got {self.min_score_ratio}")
        if self.step is not None and self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")


@dataclass(frozen=True)
class SubsetReport:
    original: Classification
    sufficient: BinSet | None = None
    necessary: BinSet | None = None
    complete: BinSet | None = None
    at_sufficient: Classification | None = None
    at_necessary: Classification | None = None
    at_complete: Classification | None = None
    inverse_of_necessary: Classification | None = None
    query_count: int = 0
    diagnostic: str | None = None

    def __post_init__(self):
        for smaller, larger, names in (
            (self.sufficient, self.necessary, "sufficient/necessary"),
            (self.necessary, self.complete, "necessary/complete"),
        ):
            if smaller is not None and larger is not None and not smaller.issubset(larger):
                raise ValueError(f"nesting violated for {names}")
        if self.sufficient is not None and self.at_sufficient is None:
            raise ValueError("sufficient set reported without its classification")
        if self.necessary is not None and (
            self.at_necessary is None or self.inverse_of_necessary is None
        ):
            raise ValueError("necessary set reported without its classifications")
        if self.complete is not None and self.at_complete is None:
            raise ValueError("complete set reported without its classification")


def _greedy_steps(scores: np.ndarray, step: int | None) -> list[np.ndarray]:
    """Bins with positive score, ranked by (-score, index), grouped per step."""
    nonzero = np.nonzero(scores > 0.0)[0]
    if len(nonzero) == 0:
        return []
    order = nonzero[np.lexsort((nonzero, -scores[nonzero]))]
    if step is not None:
        return [order[i:i + step] for i in range(0, len(order), step)]
    ranked_scores = scores[order]
    boundaries = np.nonzero(np.diff(ranked_scores))[0] + 1
    return np.split(order, boundaries)


def extract(spectrum: Spectrum, rmap: ResponsibilityMap, handle: ClassifierHandle,
            config: ExtractionConfig) -> SubsetReport:
    """Greedy subset extraction over the responsibility ordering.

    Absence of a set is a value (with diagnostic), not an error; a chain of
    chain_length steps must fit inside the nonzero-responsibility prefix for
    any set to stabilize.
    """
    if len(rmap.scores) != len(spectrum.bins):
        raise ValueError("responsibility map does not cover the spectrum")
    queries_before = handle.query_count
    original = classify_bins(spectrum, np.arange(len(spectrum.bins)), handle)
    steps = _greedy_steps(rmap.scores, config.step)

    all_bins = np.arange(len(spectrum.bins))
    prefixes: list[np.ndarray] = []
    at_prefix: list[Classification] = []
    at_complement: list[Classification] = []
    found: dict[str, int] = {}
    runs = {"sufficient": 0, "necessary": 0, "complete": 0}

    kept = np.zeros(0, dtype=np.int64)
    for step_bins in steps:
        kept = np.concatenate([kept, step_bins])
        c_prefix = classify_bins(spectrum, kept, handle)
        complement = np.setdiff1d(all_bins, kept, assume_unique=True)
        c_comp = classify_bins(spectrum, complement, handle)
        prefixes.append(kept)
        at_prefix.append(c_prefix)
        at_complement.append(c_comp)

        s_ok = (c_prefix.label == original.label
                and c_prefix.score >= config.min_score_ratio * original.score)
        n_ok = c_comp.label != original.label
        c_ok = round(c_prefix.score, 2) == round(original.score, 2)
        for name, ok in (("sufficient", s_ok),
                         ("necessary", s_ok and n_ok),
                         ("complete", s_ok and n_ok and c_ok)):
            if name in found:
                continue
            runs[name] = runs[name] + 1 if ok else 0
            if runs[name] == config.chain_length:
                found[name] = len(prefixes) - config.chain_length
        if len(found) == 3:
            break

    def pick(name):
        if name not in found:
            return None, None, None
        i = found[name]
        return BinSet.of(prefixes[i]), at_prefix[i], at_complement[i]

    sufficient, at_sufficient, _ = pick("sufficient")
    necessary, at_necessary, inv_of_necessary = pick("necessary")
    complete, at_complete, _ = pick("complete")
    diagnostic = None
    if sufficient is None:
        diagnostic = (
            f"no sufficient set: label/score gate never held for "
            f"{config.chain_length} consecutive steps over {len(steps)} steps "
            f"of nonzero-responsibility bins"
        )
    elif complete is None or necessary is None:
        missing = [n for n in ("necessary", "complete") if n not in found]
        diagnostic = f"absent: {', '.join(missing)} (condition never stabilized)"
    return SubsetReport(
        original=original,
        sufficient=sufficient,
        necessary=necessary,
        complete=complete,
        at_sufficient=at_sufficient,
        at_necessary=at_necessary,
        at_complete=at_complete,
        inverse_of_necessary=inv_of_necessary,
        query_count=handle.query_count - queries_before,
        diagnostic=diagnostic,
    )


def invert(spectrum: Spectrum, subset: BinSet, handle: ClassifierHandle
           ) -> tuple[TimeSignal, Classification]:
    """Reconstruct the signal with ``subset`` removed and classify it."""
    complement = subset.complement(len(spectrum.bins))
    signal = inverse(mask(spectrum, complement))
    return signal, handle.classify(signal)


def compose(spectra: list[Spectrum], handle: ClassifierHandle, target_label: str
            ) -> tuple[TimeSignal, Classification, bool]:
    """Superpose masked spectra bin-wise, invert, peak-limit, classify."""
    if not spectra:
        raise ValueError("compose requires at least one spectrum")
    first = spectra[0]
    for s in spectra[1:]:
        if (len(s.bins) != len(first.bins) or s.original_length != first.original_length
                or s.sample_rate != first.sample_rate):
            raise ValueError("compose requires identical length and sample rate")
    total = np.sum([s.bins for s in spectra], axis=0)
    x = np.fft.irfft(total, n=first.original_length)
    peak = np.max(np.abs(x))
    if peak > 1.0:
        x = x / peak
    signal = TimeSignal(x, first.sample_rate)
    result = handle.classify(signal)
    return signal, result, result.label == target_label
