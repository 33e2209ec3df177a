"""Attack-search tests on threshold toys where every step is hand-checkable.

The toy spectra have unit-magnitude bins, so a detector thresholding one
bin's magnitude makes the flip behaviour of every mutation scalar exact:
scaling bin b by delta leaves magnitude delta, and the phase ordering can be
verified against the documented weakest-to-strongest sweep.
"""

import numpy as np
import pytest

from conftest import bin_detector, toy_spectrum
from freqcause.classifier import BuiltinClassifier, Classification, FunctionClassifier
from freqcause.responsibility import ResponsibilityMap
from freqcause.signals import BinSet, TimeSignal, forward, stft
from freqcause.attacks import (
    AttackConfig,
    AttackResult,
    MutationPlan,
    fourier_attack,
    perturbation_order,
    stft_attack,
)

DELTAS = (0.0, 0.25, 0.5, 2.0, 4.0, 8.0)


def rmap(scores) -> ResponsibilityMap:
    return ResponsibilityMap(np.asarray(scores, dtype=np.float64), iterations_run=1)


def magnitude_below(bin_index: int, limit: float) -> FunctionClassifier:
    """Passes while |bin| stays below the limit (flip requires amplifying)."""

    def classify(signal):
        ok = np.abs(np.fft.rfft(signal.samples))[bin_index] < limit
        return Classification(label="pos" if ok else "neg", score=1.0)

    return FunctionClassifier(classify)


def energy_gate(threshold: float) -> FunctionClassifier:
    def classify(signal):
        e = float(np.sum(signal.samples**2))
        return Classification(label="pos" if e >= threshold else "neg", score=1.0)

    return FunctionClassifier(classify)


TOY_SCORES = [0.0, 0.5, 0.0, 0.9, 0.0, 0.2, 0.0, 0.0]


class TestPerturbationOrder:
    def test_weakest_to_strongest_sweep(self):
        assert sorted(DELTAS, key=perturbation_order) == [0.5, 2.0, 0.25, 4.0, 8.0, 0.0]

    def test_deletion_is_strongest(self):
        assert max(DELTAS, key=perturbation_order) == 0.0

    def test_negative_scalar_rejected(self):
        with pytest.raises(ValueError):
            perturbation_order(-0.5)


class TestFourierAttack:
    def test_single_bin_flip_picks_weakest_delta(self):
        """Gate at 0.6: halving bin 3 flips, so 0.5 beats deletion in phase 2."""
        handle = bin_detector({3}, threshold=0.6)
        result = fourier_attack(toy_spectrum(), rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                                handle, AttackConfig(deltas=DELTAS))
        assert result.success
        assert result.plan.n_frequencies == 1
        assert list(result.plan.bins_modified.indices) == [3]
        assert result.plan.chosen_delta == 0.5
        assert result.after.label == "neg"
        # original + one phase-1 probe + one phase-2 probe
        assert result.query_count == 3

    def test_deletion_chosen_when_nothing_weaker_flips(self):
        handle = bin_detector({3}, threshold=0.2)
        result = fourier_attack(toy_spectrum(), rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                                handle, AttackConfig(deltas=DELTAS))
        assert result.plan.chosen_delta == 0.0
        assert result.query_count == 1 + 1 + len(DELTAS)

    def test_amplification_flip_prefers_smaller_gain(self):
        handle = magnitude_below(3, limit=1.5)
        result = fourier_attack(toy_spectrum(), rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                                handle, AttackConfig(deltas=(0.5, 2.0, 4.0, 8.0)))
        assert result.plan.chosen_delta == 2.0
        assert result.plan.n_frequencies == 1

    def test_ranked_prefix_grows_until_flip(self):
        """Needs both bins 1 and 5 gone; ranking is 3, 1, 5, so the flip
        lands at the top-3 prefix."""
        def classify(signal):
            mags = np.abs(np.fft.rfft(signal.samples))
            ok = mags[1] > 0.5 or mags[5] > 0.5
            return Classification(label="pos" if ok else "neg", score=1.0)

        result = fourier_attack(toy_spectrum(), rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                                FunctionClassifier(classify), AttackConfig(deltas=DELTAS))
        assert result.plan.n_frequencies == 3
        assert list(result.plan.bins_modified.indices) == [1, 3, 5]

    def test_untouched_bins_are_bit_identical(self):
        spectrum = toy_spectrum()
        handle = bin_detector({3}, threshold=0.6)
        result = fourier_attack(spectrum, rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                                handle, AttackConfig(deltas=DELTAS))
        touched = result.plan.bins_modified.indices
        untouched = np.setdiff1d(np.arange(8), touched)
        assert np.array_equal(result.altered_spectrum.bins[untouched],
                              spectrum.bins[untouched])
        assert np.array_equal(result.altered_spectrum.bins[touched],
                              spectrum.bins[touched] * result.plan.chosen_delta)

    def test_norms_match_recomputation(self):
        spectrum = toy_spectrum()
        handle = bin_detector({3}, threshold=0.6)
        result = fourier_attack(spectrum, rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                                handle, AttackConfig(deltas=DELTAS))
        original = np.fft.irfft(spectrum.bins, n=spectrum.original_length)
        diff = result.altered.samples - original
        assert result.linf_delta == float(np.max(np.abs(diff)))
        assert result.l2_delta == float(np.linalg.norm(diff))

    def test_budget_exhaustion_returns_sentinel(self):
        """Flip needs all three sufficient bins deleted, but only two probes
        fit in the budget."""
        def classify(signal):
            mags = np.abs(np.fft.rfft(signal.samples))
            ok = any(mags[b] > 0.5 for b in (1, 3, 5))
            return Classification(label="pos" if ok else "neg", score=1.0)

        result = fourier_attack(toy_spectrum(), rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                                FunctionClassifier(classify),
                                AttackConfig(deltas=DELTAS, budget=2))
        assert not result.success
        assert result.plan.chosen_delta is None
        assert result.plan.n_frequencies is None
        assert len(result.plan.bins_modified) == 0
        assert result.query_count == 3
        assert result.linf_delta == 0.0

    def test_deterministic(self):
        spectrum = toy_spectrum()
        results = [
            fourier_attack(spectrum, rmap(TOY_SCORES), BinSet.of([1, 3, 5]),
                           bin_detector({3}, threshold=0.6), AttackConfig(deltas=DELTAS))
            for _ in range(2)
        ]
        assert np.array_equal(results[0].altered.samples, results[1].altered.samples)
        assert results[0].plan == results[1].plan

    def test_empty_sufficient_rejected(self, builtin):
        with pytest.raises(ValueError, match="nonempty"):
            fourier_attack(toy_spectrum(), rmap(TOY_SCORES), BinSet.of([]), builtin)


def successful_plan(bins, delta=0.0, budget=2000):
    return MutationPlan(deltas=(0.0, 0.5), budget=budget, chosen_delta=delta,
                        bins_modified=bins, n_frequencies=len(bins))


def as_attack_result(signal, plan):
    return AttackResult(
        altered=signal, altered_spectrum=None,
        before=Classification(label="pos", score=1.0),
        after=Classification(label="neg", score=1.0),
        plan=plan, query_count=0, linf_delta=0.0, l2_delta=0.0,
    )


class TestStftAttack:
    def _burst_signal(self, n=2048):
        """All energy inside one 256-sample window in the middle."""
        x = np.zeros(n)
        t = np.arange(256)
        start = (n - 256) // 2
        x[start:start + 256] = 0.5 * np.sin(2 * np.pi * 0.1 * t) * np.hanning(256)
        return TimeSignal(x, 8000)

    def test_energetic_frames_flip_first(self):
        """Deleting every mapped bin frame-by-frame: the burst lives in a few
        frames, so the flip must come long before the frame count runs out."""
        signal = self._burst_signal()
        energy = float(np.sum(signal.samples**2))
        handle = energy_gate(0.5 * energy)
        source = as_attack_result(signal, successful_plan(BinSet.full(1025)))
        result = stft_attack(signal, source, handle, frame_schedule=(256, 512, 1024))
        assert result.success
        assert result.frame_size_used == 256
        n_frames = stft(signal, 256).n_frames
        assert 1 <= result.frames_modified <= 5 < n_frames
        assert result.query_count == 1 + result.frames_modified
        assert float(np.sum(result.altered.samples**2)) < 0.5 * energy
        assert result.plan.chosen_delta == 0.0

    def test_oversized_frames_are_skipped(self):
        signal = self._burst_signal(n=512)
        handle = energy_gate(0.5 * float(np.sum(signal.samples**2)))
        source = as_attack_result(signal, successful_plan(BinSet.full(257)))
        result = stft_attack(signal, source, handle, frame_schedule=(1024, 2048))
        assert not result.success
        assert result.frame_size_used is None
        assert result.frames_modified is None
        assert result.query_count == 1  # only the original classification

    def test_budget_limits_frames_tried(self):
        rng = np.random.default_rng(0)
        signal = TimeSignal(rng.normal(size=2048) * 0.1, 8000)
        energy = float(np.sum(signal.samples**2))
        handle = energy_gate(0.05 * energy)  # one frame can never remove 95%
        source = as_attack_result(signal, successful_plan(BinSet.of([3]), budget=1))
        result = stft_attack(signal, source, handle, frame_schedule=(256, 512, 1024))
        assert not result.success
        assert result.query_count == 1 + 3  # one frame per size, then give up

    def test_failed_source_requires_opt_in(self, builtin):
        signal = self._burst_signal()
        sentinel_plan = MutationPlan(deltas=(0.0,), budget=10, chosen_delta=None,
                                     bins_modified=BinSet.of([]), n_frequencies=None)
        failed = AttackResult(altered=signal, altered_spectrum=None,
                              before=Classification(label="pos", score=1.0),
                              after=Classification(label="pos", score=1.0),
                              plan=sentinel_plan, query_count=0,
                              linf_delta=0.0, l2_delta=0.0)
        with pytest.raises(ValueError, match="allow_failed"):
            stft_attack(signal, failed, builtin)
        result = stft_attack(signal, failed, builtin, allow_failed=True)
        assert not result.success
        assert result.frames_modified is None

    def test_deterministic(self):
        signal = self._burst_signal()
        handle = energy_gate(0.5 * float(np.sum(signal.samples**2)))
        source = as_attack_result(signal, successful_plan(BinSet.full(1025)))
        first = stft_attack(signal, source, handle.clone(), frame_schedule=(256,))
        second = stft_attack(signal, source, handle.clone(), frame_schedule=(256,))
        assert first.frames_modified == second.frames_modified
        assert np.array_equal(first.altered.samples, second.altered.samples)


class TestPipelineSoundness:
    def test_fixture_attack_is_replayable(self, fixture_signals):
        """Whatever the outcome, the reported plan must replay exactly."""
        from freqcause.responsibility import PartitionConfig, accumulate
        from freqcause.subsets import ExtractionConfig, extract

        signal = fixture_signals["classA_0"]
        spectrum = forward(signal)
        handle = BuiltinClassifier()
        scores = accumulate(handle, spectrum,
                            PartitionConfig(max_depth=2, iterations=2, epsilon=1e-9, seed=0))
        report = extract(spectrum, scores, handle, ExtractionConfig(chain_length=3, step=64))
        assert report.sufficient is not None
        result = fourier_attack(spectrum, scores, report.sufficient, handle)

        if result.success:
            touched = result.plan.bins_modified.indices
            untouched = np.setdiff1d(np.arange(len(spectrum.bins)), touched)
            assert np.array_equal(result.altered_spectrum.bins[untouched],
                                  spectrum.bins[untouched])
            fresh = BuiltinClassifier()
            replay = fresh.classify(result.altered)
            assert replay.label == result.after.label != "classA"
            assert result.plan.n_frequencies <= len(report.sufficient)
        else:
            assert result.plan.chosen_delta is None
            # The sentinel carries the spectrum round-trip of the input.
            round_trip = np.fft.irfft(spectrum.bins, n=len(signal.samples))
            assert np.array_equal(result.altered.samples, round_trip)


class TestValidation:
    def test_attack_config_bounds(self):
        with pytest.raises(ValueError):
            AttackConfig(deltas=())
        with pytest.raises(ValueError):
            AttackConfig(budget=0)
        with pytest.raises(ValueError):
            AttackConfig(deltas=(0.5, -1.0))

    def test_plan_consistency_enforced(self):
        with pytest.raises(ValueError, match="not in"):
            MutationPlan(deltas=(0.5,), budget=10, chosen_delta=0.25,
                         bins_modified=BinSet.of([1]), n_frequencies=1)
        with pytest.raises(ValueError, match="exceed budget"):
            MutationPlan(deltas=(0.5,), budget=1, chosen_delta=0.5,
                         bins_modified=BinSet.of([1, 2]), n_frequencies=2)
        with pytest.raises(ValueError, match="disagrees"):
            MutationPlan(deltas=(0.5,), budget=10, chosen_delta=0.5,
                         bins_modified=BinSet.of([1, 2]), n_frequencies=1)

    def test_result_rejects_claimed_flip_without_one(self):
        signal = TimeSignal(np.zeros(16), 8000)
        same = Classification(label="pos", score=1.0)
        with pytest.raises(ValueError, match="did not flip"):
            AttackResult(altered=signal, altered_spectrum=None, before=same,
                         after=same, plan=successful_plan(BinSet.of([1])),
                         query_count=1, linf_delta=0.0, l2_delta=0.0)
