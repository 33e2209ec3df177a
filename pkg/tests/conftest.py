from pathlib import Path

import numpy as np
import pytest

from freqcause.classifier import BuiltinClassifier, Classification, FunctionClassifier
from freqcause.signals import Spectrum, TimeSignal, load_wav

FIXTURE_CORPUS = Path(__file__).parent / "fixtures" / "corpus"


@pytest.fixture(scope="session")
def fixture_corpus() -> Path:
    return FIXTURE_CORPUS


@pytest.fixture(scope="session")
def fixture_signals() -> dict[str, TimeSignal]:
    return {p.stem: load_wav(p) for p in sorted(FIXTURE_CORPUS.glob("*.wav"))}


@pytest.fixture()
def builtin() -> BuiltinClassifier:
    return BuiltinClassifier()


def tone_signal(freq_hz: float, n: int = 24000, sample_rate: int = 8000,
                amplitude: float = 0.5) -> TimeSignal:
    """A pure tone snapped to the nearest exact bin centre (no leakage)."""
    k = round(freq_hz * n / sample_rate)
    t = np.arange(n) / sample_rate
    return TimeSignal(amplitude * np.sin(2.0 * np.pi * (k * sample_rate / n) * t),
                      sample_rate)


def toy_spectrum(n_bins: int = 8) -> Spectrum:
    """Unit-magnitude bins over a tiny signal, exactly invertible."""
    return Spectrum(bins=np.ones(n_bins, dtype=np.complex128),
                    original_length=2 * (n_bins - 1), sample_rate=2 * (n_bins - 1))


def bin_detector(required: set[int], threshold: float = 0.5) -> FunctionClassifier:
    """Classifier that passes iff every required bin survives reconstruction."""

    def classify(signal):
        mags = np.abs(np.fft.rfft(signal.samples))
        ok = all(mags[b] > threshold for b in required)
        return Classification(label="pos" if ok else "neg", score=1.0)

    return FunctionClassifier(classify)


def size_keyed(result_fn) -> FunctionClassifier:
    """Classifier keyed on how many unit-magnitude bins survive.

    Only meaningful on (subsets of) toy_spectrum reconstructions, where the
    one-sided power equals the number of surviving bins.
    """

    def classify(signal):
        count = int(round(np.sum(np.abs(np.fft.rfft(signal.samples)) ** 2)))
        return result_fn(count)

    return FunctionClassifier(classify)
