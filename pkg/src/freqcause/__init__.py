"""Black-box causal analysis of audio classifiers in the frequency domain.

Decomposes a signal's Fourier spectrum into sufficient, necessary, and
complete bin subsets for a classifier's decision, and derives minimal
frequency mutations (whole-signal and STFT-localized) that flip it.
"""

from .attacks import (AttackConfig, AttackResult, MutationPlan, fourier_attack,
                      stft_attack)
from .classifier import (BridgeClassifier, BuiltinClassifier, Classification,
                         ClassifierHandle, FunctionClassifier, QueryBudgetExceeded,
                         bridge_classifier, builtin_reference_classifier,
                         make_classifier)
from .corpus import gen_corpus
from .report import CorpusSummary, RunConfig, analyze, summarize
from .responsibility import (PartitionConfig, ResponsibilityMap, accumulate,
                             calculate_responsibility, earth_movers_distance)
from .signals import (BinSet, Spectrogram, Spectrum, TimeSignal, forward,
                      inverse, istft, load_wav, map_bins, mask, save_wav, stft)
from .subsets import (ExtractionConfig, SubsetReport, compose, extract, invert)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackResult", "BinSet", "BridgeClassifier",
    "BuiltinClassifier", "Classification", "ClassifierHandle", "CorpusSummary",
    "ExtractionConfig", "FunctionClassifier", "MutationPlan", "PartitionConfig",
    "QueryBudgetExceeded", "ResponsibilityMap", "RunConfig", "Spectrogram",
    "Spectrum", "SubsetReport", "TimeSignal", "accumulate", "analyze",
    "bridge_classifier", "builtin_reference_classifier",
    "calculate_responsibility", "compose", "earth_movers_distance", "extract",
    "forward", "fourier_attack", "gen_corpus", "inverse", "invert", "istft",
    "load_wav", "make_classifier", "map_bins", "mask", "save_wav", "stft",
    "stft_attack", "summarize",
]
