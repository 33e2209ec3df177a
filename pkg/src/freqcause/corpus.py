"""Synthetic labeled corpus generation for the builtin classifier.

Each class owns one frequency band.  A clip is a handful of tones at exact
bin centres inside the owned band plus a broadband noise floor, mixed in the
frequency domain so the owned band's share of one-sided power hits a sampled
target.  Generation is deterministic per (seed, class, clip index) and
verifies that every clip scores at least MIN_CLIP_SCORE on its own class
after float32 quantization, shrinking the noise floor when it does not.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np

from .classifier import _WEIGHTS_PATH, BuiltinClassifier
from .signals import TimeSignal, save_wav

DEFAULT_SEED = 7
SAMPLE_RATE = 8000
DURATION_S = 3.0
CLIPS_PER_CLASS = 25
MIN_CLIP_SCORE = 0.9
MIN_ACCURACY = 0.95
MANIFEST_NAME = "manifest.json"


def _band_bins(n: int, sample_rate: int, f_lo: float, f_hi: float) -> np.ndarray:
    """Indices of rfft bins whose centre frequency lies in [f_lo, f_hi)."""
    freqs = np.arange(n // 2 + 1) * (sample_rate / n)
    return np.nonzero((freqs >= f_lo) & (freqs < f_hi))[0]


def _synthesize_clip(rng: np.random.Generator, band_lo: float, band_hi: float,
                     n: int, sample_rate: int) -> np.ndarray:
    """One clip: owned-band tones over a pink-ish noise floor, peak ≤ 0.9."""
    own_bins = _band_bins(n, sample_rate, band_lo, band_hi)
    n_tones = int(rng.integers(1, 5))
    tone_bins = rng.choice(own_bins, size=min(n_tones, len(own_bins)), replace=False)
    amps = rng.uniform(0.3, 1.0, size=len(tone_bins))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(tone_bins))

    n_bins = n // 2 + 1
    spectrum = np.zeros(n_bins, dtype=np.complex128)
    spectrum[tone_bins] = amps * np.exp(1j * phases) * (n / 2.0)

    # 1/sqrt(f) envelope keeps low bands from swamping the high-band classes.
    noise = rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
    freqs = np.arange(n_bins) * (sample_rate / n)
    noise *= 1.0 / np.sqrt(np.maximum(freqs, 20.0))
    noise[0] = noise[0].real
    if n % 2 == 0:
        noise[-1] = noise[-1].real

    own_power = np.sum(np.abs(spectrum[own_bins]) ** 2)
    noise_power = np.sum(np.abs(noise) ** 2)
    target_own_fraction = rng.uniform(0.80, 0.92)
    target_peak = rng.uniform(0.5, 0.9)
    classifier = BuiltinClassifier()
    label_by_band = {v: k for k, v in classifier.spec["owned_band"].items()}

    # Shrink the floor until the quantized clip scores high enough on its class.
    scale = np.sqrt(own_power * (1.0 / target_own_fraction - 1.0) / noise_power)
    for _ in range(8):
        mixed = spectrum + scale * noise
        mixed[tone_bins] = spectrum[tone_bins]
        x = np.fft.irfft(mixed, n=n)
        x *= target_peak / np.max(np.abs(x))
        x32 = x.astype(np.float32).astype(np.float64)
        result = classifier.classify(TimeSignal(x32, sample_rate))
        edges = classifier.spec["band_edges_hz"]
        band_idx = int(np.searchsorted(edges, (band_lo + band_hi) / 2.0) - 1)
        if result.label == label_by_band[band_idx] and result.score >= MIN_CLIP_SCORE:
            return x
        scale *= 0.6
    raise RuntimeError(
        f"could not reach score {MIN_CLIP_SCORE} for band [{band_lo:.0f}, {band_hi:.0f}) Hz"
    )


def gen_corpus(seed: int = DEFAULT_SEED, out_dir: str | Path = "corpus",
               clips_per_class: int = CLIPS_PER_CLASS,
               sample_rate: int = SAMPLE_RATE,
               duration_s: float = DURATION_S) -> dict:
    """Write a labeled wav corpus plus the classifier weights it targets.

    Returns the manifest dict.  Clip (label, i) depends only on
    (seed, label index, i), so smaller corpora are prefixes of larger ones.
    Raises if the builtin classifier scores below MIN_ACCURACY on the result.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classifier = BuiltinClassifier()
    edges = classifier.spec["band_edges_hz"]
    owned = classifier.spec["owned_band"]
    labels = classifier.labels
    n = int(round(duration_s * sample_rate))

    clips: dict[str, str] = {}
    correct = 0
    for c, label in enumerate(labels):
        band = owned[label]
        band_lo, band_hi = edges[band], edges[band + 1]
        for i in range(clips_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, c, i]))
            x = _synthesize_clip(rng, band_lo, band_hi, n, sample_rate)
            name = f"{label}_{i}.wav"
            save_wav(TimeSignal(x, sample_rate), out_dir / name, encoding="float32")
            clips[name] = label
            loaded = TimeSignal(x.astype(np.float32).astype(np.float64), sample_rate)
            if classifier.classify(loaded).label == label:
                correct += 1

    accuracy = correct / len(clips)
    if accuracy < MIN_ACCURACY:
        raise RuntimeError(f"builtin accuracy {accuracy:.3f} below {MIN_ACCURACY}")

    shutil.copy(_WEIGHTS_PATH, out_dir / "builtin_weights.json")
    manifest = {
        "seed": seed,
        "sample_rate": sample_rate,
        "duration_s": duration_s,
        "clips_per_class": clips_per_class,
        "labels": labels,
        "clips": clips,
        "accuracy": accuracy,
        "weights_version": classifier.spec["weights_version"],
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(corpus_dir: str | Path) -> dict:
    path = Path(corpus_dir) / MANIFEST_NAME
    return json.loads(path.read_text())
