"""Classifier backends served over the bridge protocol.

A backend exposes ``labels`` (the full advertised label list) and
``classify(samples, sample_rate) -> (label, score, scores)`` where ``scores``
maps every label to a finite value in [0, 1] and ``label`` is its argmax
(ties broken lexicographically, matching the engine's convention).
Backends own all model-specific preprocessing — the engine always sends
native-rate float32 samples.
"""

import math

import numpy as np
import scipy.signal

GENRES = ("blues", "classical", "country", "disco", "hiphop",
          "jazz", "metal", "pop", "reggae", "rock")


def argmax_label(scores: dict[str, float]) -> str:
    """Label with the highest score; ties broken lexicographically."""
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best)


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    if rate_in == rate_out:
        return samples
    g = math.gcd(rate_in, rate_out)
    return scipy.signal.resample_poly(samples, rate_out // g, rate_in // g)


class ToyBackend:
    """Deterministic ten-genre classifier over coarse spectrum-chunk energies.

    Pure function of the request bytes: the one-sided power spectrum is
    split into ten contiguous chunks, and log energy fractions feed a
    softmax.  Non-finite samples are treated as zero; silence yields a
    uniform score map (argmax then falls back to the lexicographically
    first genre).  Exists to exercise the protocol and the full analysis
    pipeline without external weights.
    """

    def __init__(self):
        self.labels = list(GENRES)

    def classify(self, samples: np.ndarray, sample_rate: int):
        samples = np.nan_to_num(samples, nan=0.0, posinf=0.0, neginf=0.0)
        if samples.size == 0:
            mag2 = np.zeros(1)
        else:
            mag2 = np.abs(np.fft.rfft(samples)) ** 2
        energies = np.array([chunk.sum() for chunk in np.array_split(mag2, len(GENRES))])
        total = energies.sum()
        fractions = energies / total if total > 0.0 else np.full(len(GENRES), 0.1)
        logits = np.log(fractions + 1e-6)
        z = np.exp(logits - logits.max())
        probs = z / z.sum()
        scores = {genre: float(p) for genre, p in zip(GENRES, probs)}
        label = argmax_label(scores)
        return label, scores[label], scores


class TransformersBackend:
    """Any Hugging Face audio-classification checkpoint.

    Input is resampled here to the checkpoint's expected rate; padding or
    truncation beyond that is left to the model's own pipeline.  Inference
    runs in eval mode with fixed seeds, so identical requests yield
    identical responses.
    """

    def __init__(self, model_id: str, device: str | None = None):
        import torch
        from transformers import pipeline

        torch.manual_seed(0)
        self._torch = torch
        self.pipe = pipeline("audio-classification", model=model_id,
                             device=device if device is not None else -1)
        self.rate = int(self.pipe.feature_extractor.sampling_rate)
        self.labels = sorted(self.pipe.model.config.id2label.values())

    def classify(self, samples: np.ndarray, sample_rate: int):
        audio = resample(samples, sample_rate, self.rate).astype(np.float32)
        with self._torch.inference_mode():
            out = self.pipe({"raw": audio, "sampling_rate": self.rate}, top_k=None)
        scores = {d["label"]: min(max(float(d["score"]), 0.0), 1.0) for d in out}
        label = argmax_label(scores)
        return label, scores[label], scores


def make_backend(spec: str, device: str | None = None):
    """Build a backend from a CLI-style spec: ``toy`` or ``hf:<checkpoint>``."""
    if spec == "toy":
        return ToyBackend()
    if spec.startswith("hf:"):
        return TransformersBackend(spec[3:], device=device)
    raise ValueError(f"unknown model spec {spec!r} (expected 'toy' or 'hf:<checkpoint>')")
