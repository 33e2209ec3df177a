"""Lossless audio I/O and invertible frequency-domain representations.

A mono time signal maps to a one-sided complex spectrum via a plain
(unnormalized) real FFT; the inverse transform carries the 1/n factor, so
``inverse(forward(x)) == x`` up to float rounding.  All bin edits elsewhere in
the package happen on the one-sided representation, which keeps every
reconstruction real-valued by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.signal
from scipy.io import wavfile

log = logging.getLogger(__name__)

STFT_WINDOW = "hann"
DEFAULT_FRAME_SCHEDULE = (256, 512, 1024)


class AudioIOError(ValueError):
    """Unreadable, unsupported, or empty audio input."""


@dataclass(frozen=True)
class TimeSignal:
    """Mono audio: float64 samples nominally in [-1, 1] plus a sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("signal must be a nonempty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def channel_count(self) -> int:
        return 1

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class Spectrum:
    """One-sided complex coefficients of a real signal.

    ``bins[k]`` corresponds to ``k * sample_rate / original_length`` Hz;
    the array has length ``original_length // 2 + 1``.
    """

    bins: np.ndarray
    original_length: int
    sample_rate: int

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        if bins.ndim != 1:
            raise ValueError("bins must be 1-D")
        if bins.size != self.original_length // 2 + 1:
            raise ValueError(
                f"expected {self.original_length // 2 + 1} one-sided bins for "
                f"{self.original_length} samples, got {bins.size}"
            )
        object.__setattr__(self, "bins", bins)

    def __len__(self) -> int:
        return self.bins.size

    def bin_frequency(self, k) -> np.ndarray:
        """Center frequency in Hz of bin index ``k`` (scalar or array)."""
        return np.asarray(k) * self.sample_rate / self.original_length

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.bins.size) * (self.sample_rate / self.original_length)


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT frames, shape (frequency_bin, frame)."""

    frames: np.ndarray
    frame_size: int
    hop: int
    window: str
    sample_rate: int
    original_length: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2 or frames.shape[0] != self.frame_size // 2 + 1:
            raise ValueError("frames must have shape (frame_size // 2 + 1, n_frames)")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[0]

    def bin_frequency(self, k) -> np.ndarray:
        return np.asarray(k) * self.sample_rate / self.frame_size


@dataclass(frozen=True)
class BinSet:
    """Strictly increasing bin indices into a Spectrum."""

    indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("indices must be strictly increasing and nonnegative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int]) -> "BinSet":
        """Build from any iterable, deduplicating and sorting."""
        return cls(np.unique(np.fromiter(indices, dtype=np.int64)))

    @classmethod
    def full(cls, n_bins: int) -> "BinSet":
        return cls(np.arange(n_bins, dtype=np.int64))

    def __len__(self) -> int:
        return self.indices.size

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, k: int) -> bool:
        i = np.searchsorted(self.indices, k)
        return i < self.indices.size and self.indices[i] == k

    def __eq__(self, other) -> bool:
        return isinstance(other, BinSet) and np.array_equal(self.indices, other.indices)

    def union(self, other: "BinSet") -> "BinSet":
        return BinSet(np.union1d(self.indices, other.indices))

    def issubset(self, other: "BinSet") -> bool:
        return bool(np.all(np.isin(self.indices, other.indices)))

    def complement(self, n_bins: int) -> "BinSet":
        keep = np.ones(n_bins, dtype=bool)
        keep[self.indices] = False
        return BinSet(np.nonzero(keep)[0].astype(np.int64))


def _normalize_pcm(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy reads 24-bit PCM into the top bytes of int32, so one scale fits both.
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioIOError(f"unsupported wav sample format: {data.dtype}")


def load_wav(path) -> TimeSignal:
    """Read a PCM or IEEE-float wav file, downmixing to mono.

    Integer encodings are scaled so the most negative code maps to -1.0
    exactly; multichannel input is averaged across channels.
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioIOError(f"cannot read {path}: {exc}") from exc
    if data.size == 0:
        raise AudioIOError(f"{path} contains no audio samples")
    samples = _normalize_pcm(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return TimeSignal(samples=samples, sample_rate=int(rate))


def save_wav(signal: TimeSignal, path, encoding: str = "float32") -> None:
    """Write ``signal`` as pcm16 or float32 wav.

    Samples outside [-1, 1] are hard-clipped (count logged).  float32 output
    reloads bit-exactly; pcm16 reloads within 1/32768 per sample.
    """
    x = signal.samples
    n_clipped = int(np.count_nonzero((x < -1.0) | (x > 1.0)))
    if n_clipped:
        log.warning("save_wav: clipping %d samples outside [-1, 1]", n_clipped)
        x = np.clip(x, -1.0, 1.0)
    if encoding == "float32":
        data = x.astype(np.float32)
    elif encoding == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown encoding {encoding!r}, expected pcm16 or float32")
    wavfile.write(str(path), signal.sample_rate, data)


def forward(signal: TimeSignal) -> Spectrum:
    """Unnormalized one-sided FFT of a signal."""
    return Spectrum(
        bins=np.fft.rfft(signal.samples),
        original_length=len(signal),
        sample_rate=signal.sample_rate,
    )


def inverse(spectrum: Spectrum) -> TimeSignal:
    """Real inverse transform (carries the 1/n factor)."""
    samples = np.fft.irfft(spectrum.bins, n=spectrum.original_length)
    return TimeSignal(samples=samples, sample_rate=spectrum.sample_rate)


def mask(spectrum: Spectrum, keep: BinSet) -> Spectrum:
    """Zero every bin not in ``keep``; kept bins stay bit-identical."""
    if len(keep) and keep.indices[-1] >= len(spectrum):
        raise IndexError(
            f"bin index {keep.indices[-1]} out of range for {len(spectrum)} bins"
        )
    bins = np.zeros_like(spectrum.bins)
    bins[keep.indices] = spectrum.bins[keep.indices]
    return Spectrum(
        bins=bins,
        original_length=spectrum.original_length,
        sample_rate=spectrum.sample_rate,
    )


def parseval_gap(signal: TimeSignal, spectrum: Spectrum) -> float:
    """Relative mismatch between time-domain and one-sided spectral energy.

    Pins the normalization convention: with an unnormalized forward
    transform, sum(x^2) == (|X_0|^2 + 2*sum_mid + [|X_nyq|^2]) / n.
    """
    n = spectrum.original_length
    mag2 = np.abs(spectrum.bins) ** 2
    weights = np.full(len(spectrum), 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    e_freq = float(np.dot(weights, mag2)) / n
    e_time = float(np.dot(signal.samples, signal.samples))
    scale = max(e_time, e_freq, 1e-300)
    return abs(e_time - e_freq) / scale


def stft(signal: TimeSignal, frame_size: int, hop: int | None = None) -> Spectrogram:
    """Hann-windowed STFT with 50% overlap by default (COLA-safe)."""
    if frame_size & (frame_size - 1) or frame_size <= 0:
        raise ValueError(f"frame_size must be a power of two, got {frame_size}")
    if frame_size > len(signal):
        raise ValueError(
            f"frame_size {frame_size} exceeds signal length {len(signal)}"
        )
    if hop is None:
        hop = frame_size // 2
    _, _, frames = scipy.signal.stft(
        signal.samples,
        nperseg=frame_size,
        noverlap=frame_size - hop,
        window=STFT_WINDOW,
        boundary="zeros",
        padded=True,
    )
    return Spectrogram(
        frames=frames,
        frame_size=frame_size,
        hop=hop,
        window=STFT_WINDOW,
        sample_rate=signal.sample_rate,
        original_length=len(signal),
    )


def istft(spectrogram: Spectrogram) -> TimeSignal:
    """Overlap-add inversion, truncated/padded to the original length."""
    _, samples = scipy.signal.istft(
        spectrogram.frames,
        nperseg=spectrogram.frame_size,
        noverlap=spectrogram.frame_size - spectrogram.hop,
        window=spectrogram.window,
        boundary=True,
        input_onesided=True,
    )
    n = spectrogram.original_length
    if samples.size >= n:
        samples = samples[:n]
    else:
        samples = np.pad(samples, (0, n - samples.size))
    # An all-zero spectrogram must invert to exact silence, which TimeSignal
    # accepts; no renormalization happens here.
    return TimeSignal(samples=samples, sample_rate=spectrogram.sample_rate)


def map_bins(spectrum_bins: BinSet, spectrogram: Spectrogram) -> BinSet:
    """Map full-spectrum bins to their nearest STFT bins by center frequency.

    Many-to-one: adjacent full-resolution bins often collapse onto one
    spectrogram bin, so the result is deduplicated.
    """
    if len(spectrum_bins) == 0:
        return BinSet()
    # Full-spectrum bin k sits at k*sr/n Hz; STFT bin j at j*sr/frame_size Hz.
    ratio = spectrogram.frame_size / spectrogram.original_length
    mapped = np.rint(spectrum_bins.indices * ratio).astype(np.int64)
    mapped = np.clip(mapped, 0, spectrogram.n_bins - 1)
    return BinSet(np.unique(mapped))
