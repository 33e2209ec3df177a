"""Black-box classifier handles: builtin spectral reference model and bridge client.

Every handle exposes ``classify(TimeSignal) -> Classification`` and counts
queries so callers can account for search budgets.  The builtin model is a
fixed-weight softmax over hand-coded spectral features; it exists so the whole
analysis suite runs standalone and so tiny instances stay tractable for
brute-force oracles.
"""

from __future__ import annotations

import base64
import functools
import json
import select
import shlex
import socket
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .signals import TimeSignal

PROTOCOL_VERSION = 1

_WEIGHTS_PATH = Path(__file__).parent / "data" / "builtin_weights.json"


class QueryBudgetExceeded(RuntimeError):
    """The handle's query budget is exhausted."""


class BridgeProtocolError(RuntimeError):
    """Malformed or invalid response from a bridge endpoint."""


def argmax_label(scores: dict[str, float]) -> str:
    """Label with the highest score; ties broken lexicographically."""
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best)


@dataclass(frozen=True)
class Classification:
    label: str
    score: float
    full_scores: dict[str, float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.full_scores is not None and argmax_label(self.full_scores) != self.label:
            raise ValueError("label is not the argmax of full_scores")


class ClassifierHandle:
    """Base handle: monotone query counter plus optional hard budget.

    Single-consumer; parallel analyses should use one handle per worker
    (``clone()`` where supported).
    """

    kind = "abstract"

    def __init__(self, budget: int | None = None):
        self.query_count = 0
        self.budget = budget

    def classify(self, signal: TimeSignal) -> Classification:
        if self.budget is not None and self.query_count >= self.budget:
            raise QueryBudgetExceeded(
                f"query budget of {self.budget} exhausted"
            )
        self.query_count += 1
        return self._classify(signal)

    def _classify(self, signal: TimeSignal) -> Classification:
        raise NotImplementedError

    def clone(self) -> "ClassifierHandle":
        raise NotImplementedError(f"{self.kind} handles cannot be cloned")


class FunctionClassifier(ClassifierHandle):
    """Wrap an arbitrary deterministic function as a classifier handle."""

    kind = "function"

    def __init__(self, fn, budget: int | None = None):
        super().__init__(budget)
        self._fn = fn

    def _classify(self, signal: TimeSignal) -> Classification:
        return self._fn(signal)

    def clone(self) -> "FunctionClassifier":
        return FunctionClassifier(self._fn, self.budget)


# --- builtin reference classifier ------------------------------------------

N_BANDS = 16
ROLLOFF_FRACTION = 0.85
LOG_FLOOR = 1e-6


def build_default_weights() -> dict:
    """Construct the shipped weight file contents.

    Four classes, each keyed to one geometric frequency band.  Band-feature
    rows have equal sums, which makes the label exactly invariant to overall
    amplitude scaling (a uniform feature shift moves every logit equally).
    """
    labels = ["classA", "classB", "classC", "classD"]
    owned = [3, 6, 9, 12]
    edges = np.geomspace(50.0, 3800.0, N_BANDS + 1)
    gain = 1.0
    weights = np.zeros((len(labels), N_BANDS + 2))
    for c, o in enumerate(owned):
        for o2 in owned:
            weights[c, o2] = gain * ((1.0 if o2 == o else 0.0) - 1.0 / len(owned))
        # Mild position-aligned nudges on the scale-invariant shape features.
        weights[c, N_BANDS] = 0.4 * (c - 1.5) / 1.5       # spectral centroid
        weights[c, N_BANDS + 1] = 0.2 * (c - 1.5) / 1.5   # rolloff
    return {
        "weights_version": 1,
        "labels": labels,
        "owned_band": dict(zip(labels, owned)),
        "band_edges_hz": edges.tolist(),
        "log_floor": LOG_FLOOR,
        "rolloff_fraction": ROLLOFF_FRACTION,
        "weights": weights.tolist(),
        "bias": [0.0] * len(labels),
    }


def load_weights(path=None) -> dict:
    path = Path(path) if path is not None else _WEIGHTS_PATH
    try:
        spec = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot load classifier weights from {path}: {exc}") from exc
    required = {"weights_version", "labels", "band_edges_hz", "weights", "bias"}
    missing = required - spec.keys()
    if missing:
        raise ValueError(f"classifier weights file missing fields: {sorted(missing)}")
    return spec


@functools.lru_cache(maxsize=32)
def _band_binning(n: int, sample_rate: int, edges: tuple[float, ...]):
    """Per-bin band index for an n-sample signal; -1 marks out-of-band bins."""
    freqs = np.arange(n // 2 + 1) * (sample_rate / n)
    band = np.searchsorted(np.asarray(edges), freqs, side="right") - 1
    band[(freqs < edges[0]) | (freqs >= edges[-1])] = -1
    return freqs, band


def spectral_features(samples: np.ndarray, sample_rate: int, spec: dict) -> np.ndarray:
    """Feature vector: log band-energy fractions + centroid + rolloff.

    Band fractions are ratios of one-sided power, so uniform amplitude
    scaling leaves the vector unchanged; silence falls back to a uniform
    band distribution.
    """
    edges = tuple(spec["band_edges_hz"])
    n_bands = len(edges) - 1
    mag2 = np.abs(np.fft.rfft(samples)) ** 2
    freqs, band = _band_binning(len(samples), sample_rate, edges)
    in_band = band >= 0
    energies = np.bincount(band[in_band], weights=mag2[in_band], minlength=n_bands)
    total_band = energies.sum()
    if total_band > 0.0:
        fractions = energies / total_band
    else:
        fractions = np.full(n_bands, 1.0 / n_bands)
    log_feats = np.log(fractions + spec.get("log_floor", LOG_FLOOR))

    total = mag2.sum()
    nyquist = sample_rate / 2.0
    if total > 0.0:
        centroid = float(np.dot(freqs, mag2) / total) / nyquist
        cum = np.cumsum(mag2)
        k = int(np.searchsorted(cum, spec.get("rolloff_fraction", ROLLOFF_FRACTION) * total))
        rolloff = freqs[min(k, len(freqs) - 1)] / nyquist
    else:
        centroid = 0.0
        rolloff = 0.0
    return np.concatenate([log_feats, [centroid, rolloff]])


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max())
    return z / z.sum()


class BuiltinClassifier(ClassifierHandle):
    """Deterministic fixed-weight softmax over spectral features."""

    kind = "builtin"

    def __init__(self, budget: int | None = None, weights_path=None):
        super().__init__(budget)
        self.spec = load_weights(weights_path)
        self._weights_path = weights_path
        self._w = np.asarray(self.spec["weights"], dtype=np.float64)
        self._b = np.asarray(self.spec["bias"], dtype=np.float64)
        self.labels = list(self.spec["labels"])

    def _classify(self, signal: TimeSignal) -> Classification:
        feats = spectral_features(signal.samples, signal.sample_rate, self.spec)
        probs = _softmax(self._w @ feats + self._b)
        full = {lab: float(p) for lab, p in zip(self.labels, probs)}
        label = argmax_label(full)
        return Classification(label=label, score=full[label], full_scores=full)

    def clone(self) -> "BuiltinClassifier":
        return BuiltinClassifier(self.budget, self._weights_path)


def builtin_reference_classifier(budget: int | None = None, weights_path=None) -> BuiltinClassifier:
    return BuiltinClassifier(budget=budget, weights_path=weights_path)


# --- bridge client -----------------------------------------------------------


def encode_samples(samples: np.ndarray) -> str:
    return base64.b64encode(samples.astype("<f4").tobytes()).decode("ascii")


def decode_samples(samples_b64: str) -> np.ndarray:
    raw = base64.b64decode(samples_b64, validate=True)
    if len(raw) % 4:
        raise BridgeProtocolError(f"sample payload of {len(raw)} bytes is not float32-aligned")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


class _StdioTransport:
    def __init__(self, argv: list[str], timeout: float):
        self.timeout = timeout
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def send_line(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise BridgeProtocolError("bridge subprocess has exited")
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv_line(self) -> str:
        ready, _, _ = select.select([self.proc.stdout], [], [], self.timeout)
        if not ready:
            raise BridgeProtocolError(f"bridge timed out after {self.timeout}s")
        line = self.proc.stdout.readline()
        if not line:
            raise BridgeProtocolError("bridge closed its output stream")
        return line

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _TcpTransport:
    def __init__(self, address: str, timeout: float):
        host, _, port = address.rpartition(":")
        self.sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
        self.sock.settimeout(timeout)
        self._rfile = self.sock.makefile("r", encoding="utf-8")

    def send_line(self, line: str) -> None:
        self.sock.sendall((line + "\n").encode("utf-8"))

    def recv_line(self) -> str:
        try:
            line = self._rfile.readline()
        except socket.timeout as exc:
            raise BridgeProtocolError("bridge TCP read timed out") from exc
        if not line:
            raise BridgeProtocolError("bridge closed the connection")
        return line

    def close(self) -> None:
        self._rfile.close()
        self.sock.close()


class BridgeClassifier(ClassifierHandle):
    """Client for an external model served over newline-delimited JSON.

    ``endpoint`` is either ``cmd:<argv>`` (spawn a subprocess, speak over
    stdio) or ``tcp:<host:port>``.  Samples travel as base64 float32 LE; the
    remote side owns any resampling or padding.
    """

    kind = "bridge"

    def __init__(self, endpoint: str, budget: int | None = None, timeout: float = 30.0):
        super().__init__(budget)
        self.endpoint = endpoint
        self._next_id = 0
        if endpoint.startswith("cmd:"):
            self._transport = _StdioTransport(shlex.split(endpoint[4:]), timeout)
        elif endpoint.startswith("tcp:"):
            self._transport = _TcpTransport(endpoint[4:], timeout)
        else:
            raise ValueError(f"endpoint must start with cmd: or tcp:, got {endpoint!r}")
        self.labels = self._handshake()

    def _roundtrip(self, payload: dict) -> dict:
        self._transport.send_line(json.dumps(payload))
        line = self._transport.recv_line()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"bridge sent invalid JSON: {line!r}") from exc
        if not isinstance(reply, dict):
            raise BridgeProtocolError(f"bridge reply is not an object: {reply!r}")
        if "error" in reply:
            raise BridgeProtocolError(f"bridge error: {reply['error']}")
        return reply

    def _handshake(self) -> list[str]:
        reply = self._roundtrip({"op": "hello", "version": PROTOCOL_VERSION})
        if reply.get("version") != PROTOCOL_VERSION:
            raise BridgeProtocolError(
                f"bridge protocol version {reply.get('version')!r}, "
                f"expected {PROTOCOL_VERSION}"
            )
        labels = reply.get("labels")
        if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
            raise BridgeProtocolError("handshake must advertise a label list")
        return labels

    def _classify(self, signal: TimeSignal) -> Classification:
        self._next_id += 1
        req_id = self._next_id
        reply = self._roundtrip(
            {
                "id": req_id,
                "op": "classify",
                "sample_rate": int(signal.sample_rate),
                "samples_b64": encode_samples(signal.samples),
            }
        )
        if reply.get("id") != req_id:
            raise BridgeProtocolError(
                f"response id {reply.get('id')!r} does not match request id {req_id}"
            )
        label = reply.get("label")
        score = reply.get("score")
        if not isinstance(label, str):
            raise BridgeProtocolError(f"label must be a string, got {label!r}")
        if not isinstance(score, (int, float)) or not np.isfinite(score) or not 0.0 <= score <= 1.0:
            raise BridgeProtocolError(f"score must be a finite value in [0, 1], got {score!r}")
        full = reply.get("scores")
        if full is not None:
            if not isinstance(full, dict) or not all(
                isinstance(k, str) and isinstance(v, (int, float)) and np.isfinite(v)
                for k, v in full.items()
            ):
                raise BridgeProtocolError("scores must map labels to finite numbers")
            full = {k: float(v) for k, v in full.items()}
            if argmax_label(full) != label:
                raise BridgeProtocolError("label is not the argmax of the returned scores")
        return Classification(label=label, score=float(score), full_scores=full)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def bridge_classifier(endpoint: str, budget: int | None = None, timeout: float = 30.0) -> BridgeClassifier:
    return BridgeClassifier(endpoint, budget=budget, timeout=timeout)


def make_classifier(model_spec: str, budget: int | None = None) -> ClassifierHandle:
    """Build a handle from a CLI-style spec: ``builtin``, ``cmd:...`` or ``tcp:...``."""
    if model_spec == "builtin":
        return builtin_reference_classifier(budget=budget)
    if model_spec.startswith(("cmd:", "tcp:")):
        return bridge_classifier(model_spec, budget=budget)
    raise ValueError(f"unknown model spec {model_spec!r}")
