"""Line-oriented JSON protocol server.

One request per line, one response line per request:

    handshake: {"op": "hello", "version": 1}
               -> {"version": 1, "labels": [...]}
    classify:  {"id": <u64>, "op": "classify", "sample_rate": <u32>,
                "samples_b64": <base64 float32 LE>}
               -> {"id": <u64>, "label": str, "score": f64, "scores": {...}}

A malformed request yields {"id": <echoed id or null>, "error": "..."} and
never terminates the session.  One request is in flight at a time.
"""

import base64
import binascii
import json
import socket
import sys

import numpy as np

PROTOCOL_VERSION = 1


class RequestError(ValueError):
    """A request the server understands well enough to reject politely."""


def _request_id(msg: dict):
    rid = msg.get("id")
    if isinstance(rid, bool) or not isinstance(rid, int) or rid < 0:
        return None
    return rid


class BridgeServer:
    """Protocol state machine: maps one request line to one response line."""

    def __init__(self, backend):
        self.backend = backend

    def handle_line(self, line: str) -> str:
        req_id = None
        try:
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                raise RequestError("request is not valid JSON")
            if not isinstance(msg, dict):
                raise RequestError("request must be a JSON object")
            req_id = _request_id(msg)
            op = msg.get("op")
            if op == "hello":
                if msg.get("version") != PROTOCOL_VERSION:
                    raise RequestError(
                        f"unsupported protocol version {msg.get('version')!r}")
                return json.dumps({"version": PROTOCOL_VERSION,
                                   "labels": list(self.backend.labels)})
            if op == "classify":
                return json.dumps(self._classify(msg, req_id))
            raise RequestError(f"unknown op {op!r}")
        except Exception as exc:
            return json.dumps({"id": req_id, "error": str(exc) or type(exc).__name__})

    def _classify(self, msg: dict, req_id) -> dict:
        if req_id is None:
            raise RequestError("classify requires a non-negative integer id")
        rate = msg.get("sample_rate")
        if isinstance(rate, bool) or not isinstance(rate, int) or rate <= 0:
            raise RequestError(f"sample_rate must be a positive integer, got {rate!r}")
        payload = msg.get("samples_b64")
        if not isinstance(payload, str):
            raise RequestError("samples_b64 must be a base64 string")
        try:
            raw = base64.b64decode(payload, validate=True)
        except binascii.Error:
            raise RequestError("samples_b64 is not valid base64")
        if len(raw) % 4:
            raise RequestError(f"{len(raw)}-byte payload is not float32-aligned")
        samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        label, score, scores = self.backend.classify(samples, rate)
        return {"id": req_id, "label": label, "score": score, "scores": scores}


def serve_stdio(backend, stdin=None, stdout=None) -> None:
    """Serve one session over stdio; returns when the input stream closes."""
    server = BridgeServer(backend)
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(server.handle_line(line) + "\n")
        stdout.flush()


def serve_tcp(backend, host: str = "127.0.0.1", port: int = 0, *,
              connections: int | None = None, on_bound=None) -> None:
    """Serve sessions over TCP, one connection at a time.

    ``connections`` bounds how many connections to serve before returning
    (None = forever); ``on_bound`` receives the actual bound port, useful
    with port 0.
    """
    server = BridgeServer(backend)
    with socket.create_server((host, port)) as sock:
        if on_bound is not None:
            on_bound(sock.getsockname()[1])
        served = 0
        while connections is None or served < connections:
            conn, _ = sock.accept()
            served += 1
            with conn, conn.makefile("r", encoding="utf-8") as reader:
                for line in reader:
                    if not line.strip():
                        continue
                    conn.sendall((server.handle_line(line) + "\n").encode("utf-8"))
