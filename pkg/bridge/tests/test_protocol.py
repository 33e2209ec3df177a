"""Wire-protocol conformance: handshake, classify, fuzz, transports."""

import base64
import json
import math
import queue
import socket
import subprocess
import sys
import threading

import numpy as np
import pytest

from model_bridge.backends import GENRES, ToyBackend, argmax_label, make_backend, resample
from model_bridge.server import PROTOCOL_VERSION, BridgeServer, serve_tcp

HELLO = json.dumps({"op": "hello", "version": PROTOCOL_VERSION})


def encode(samples) -> str:
    return base64.b64encode(np.asarray(samples).astype("<f4").tobytes()).decode("ascii")


def classify_line(req_id: int, samples, sample_rate: int = 8000) -> str:
    return json.dumps({"id": req_id, "op": "classify",
                       "sample_rate": sample_rate, "samples_b64": encode(samples)})


def assert_valid_classification(reply: dict, req_id: int):
    assert reply["id"] == req_id
    assert "error" not in reply
    assert reply["label"] in GENRES
    assert math.isfinite(reply["score"]) and 0.0 <= reply["score"] <= 1.0
    scores = reply["scores"]
    assert set(scores) == set(GENRES)
    assert all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in scores.values())
    assert argmax_label(scores) == reply["label"]
    assert scores[reply["label"]] == reply["score"]


@pytest.fixture()
def server() -> BridgeServer:
    return BridgeServer(ToyBackend())


class TestHandshake:
    def test_advertises_version_and_labels(self, server):
        reply = json.loads(server.handle_line(HELLO))
        assert reply == {"version": PROTOCOL_VERSION, "labels": list(GENRES)}

    @pytest.mark.parametrize("version", [0, 2, "1", None])
    def test_wrong_version_rejected(self, server, version):
        reply = json.loads(server.handle_line(json.dumps({"op": "hello", "version": version})))
        assert "error" in reply

    def test_repeated_handshake_is_idempotent(self, server):
        assert server.handle_line(HELLO) == server.handle_line(HELLO)


class TestClassify:
    def test_round_trip(self, server):
        rng = np.random.default_rng(0)
        reply = json.loads(server.handle_line(classify_line(42, rng.normal(size=2048))))
        assert_valid_classification(reply, 42)

    def test_silence_ties_break_lexicographically(self, server):
        reply = json.loads(server.handle_line(classify_line(1, np.zeros(512))))
        assert reply["label"] == "blues"
        assert len(set(reply["scores"].values())) == 1

    def test_empty_payload_is_classified(self, server):
        reply = json.loads(server.handle_line(classify_line(2, np.zeros(0))))
        assert_valid_classification(reply, 2)

    def test_non_finite_samples_are_classified(self, server):
        samples = np.array([1.0, np.inf, -np.inf, np.nan, 0.5])
        reply = json.loads(server.handle_line(classify_line(3, samples)))
        assert_valid_classification(reply, 3)

    def test_deterministic_replies(self, server):
        line = classify_line(7, np.sin(np.arange(4096) * 0.01))
        assert server.handle_line(line) == server.handle_line(line)

    def test_spectral_content_separates_labels(self, server):
        t = np.arange(8000) / 8000.0
        low = json.loads(server.handle_line(classify_line(1, np.sin(2 * np.pi * 60 * t))))
        high = json.loads(server.handle_line(classify_line(2, np.sin(2 * np.pi * 3600 * t))))
        assert low["label"] != high["label"]


class TestWellFormedFuzz:
    def test_thousand_requests_id_matched_and_schema_valid(self, server):
        rng = np.random.default_rng(2024)
        rates = [1, 8000, 16000, 22050, 44100, 96000]
        handshakes = 0
        n_requests = 1200
        for i in range(n_requests):
            if i % 100 == 0:
                reply = json.loads(server.handle_line(HELLO))
                assert reply["version"] == PROTOCOL_VERSION
                handshakes += 1
            req_id = int(rng.integers(0, 2**63))
            n = int(rng.integers(0, 600))
            samples = rng.standard_normal(n).astype(np.float32)
            if n and i % 7 == 0:
                samples[int(rng.integers(n))] = np.float32(np.inf)
            if n and i % 11 == 0:
                samples[int(rng.integers(n))] = np.float32(np.nan)
            line = classify_line(req_id, samples, int(rng.choice(rates)))
            reply = json.loads(server.handle_line(line))
            assert_valid_classification(reply, req_id)
        print(f"protocol fuzz: {n_requests} well-formed classify requests "
              f"(+{handshakes} handshakes) all id-matched and schema-valid")


MALFORMED = [
    "not json at all",
    "[1, 2, 3]",
    '"just a string"',
    "{}",
    json.dumps({"op": "nonsense", "id": 5}),
    json.dumps({"op": "hello", "version": 99}),
    json.dumps({"op": "classify"}),
    json.dumps({"op": "classify", "id": -1, "sample_rate": 8000, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": 1.5, "sample_rate": 8000, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": True, "sample_rate": 8000, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": "7", "sample_rate": 8000, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": 5, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": 5, "sample_rate": 0, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": 5, "sample_rate": -8000, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": 5, "sample_rate": True, "samples_b64": ""}),
    json.dumps({"op": "classify", "id": 5, "sample_rate": "8000", "samples_b64": ""}),
    json.dumps({"op": "classify", "id": 5, "sample_rate": 8000}),
    json.dumps({"op": "classify", "id": 5, "sample_rate": 8000, "samples_b64": 12}),
    json.dumps({"op": "classify", "id": 5, "sample_rate": 8000, "samples_b64": "!!!"}),
    json.dumps({"id": 5, "op": "classify", "sample_rate": 8000,
                "samples_b64": base64.b64encode(b"abcde").decode()}),
]


class TestMalformedFuzz:
    @pytest.mark.parametrize("bad", MALFORMED)
    def test_error_reply_keeps_session_alive(self, server, bad):
        reply = json.loads(server.handle_line(bad))
        assert set(reply) == {"id", "error"}
        assert isinstance(reply["error"], str) and reply["error"]
        follow_up = json.loads(server.handle_line(classify_line(9, np.ones(64))))
        assert_valid_classification(follow_up, 9)

    def test_valid_id_is_echoed_in_errors(self, server):
        reply = json.loads(server.handle_line(
            json.dumps({"id": 1234, "op": "classify", "sample_rate": 8000, "samples_b64": "!!!"})))
        assert reply["id"] == 1234 and "error" in reply

    def test_unusable_id_becomes_null(self, server):
        for bad_id in (-3, "x", 2.5, True, None):
            reply = json.loads(server.handle_line(json.dumps({"id": bad_id, "op": "nope"})))
            assert reply["id"] is None and "error" in reply

    def test_random_garbage_fuzz(self, server):
        rng = np.random.default_rng(99)
        alphabet = list('{}[]":,abcdefghij0123456789 \t')
        for i in range(300):
            line = "".join(rng.choice(alphabet, size=int(rng.integers(0, 60))))
            if not line.strip():
                continue
            reply = json.loads(server.handle_line(line))
            assert isinstance(reply, dict)
            assert "error" in reply or reply.get("version") == PROTOCOL_VERSION
        follow_up = json.loads(server.handle_line(classify_line(11, np.ones(32))))
        assert_valid_classification(follow_up, 11)


class _Session:
    """Raw NDJSON client over a spawned stdio bridge subprocess."""

    def __init__(self, argv):
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, text=True, bufsize=1)

    def round_trip(self, line: str) -> str:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return self.proc.stdout.readline().rstrip("\n")

    def close(self) -> int:
        self.proc.stdin.close()
        return self.proc.wait(timeout=10)


class TestStdioTransport:
    ARGV = [sys.executable, "-m", "model_bridge", "--model", "toy"]

    def test_full_session(self):
        session = _Session(self.ARGV)
        try:
            hello = json.loads(session.round_trip(HELLO))
            assert hello == {"version": PROTOCOL_VERSION, "labels": list(GENRES)}
            for req_id in (1, 2, 3):
                reply = json.loads(session.round_trip(
                    classify_line(req_id, np.sin(np.arange(1024) * 0.02 * req_id))))
                assert_valid_classification(reply, req_id)
            assert "error" in json.loads(session.round_trip("garbage"))
            reply = json.loads(session.round_trip(classify_line(4, np.ones(256))))
            assert_valid_classification(reply, 4)
        finally:
            assert session.close() == 0

    def test_replies_identical_across_processes(self):
        line = classify_line(88, np.cos(np.arange(2000) * 0.03), 22050)
        replies = []
        for _ in range(2):
            session = _Session(self.ARGV)
            try:
                session.round_trip(HELLO)
                replies.append(session.round_trip(line))
            finally:
                session.close()
        assert replies[0] == replies[1]

    def test_unknown_model_exits_with_error(self):
        proc = subprocess.run([sys.executable, "-m", "model_bridge", "--model", "bogus"],
                              capture_output=True, text=True, timeout=30)
        assert proc.returncode == 2
        assert "bogus" in proc.stderr


class TestTcpTransport:
    def test_full_session(self):
        ports: queue.Queue = queue.Queue()
        thread = threading.Thread(
            target=serve_tcp,
            args=(ToyBackend(),),
            kwargs={"port": 0, "connections": 1, "on_bound": ports.put},
            daemon=True)
        thread.start()
        port = ports.get(timeout=10)
        with socket.create_connection(("127.0.0.1", port), timeout=10) as sock:
            with sock.makefile("r", encoding="utf-8") as reader:
                sock.sendall((HELLO + "\n").encode())
                assert json.loads(reader.readline())["labels"] == list(GENRES)
                sock.sendall((classify_line(21, np.ones(512)) + "\n").encode())
                assert_valid_classification(json.loads(reader.readline()), 21)
                sock.sendall(b"garbage\n")
                assert "error" in json.loads(reader.readline())
                sock.sendall((classify_line(22, np.zeros(512)) + "\n").encode())
                assert_valid_classification(json.loads(reader.readline()), 22)
        thread.join(timeout=10)
        assert not thread.is_alive()


class TestBackends:
    def test_make_backend_dispatch(self):
        assert isinstance(make_backend("toy"), ToyBackend)
        with pytest.raises(ValueError):
            make_backend("bogus")

    def test_resample_halves_length(self):
        out = resample(np.ones(1000), 16000, 8000)
        assert len(out) == 500

    def test_resample_identity(self):
        x = np.arange(10.0)
        assert resample(x, 8000, 8000) is x
