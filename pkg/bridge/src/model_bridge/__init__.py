"""Bridge service exposing audio classifiers over newline-delimited JSON."""

from .backends import ToyBackend, TransformersBackend, make_backend
from .server import PROTOCOL_VERSION, BridgeServer, serve_stdio, serve_tcp

__all__ = [
    "PROTOCOL_VERSION",
    "BridgeServer",
    "ToyBackend",
    "TransformersBackend",
    "make_backend",
    "serve_stdio",
    "serve_tcp",
]
