"""Command line entry point: serve a model over stdio or TCP.

The stdio transport keeps stdout protocol-clean (responses only); all
logging goes to stderr.
"""

import argparse
import logging
import sys

from .backends import make_backend
from .server import serve_stdio, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-bridge",
        description="Serve an audio classifier over the newline-delimited JSON protocol")
    parser.add_argument("--model", default="toy", help="toy | hf:<checkpoint id>")
    parser.add_argument("--transport", choices=("stdio", "tcp"), default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0, help="tcp port (0 = ephemeral)")
    parser.add_argument("--connections", type=int, default=None,
                        help="tcp: serve this many connections, then exit")
    parser.add_argument("--device", default=None,
                        help="hf backend device (e.g. cpu, cuda:0)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)

    try:
        backend = make_backend(args.model, device=args.device)
    except Exception as exc:
        print(f"error: cannot load model {args.model!r}: {exc}", file=sys.stderr)
        return 2

    try:
        if args.transport == "stdio":
            serve_stdio(backend)
        else:
            serve_tcp(backend, args.host, args.port, connections=args.connections,
                      on_bound=lambda p: print(f"listening on {args.host}:{p}",
                                               file=sys.stderr, flush=True))
    except (KeyboardInterrupt, BrokenPipeError):
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
