"""``gymbridge serve`` command line."""

from __future__ import annotations

import argparse
import sys

from .projection import default_segment_map_path
from .server import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gymbridge",
        description="Serve an environment over newline-delimited JSON/TCP",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="run the environment server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5555)
    p.add_argument(
        "--env",
        default="Humanoid-v4",
        help="environment id (gymnasium id, or SyntheticHumanoid-v0)",
    )
    p.add_argument(
        "--segment-map",
        default=str(default_segment_map_path()),
        help="path to the attribute segment map JSON",
    )
    args = parser.parse_args(argv)
    serve(args.host, args.port, args.env, args.segment_map)
    return 0


if __name__ == "__main__":
    sys.exit(main())
