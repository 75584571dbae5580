"""Command-line surface: `adapter serve|detect|convert`.

Exit codes: 0 success, 1 usage error, 2 data/config/model error.
"""
from __future__ import annotations

import argparse
import sys

from .config import AdapterConfig, load_config
from .convert import convert_native
from .detect import detect_dir
from .errors import EXIT_USAGE, AdapterError
from .serve import serve

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="adapter",
        description="Segmenter endpoint, batch detector, and dataset converter.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_serve = sub.add_parser("serve", help="serve the endpoint protocol on stdin/stdout")
    p_serve.add_argument("--config", help="adapter config JSON (default: stub backend)")

    p_detect = sub.add_parser("detect", help="write one detections JSON per image")
    p_detect.add_argument("--images", required=True, help="directory of input images")
    p_detect.add_argument("--out", required=True, help="output directory")
    p_detect.add_argument("--config", help="adapter config JSON (default: stub backend)")

    p_convert = sub.add_parser("convert", help="convert native annotations to label maps")
    p_convert.add_argument("--in", dest="root", required=True, help="native dataset root")
    p_convert.add_argument("--out", required=True, help="output directory")
    return parser


def _config_from(args) -> AdapterConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return AdapterConfig()


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return serve(_config_from(args))
        if args.command == "detect":
            n = detect_dir(_config_from(args), args.images, args.out)
            print(f"detected over {n} images -> {args.out}")
            return 0
        manifest_path = convert_native(args.root, args.out)
        print(f"converted -> {manifest_path}")
        return 0
    except AdapterError as e:
        print(f"adapter: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
