"""Reference segmenter endpoint, batch detector, and dataset converter.

This package talks to the evaluation toolkit exclusively through its
external interfaces: the newline-delimited JSON endpoint protocol, the
Detections/Candidates JSON schemas, 16-bit PNG label maps, and manifest
files. It imports nothing from the toolkit's code.
"""
from .backends import (
    ClassicDetector,
    ClassicSegmenter,
    Proposal,
    StubSegmenter,
    build_detector,
    build_segmenter,
)
from .config import BACKENDS, MULTIMASK_REDUCE, AdapterConfig, load_config
from .convert import convert_native, load_native_annotation
from .detect import detect_dir, detect_image
from .errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, AdapterError, UsageError
from .serve import handle_request_line, serve

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "BACKENDS",
    "ClassicDetector",
    "ClassicSegmenter",
    "EXIT_DATA",
    "EXIT_OK",
    "EXIT_USAGE",
    "MULTIMASK_REDUCE",
    "Proposal",
    "StubSegmenter",
    "UsageError",
    "build_detector",
    "build_segmenter",
    "convert_native",
    "detect_dir",
    "detect_image",
    "handle_request_line",
    "load_config",
    "load_native_annotation",
    "serve",
]

__version__ = "0.1.0"
