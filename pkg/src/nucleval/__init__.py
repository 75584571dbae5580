"""Evaluation toolkit for detection-prompted nuclear instance segmentation.

Core pieces: instance-map and RLE mask utilities, per-image and aggregate
metrics (dice, panoptic quality and its detection/segmentation factors),
prompt derivation and candidate-mask assembly, dataset manifests with
leave-one-source-out splits, a child-process segmenter endpoint protocol,
and the end-to-end run/eval pipeline behind the `nucleval` CLI.
"""
from .errors import (
    DataError,
    EndpointError,
    NuclevalError,
    UsageError,
)
from .masks import (
    BoundingBox,
    InstanceStats,
    RleMask,
    binarize,
    connected_components,
    instance_stats,
    relabel_sequential,
    rle_decode,
    rle_encode,
)
from .metrics import (
    IouTable,
    MatchSet,
    MetricsReport,
    aggregate_pooled,
    aggregate_reports,
    dice,
    evaluate_pair,
    iou_table,
    match_instances,
    match_instances_oracle,
    panoptic_quality,
)
from .prompts import (
    CandidateMask,
    Detection,
    PromptSet,
    assemble_instance_map,
    centers_from_detections,
    gt_box_prompts,
    gt_point_prompts,
)
from .manifest import (
    DatasetManifest,
    Sample,
    Split,
    SplitSpec,
    load_manifest,
    load_split,
    make_losso_split,
    save_split,
)
from .endpoint import EndpointClient, build_request, run_segmenter
from .pipeline import RunConfig, evaluate_dirs, run_pipeline
from .labelio import read_label_map, write_label_map

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CandidateMask",
    "DataError",
    "DatasetManifest",
    "Detection",
    "EndpointClient",
    "EndpointError",
    "InstanceStats",
    "IouTable",
    "MatchSet",
    "MetricsReport",
    "NuclevalError",
    "PromptSet",
    "RleMask",
    "RunConfig",
    "Sample",
    "Split",
    "SplitSpec",
    "UsageError",
    "aggregate_pooled",
    "aggregate_reports",
    "assemble_instance_map",
    "binarize",
    "build_request",
    "centers_from_detections",
    "connected_components",
    "dice",
    "evaluate_dirs",
    "evaluate_pair",
    "gt_box_prompts",
    "gt_point_prompts",
    "instance_stats",
    "iou_table",
    "load_manifest",
    "load_split",
    "make_losso_split",
    "match_instances",
    "match_instances_oracle",
    "panoptic_quality",
    "read_label_map",
    "relabel_sequential",
    "rle_decode",
    "rle_encode",
    "run_pipeline",
    "run_segmenter",
    "save_split",
    "write_label_map",
]
