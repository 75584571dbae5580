"""End-to-end runs: prompts -> endpoint -> assembled predictions -> reports.

A run walks the selected manifest samples, derives prompts per the configured
mode, queries the segmenter endpoint, assembles each image's candidate masks
into an instance map, and writes it as a 16-bit PNG. Scoring then reads those
files back, so a run and a standalone evaluation of its output directory are
the same computation.

Failure policy: an endpoint crash or a broken response ordering poisons the
whole stream, so the run aborts (predictions written so far are kept and a
resumed run skips them). A timeout kills only that worker's endpoint process,
which is respawned; the image is recorded as failed. Malformed or error
responses fail the image but keep the process. Failed images score as empty
predictions, flagged, so aggregates never silently hide them.
"""
from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .endpoint import DEFAULT_TIMEOUT, EndpointClient, build_request
from .errors import DataError, EndpointError, NuclevalError
from .labelio import load_json, parse_detections_obj, read_label_map, write_label_map
from .manifest import DatasetManifest, Sample, Split
from .metrics import (
    MetricsReport,
    aggregate_pooled,
    aggregate_reports,
    evaluate_pair,
)
from .prompts import (
    PromptSet,
    assemble_instance_map,
    centers_from_detections,
    gt_box_prompts,
    gt_point_prompts,
)

__all__ = [
    "PROMPT_MODES",
    "RunConfig",
    "ReportBundle",
    "RunResult",
    "build_prompt_set",
    "evaluate_dirs",
    "run_pipeline",
]

PROMPT_MODES = ("gt-points", "gt-boxes", "detections")


@dataclass(frozen=True)
class RunConfig:
    prompt_mode: str
    endpoint_cmd: str
    match_threshold: float = 0.5
    min_area: int = 3
    score_floor: float = 0.0
    parallelism: int = 1
    detections_dir: Path | None = None
    timeout: float = DEFAULT_TIMEOUT
    force: bool = False

    def __post_init__(self):
        if self.prompt_mode not in PROMPT_MODES:
            raise DataError(
                f"unknown prompt mode {self.prompt_mode!r}; expected one of {PROMPT_MODES}"
            )
        if self.prompt_mode == "detections" and self.detections_dir is None:
            raise DataError("prompt mode 'detections' requires a detections directory")
        if self.parallelism < 1:
            raise DataError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.min_area < 0:
            raise DataError(f"min_area must be >= 0, got {self.min_area}")


@dataclass
class ReportBundle:
    """Everything a report file carries: per-image rows, aggregates, failures."""

    per_image: list[MetricsReport]
    aggregate_mean: MetricsReport | None
    aggregate_pooled: MetricsReport | None
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class RunResult:
    bundle: ReportBundle
    pred_dir: Path
    aborted: bool = False
    fatal_error: str | None = None


def build_prompt_set(
    sample: Sample, gt: np.ndarray, mode: str, detections_dir: Path | None = None
) -> PromptSet:
    """Derive the prompt set for one image under the given mode."""
    if mode == "gt-points":
        return gt_point_prompts(gt)[0]
    if mode == "gt-boxes":
        return gt_box_prompts(gt)[0]
    if mode == "detections":
        det_path = Path(detections_dir) / f"{sample.id}.json"
        if not det_path.is_file():
            raise DataError(f"no detections file for image {sample.id!r}: {det_path}")
        obj = load_json(det_path)
        if obj.get("image_id") != sample.id:
            raise DataError(
                f"detections file {det_path} is for image {obj.get('image_id')!r}, "
                f"not {sample.id!r}"
            )
        h, w = gt.shape
        dets = parse_detections_obj(obj, bounds=(w, h), where=str(det_path))
        return centers_from_detections(dets)
    raise DataError(f"unknown prompt mode {mode!r}")


def _segment_one(sample: Sample, cfg: RunConfig, client: EndpointClient, pred_path: Path) -> None:
    gt = read_label_map(sample.gt_path)
    h, w = gt.shape
    prompt_set = build_prompt_set(sample, gt, cfg.prompt_mode, cfg.detections_dir)
    request = build_request(
        sample.id,
        prompt_set,
        width=w,
        height=h,
        image_path=str(sample.image_path) if sample.image_path else None,
    )
    candidates = client.query(request)
    pred = assemble_instance_map(
        candidates, width=w, height=h, min_area=cfg.min_area, score_floor=cfg.score_floor
    )
    write_label_map(pred_path, pred)


class _WorkerPool:
    """Fixed worker threads, one endpoint child per worker, shared job queue."""

    def __init__(self, cfg: RunConfig, jobs: list[tuple[Sample, Path]]):
        self.cfg = cfg
        self.jobs: queue.SimpleQueue = queue.SimpleQueue()
        for job in jobs:
            self.jobs.put(job)
        self.abort = threading.Event()
        self.fatal: list[EndpointError] = []
        self.failures: list[dict] = []
        self._lock = threading.Lock()

    def _record(self, sample: Sample, stage: str, error: Exception) -> None:
        with self._lock:
            self.failures.append({"id": sample.id, "stage": stage, "error": str(error)})

    def _worker(self) -> None:
        client: EndpointClient | None = None
        try:
            while not self.abort.is_set():
                try:
                    sample, pred_path = self.jobs.get_nowait()
                except queue.Empty:
                    return
                try:
                    if client is None:
                        client = EndpointClient(self.cfg.endpoint_cmd, timeout=self.cfg.timeout)
                    _segment_one(sample, self.cfg, client, pred_path)
                except EndpointError as e:
                    self._record(sample, "endpoint", e)
                    if e.fatal:
                        with self._lock:
                            self.fatal.append(e)
                        self.abort.set()
                        return
                    if e.client_dead and client is not None:
                        client.close()
                        client = None
                except NuclevalError as e:
                    self._record(sample, "data", e)
        finally:
            if client is not None:
                client.close()

    def run(self) -> None:
        n = min(self.cfg.parallelism, max(1, self.jobs.qsize()))
        threads = [threading.Thread(target=self._worker, daemon=True) for _ in range(n)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()


def _filter_small(pred: np.ndarray, min_area: int) -> np.ndarray:
    if min_area <= 0 or pred.size == 0 or pred.max() == 0:
        return pred
    counts = np.bincount(pred.ravel())
    keep = counts >= min_area
    keep[0] = True
    if keep.all():
        return pred
    lut = np.where(keep, np.arange(counts.size, dtype=pred.dtype), 0)
    return lut[pred]


def _score_selection(
    manifest: DatasetManifest,
    pred_dir: Path,
    ids: list[str],
    threshold: float,
    min_area: int,
    failures: list[dict],
) -> ReportBundle:
    """Score each id's prediction PNG against its gt; shared by run and eval."""
    by_id = manifest.by_id()
    reports: list[MetricsReport] = []
    for sid in sorted(ids):
        sample = by_id.get(sid)
        if sample is None:
            raise DataError(f"id {sid!r} not present in the manifest")
        gt = read_label_map(sample.gt_path)
        pred_path = Path(pred_dir) / f"{sid}.png"
        flags = []
        if pred_path.is_file():
            pred = read_label_map(pred_path)
            if pred.shape != gt.shape:
                failures.append(
                    {
                        "id": sid,
                        "stage": "eval",
                        "error": (
                            f"prediction shape {pred.shape} does not match "
                            f"gt shape {gt.shape}"
                        ),
                    }
                )
                continue
        else:
            pred = np.zeros_like(gt)
            flags.append("missing_pred")
        pred = _filter_small(pred, min_area)
        report = evaluate_pair(gt, pred, threshold=threshold, image_id=sid)
        for flag in flags:
            report = report.with_flag(flag)
        reports.append(report)
    agg_mean = aggregate_reports(reports) if reports else None
    agg_pooled = aggregate_pooled(reports) if reports else None
    failures.sort(key=lambda f: (f["id"], f["stage"]))
    return ReportBundle(
        per_image=reports,
        aggregate_mean=agg_mean,
        aggregate_pooled=agg_pooled,
        failures=failures,
    )


def evaluate_dirs(
    manifest: DatasetManifest,
    pred_dir,
    ids=None,
    threshold: float = 0.5,
    min_area: int = 0,
) -> ReportBundle:
    """Score saved prediction label maps (pred_dir/<id>.png) against the manifest.

    Missing predictions score as empty maps and are flagged; a prediction with
    mismatched dimensions is recorded as a failure and skipped.
    """
    selected = list(ids) if ids is not None else [s.id for s in manifest.samples]
    return _score_selection(manifest, Path(pred_dir), selected, threshold, min_area, [])


def run_pipeline(
    manifest: DatasetManifest,
    split: Split | None,
    cfg: RunConfig,
    out_dir,
) -> RunResult:
    """Segment every selected image through the endpoint, then score the output.

    Images whose prediction file already exists are skipped unless cfg.force,
    so an interrupted run resumes where it stopped. Returns the scored bundle;
    aborted is True when a fatal endpoint error stopped the segmenting phase
    early (partial predictions are preserved either way).
    """
    out_dir = Path(out_dir)
    pred_dir = out_dir / "preds"
    pred_dir.mkdir(parents=True, exist_ok=True)

    selected = list(split.test_ids) if split is not None else [s.id for s in manifest.samples]
    by_id = manifest.by_id()
    missing = [sid for sid in selected if sid not in by_id]
    if missing:
        raise DataError(f"split references ids missing from the manifest: {missing[:5]}")

    jobs = []
    for sid in selected:
        pred_path = pred_dir / f"{sid}.png"
        if cfg.force or not pred_path.is_file():
            jobs.append((by_id[sid], pred_path))

    pool = _WorkerPool(cfg, jobs)
    if jobs:
        pool.run()

    bundle = _score_selection(
        manifest, pred_dir, selected, cfg.match_threshold, 0, pool.failures
    )
    return RunResult(
        bundle=bundle,
        pred_dir=pred_dir,
        aborted=bool(pool.fatal),
        fatal_error=str(pool.fatal[0]) if pool.fatal else None,
    )
