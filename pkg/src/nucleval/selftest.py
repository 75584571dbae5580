"""Self-contained property suite cross-checking the metric implementations.

Every check pits the production path against an independent route:
the sparse co-occurrence IoU pass against a dense per-pair reference,
the threshold matcher against the exhaustive assignment oracle, RLE decode
against encode, and the metric invariants (pq decomposition, relabel
invariance, gt/pred symmetry) against exact equality.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .masks import rle_decode, rle_encode
from .metrics import (
    IouTable,
    aggregate_reports,
    evaluate_pair,
    iou_table,
    match_instances,
    match_instances_oracle,
)
from .synth import random_instance_map

__all__ = ["SelftestResult", "iou_table_dense", "run_selftest"]


def iou_table_dense(gt, pred) -> IouTable:
    """O(G*P) reference IoU table via direct mask comparisons."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: gt {gt.shape} vs pred {pred.shape}")
    gt_ids = [int(i) for i in np.unique(gt) if i > 0]
    pred_ids = [int(i) for i in np.unique(pred) if i > 0]
    gt_areas = {g: int(np.count_nonzero(gt == g)) for g in gt_ids}
    pred_areas = {p: int(np.count_nonzero(pred == p)) for p in pred_ids}
    entries = {}
    for g in gt_ids:
        gm = gt == g
        for p in pred_ids:
            inter = int(np.count_nonzero(gm & (pred == p)))
            if inter:
                entries[(g, p)] = inter / (gt_areas[g] + pred_areas[p] - inter)
    return IouTable(entries=entries, gt_areas=gt_areas, pred_areas=pred_areas)


_CHECKS = (
    "sparse IoU table matches dense reference",
    "matcher agrees with exhaustive oracle",
    "pq equals dq*sq within 1e-12",
    "metrics invariant under id relabeling",
    "fp/fn swap under gt/pred exchange",
    "RLE round-trip restores every mask",
    "aggregate mean equals fsum of per-image values",
)


@dataclass
class SelftestResult:
    n_pairs: int
    elapsed_s: float
    failures: dict[str, list[str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = []
        for name in _CHECKS:
            bad = self.failures.get(name, [])
            status = "PASS" if not bad else "FAIL"
            out.append(f"{status} {name}")
            out.extend(f"    {msg}" for msg in bad[:5])
        out.append(f"checked {self.n_pairs} random pairs in {self.elapsed_s:.1f}s")
        return out


def _permute_ids(rng: np.random.Generator, lab: np.ndarray) -> np.ndarray:
    ids = np.unique(lab)
    ids = ids[ids > 0]
    if ids.size == 0:
        return lab.copy()
    shuffled = rng.permutation(ids.size).astype(np.int64) + 1
    lut = np.zeros(int(lab.max()) + 1, dtype=np.int64)
    lut[ids] = int(ids.max()) + shuffled  # new ids disjoint from the originals
    return lut[lab]


def run_selftest(
    n_pairs: int = 1000,
    seed: int = 20240811,
    size: int = 64,
    max_instances: int = 10,
    threshold: float = 0.5,
    echo=None,
) -> SelftestResult:
    """Run the randomized cross-check suite; returns a summary result."""
    rng = np.random.default_rng(seed)
    t0 = time.monotonic()
    failures: dict[str, list[str]] = {}

    def fail(name: str, detail: str) -> None:
        failures.setdefault(name, []).append(detail)

    for k in range(n_pairs):
        h = int(rng.integers(4, size + 1))
        w = int(rng.integers(4, size + 1))
        gt = random_instance_map(rng, h, w, max_instances=max_instances)
        pred = random_instance_map(rng, h, w, max_instances=max_instances)

        sparse = iou_table(gt, pred)
        dense = iou_table_dense(gt, pred)
        if (
            sparse.entries != dense.entries
            or sparse.gt_areas != dense.gt_areas
            or sparse.pred_areas != dense.pred_areas
        ):
            fail(_CHECKS[0], f"pair {k}: co-occurrence pass disagrees with dense reference")

        fast = match_instances(sparse, threshold)
        oracle = match_instances_oracle(sparse, threshold)
        if set(fast.tp) != set(oracle.tp):
            fail(_CHECKS[1], f"pair {k}: tp sets differ ({sorted(fast.tp)} vs {sorted(oracle.tp)})")

        report = evaluate_pair(gt, pred, threshold)
        if abs(report.pq - report.dq * report.sq) > 1e-12:
            fail(_CHECKS[2], f"pair {k}: pq {report.pq!r} vs dq*sq {(report.dq * report.sq)!r}")

        relabeled = evaluate_pair(_permute_ids(rng, gt), _permute_ids(rng, pred), threshold)
        if (relabeled.dice, relabeled.pq, relabeled.dq, relabeled.sq) != (
            report.dice,
            report.pq,
            report.dq,
            report.sq,
        ):
            fail(_CHECKS[3], f"pair {k}: metrics changed under id permutation")

        swapped = evaluate_pair(pred, gt, threshold)
        if (
            (swapped.dice, swapped.pq, swapped.dq, swapped.sq)
            != (report.dice, report.pq, report.dq, report.sq)
            or swapped.n_fp != report.n_fn
            or swapped.n_fn != report.n_fp
        ):
            fail(_CHECKS[4], f"pair {k}: metrics not symmetric under gt/pred swap")

        for which, lab in (("gt", gt), ("pred", pred)):
            mask = (lab > 0).astype(np.uint8)
            if not np.array_equal(rle_decode(rle_encode(mask)), mask):
                fail(_CHECKS[5], f"pair {k}: decode(encode({which})) != {which}")

    rng2 = np.random.default_rng(seed + 1)
    batch = [
        evaluate_pair(
            random_instance_map(rng2, 32, 32, max_instances=6),
            random_instance_map(rng2, 32, 32, max_instances=6),
            threshold,
            image_id=f"img_{i:02d}",
        )
        for i in range(8)
    ]
    agg = aggregate_reports(batch)
    if abs(agg.pq - sum(r.pq for r in batch) / len(batch)) > 1e-12:
        fail(_CHECKS[6], f"aggregate pq {agg.pq!r} off from direct mean")

    result = SelftestResult(
        n_pairs=n_pairs, elapsed_s=time.monotonic() - t0, failures=failures
    )
    if echo is not None:
        for line in result.lines():
            echo(line)
    return result
