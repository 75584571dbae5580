"""Instance matching and evaluation metrics.

Per image:
  dice = 2*|gt & pred| / (|gt| + |pred|) over binarized foregrounds,
  dq   = |TP| / (|TP| + 0.5*|FP| + 0.5*|FN|),
  sq   = mean IoU over TP pairs,
  pq   = dq * sq,
where a TP is a (gt, pred) instance pair with IoU strictly above the
match threshold. For thresholds >= 0.5 the TP set is one-to-one by
construction (two distinct instances cannot both overlap a third with
IoU > 0.5), so no assignment solver is needed; `match_instances_oracle`
is the exhaustive cross-check of that claim.

Conventions: a pair that is perfectly empty on both sides scores 1.0
(dice and pq/dq/sq alike); with no TPs but some FPs/FNs all three are 0.

IoU and dice are computed from exact integer pixel counts, converting to
float only in the final division.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .masks import binarize

__all__ = [
    "IouTable",
    "MatchSet",
    "MetricsReport",
    "ORACLE_MAX_IDS",
    "aggregate_pooled",
    "aggregate_reports",
    "dice",
    "evaluate_pair",
    "iou_table",
    "match_instances",
    "match_instances_oracle",
    "panoptic_quality",
]

# Exhaustive matcher bound: beyond this the search space is pointless to walk.
ORACLE_MAX_IDS = 12


@dataclass(frozen=True)
class IouTable:
    """Sparse pairwise IoU: only pairs with a positive intersection appear.

    gt_areas / pred_areas carry the pixel count of every id present in the
    respective map, intersecting or not.
    """

    entries: dict[tuple[int, int], float]
    gt_areas: dict[int, int]
    pred_areas: dict[int, int]


@dataclass(frozen=True)
class MatchSet:
    """One-to-one matching outcome: TP pairs with IoUs, leftover FP/FN ids."""

    tp: tuple[tuple[int, int, float], ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]


@dataclass(frozen=True)
class MetricsReport:
    """Metrics for one image (n_images == 1) or a dataset aggregate.

    The trailing accumulator fields (sum_tp_iou, n_inter, n_gt_px,
    n_pred_px) let pooled aggregates be recomputed without touching the
    masks again.
    """

    dice: float
    pq: float
    dq: float
    sq: float
    n_tp: int
    n_fp: int
    n_fn: int
    n_images: int = 1
    image_id: str | None = None
    flags: tuple[str, ...] = ()
    sum_tp_iou: float = 0.0
    n_inter: int = 0
    n_gt_px: int = 0
    n_pred_px: int = 0

    def with_flag(self, flag: str) -> "MetricsReport":
        return replace(self, flags=self.flags + (flag,))


def _check_same_shape(gt: np.ndarray, pred: np.ndarray) -> None:
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: gt {gt.shape} vs pred {pred.shape}")


def iou_table(gt, pred) -> IouTable:
    """Pairwise IoUs via a single co-occurrence pass over the pixels.

    Only pairs whose intersection is positive get an entry; each IoU is
    inter / (gt_area + pred_area - inter) with integer counts.
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    _check_same_shape(gt, pred)

    gt_ids, gt_counts = np.unique(gt[gt > 0], return_counts=True)
    pred_ids, pred_counts = np.unique(pred[pred > 0], return_counts=True)
    for ids in (gt_ids, pred_ids):
        if ids.size and int(ids[-1]) > 0xFFFFFFFF:
            raise ValueError(f"instance id {int(ids[-1])} exceeds the 32-bit id range")
    gt_areas = {int(i): int(c) for i, c in zip(gt_ids, gt_counts)}
    pred_areas = {int(i): int(c) for i, c in zip(pred_ids, pred_counts)}

    both = (gt > 0) & (pred > 0)
    g = gt[both].astype(np.uint64)
    p = pred[both].astype(np.uint64)
    keys, inters = np.unique((g << np.uint64(32)) | p, return_counts=True)

    entries: dict[tuple[int, int], float] = {}
    for key, inter in zip(keys, inters):
        gid = int(key >> np.uint64(32))
        pid = int(key & np.uint64(0xFFFFFFFF))
        n_inter = int(inter)
        union = gt_areas[gid] + pred_areas[pid] - n_inter
        entries[(gid, pid)] = n_inter / union
    return IouTable(entries=entries, gt_areas=gt_areas, pred_areas=pred_areas)


def match_instances(table: IouTable, threshold: float = 0.5) -> MatchSet:
    """TPs are all pairs with IoU strictly above threshold.

    Requires 0.5 <= threshold < 1, which makes the TP set one-to-one
    automatically; that uniqueness is asserted, not assumed.
    """
    if not 0.5 <= threshold < 1.0:
        raise ValueError(f"threshold must be in [0.5, 1), got {threshold}")
    tp = sorted((g, p, iou) for (g, p), iou in table.entries.items() if iou > threshold)
    matched_gt = {g for g, _, _ in tp}
    matched_pred = {p for _, p, _ in tp}
    if len(matched_gt) != len(tp) or len(matched_pred) != len(tp):
        raise RuntimeError(
            f"matching uniqueness violated at threshold {threshold}: {len(tp)} pairs "
            f"over {len(matched_gt)} gt / {len(matched_pred)} pred ids"
        )
    fp = tuple(sorted(set(table.pred_areas) - matched_pred))
    fn = tuple(sorted(set(table.gt_areas) - matched_gt))
    return MatchSet(tp=tuple(tp), fp=fp, fn=fn)


def match_instances_oracle(table: IouTable, threshold: float = 0.5) -> MatchSet:
    """Brute-force reference matcher: exhaustive one-to-one assignment.

    Maximizes (|TP|, sum of TP IoUs) lexicographically over every
    one-to-one assignment among pairs with IoU > threshold. Only feasible
    for small instance counts; raises beyond ORACLE_MAX_IDS per side.
    """
    n_gt, n_pred = len(table.gt_areas), len(table.pred_areas)
    if n_gt > ORACLE_MAX_IDS or n_pred > ORACLE_MAX_IDS:
        raise ValueError(f"oracle bound exceeded: {n_gt} gt / {n_pred} pred ids (max {ORACLE_MAX_IDS})")

    gt_list = sorted(table.gt_areas)
    candidates = {g: [] for g in gt_list}
    for (g, p), iou in sorted(table.entries.items()):
        if iou > threshold:
            candidates[g].append((p, iou))

    best_key = (-1, 0.0)
    best_pairs: list[tuple[int, int, float]] = []

    def search(i: int, used: set[int], pairs: list[tuple[int, int, float]], total: float) -> None:
        nonlocal best_key, best_pairs
        if i == len(gt_list):
            key = (len(pairs), total)
            if key > best_key:
                best_key = key
                best_pairs = list(pairs)
            return
        g = gt_list[i]
        search(i + 1, used, pairs, total)  # leave g unmatched
        for p, iou in candidates[g]:
            if p not in used:
                used.add(p)
                pairs.append((g, p, iou))
                search(i + 1, used, pairs, total + iou)
                pairs.pop()
                used.remove(p)

    search(0, set(), [], 0.0)
    tp = tuple(sorted(best_pairs))
    matched_gt = {g for g, _, _ in tp}
    matched_pred = {p for _, p, _ in tp}
    fp = tuple(sorted(set(table.pred_areas) - matched_pred))
    fn = tuple(sorted(set(table.gt_areas) - matched_gt))
    return MatchSet(tp=tp, fp=fp, fn=fn)


def panoptic_quality(matches: MatchSet) -> tuple[float, float, float]:
    """(pq, dq, sq) from a match set.

    No instances on either side counts as perfect agreement (1, 1, 1);
    no TPs with any FP/FN gives (0, 0, 0).
    """
    n_tp, n_fp, n_fn = len(matches.tp), len(matches.fp), len(matches.fn)
    if n_tp == 0:
        if n_fp == 0 and n_fn == 0:
            return 1.0, 1.0, 1.0
        return 0.0, 0.0, 0.0
    dq = n_tp / (n_tp + 0.5 * n_fp + 0.5 * n_fn)
    sq = math.fsum(iou for _, _, iou in matches.tp) / n_tp
    return dq * sq, dq, sq


def dice(gt_mask, pred_mask) -> float:
    """Foreground dice 2*|gt & pred| / (|gt| + |pred|); both empty -> 1.0."""
    gt_mask = np.asarray(gt_mask)
    pred_mask = np.asarray(pred_mask)
    _check_same_shape(gt_mask, pred_mask)
    n_gt = int(np.count_nonzero(gt_mask))
    n_pred = int(np.count_nonzero(pred_mask))
    if n_gt + n_pred == 0:
        return 1.0
    n_inter = int(np.count_nonzero((gt_mask != 0) & (pred_mask != 0)))
    return 2 * n_inter / (n_gt + n_pred)


def evaluate_pair(gt, pred, threshold: float = 0.5, image_id: str | None = None) -> MetricsReport:
    """Full per-image report: dice plus matched pq/dq/sq and TP/FP/FN counts."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    _check_same_shape(gt, pred)

    gt_fg = binarize(gt)
    pred_fg = binarize(pred)
    n_gt_px = int(np.count_nonzero(gt_fg))
    n_pred_px = int(np.count_nonzero(pred_fg))
    n_inter = int(np.count_nonzero(gt_fg & pred_fg))
    d = 1.0 if n_gt_px + n_pred_px == 0 else 2 * n_inter / (n_gt_px + n_pred_px)

    matches = match_instances(iou_table(gt, pred), threshold)
    pq, dq, sq = panoptic_quality(matches)
    flags = ("empty_gt",) if n_gt_px == 0 else ()
    return MetricsReport(
        dice=d,
        pq=pq,
        dq=dq,
        sq=sq,
        n_tp=len(matches.tp),
        n_fp=len(matches.fp),
        n_fn=len(matches.fn),
        n_images=1,
        image_id=image_id,
        flags=flags,
        sum_tp_iou=math.fsum(iou for _, _, iou in matches.tp),
        n_inter=n_inter,
        n_gt_px=n_gt_px,
        n_pred_px=n_pred_px,
    )


def _sorted_per_image(reports) -> list[MetricsReport]:
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    for r in reports:
        if r.n_images != 1:
            raise ValueError("aggregation expects per-image reports (n_images == 1)")
    return sorted(reports, key=lambda r: (r.image_id is None, r.image_id or ""))


def aggregate_reports(reports) -> MetricsReport:
    """Dataset aggregate: unweighted per-image mean of dice/pq/dq/sq.

    Counts and accumulators are summed; reports are sorted by image id
    before reduction so the result is independent of scheduling.
    """
    rows = _sorted_per_image(reports)
    n = len(rows)
    return MetricsReport(
        dice=math.fsum(r.dice for r in rows) / n,
        pq=math.fsum(r.pq for r in rows) / n,
        dq=math.fsum(r.dq for r in rows) / n,
        sq=math.fsum(r.sq for r in rows) / n,
        n_tp=sum(r.n_tp for r in rows),
        n_fp=sum(r.n_fp for r in rows),
        n_fn=sum(r.n_fn for r in rows),
        n_images=n,
        sum_tp_iou=math.fsum(r.sum_tp_iou for r in rows),
        n_inter=sum(r.n_inter for r in rows),
        n_gt_px=sum(r.n_gt_px for r in rows),
        n_pred_px=sum(r.n_pred_px for r in rows),
    )


def aggregate_pooled(reports) -> MetricsReport:
    """Dataset aggregate with counts pooled first, metrics computed once.

    dq/sq/pq come from summed TP/FP/FN and summed TP IoUs; dice from summed
    pixel counts. Differs in general from the per-image mean.
    """
    rows = _sorted_per_image(reports)
    n_tp = sum(r.n_tp for r in rows)
    n_fp = sum(r.n_fp for r in rows)
    n_fn = sum(r.n_fn for r in rows)
    sum_iou = math.fsum(r.sum_tp_iou for r in rows)
    n_inter = sum(r.n_inter for r in rows)
    n_gt_px = sum(r.n_gt_px for r in rows)
    n_pred_px = sum(r.n_pred_px for r in rows)

    if n_tp == 0:
        pq, dq, sq = (1.0, 1.0, 1.0) if n_fp == 0 and n_fn == 0 else (0.0, 0.0, 0.0)
    else:
        dq = n_tp / (n_tp + 0.5 * n_fp + 0.5 * n_fn)
        sq = sum_iou / n_tp
        pq = dq * sq
    d = 1.0 if n_gt_px + n_pred_px == 0 else 2 * n_inter / (n_gt_px + n_pred_px)
    return MetricsReport(
        dice=d,
        pq=pq,
        dq=dq,
        sq=sq,
        n_tp=n_tp,
        n_fp=n_fp,
        n_fn=n_fn,
        n_images=len(rows),
        sum_tp_iou=sum_iou,
        n_inter=n_inter,
        n_gt_px=n_gt_px,
        n_pred_px=n_pred_px,
    )
