"""Detection-evaluation math: IoU, greedy matching, interpolated AP, mAP.

All functions are pure and safe for concurrent callers. Average precision is
interpolated on an evenly spaced recall grid (101 points by default), and the
mean AP is taken over an IoU-threshold ladder with a separate small-object
band for boxes under ``small_area_max`` square pixels.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolation, InputError
from .types import BBox, Detection, GtAnnotation

# 0.50:0.05:0.95 ladder
DEFAULT_IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))

AREA_BANDS = ("all", "small")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation knobs: threshold ladder, recall grid density, small-band cut."""

    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    recall_points: int = 101
    small_area_max: float = 1024.0  # 32 x 32 px

    def __post_init__(self):
        thresholds = tuple(self.iou_thresholds)
        object.__setattr__(self, "iou_thresholds", thresholds)
        if not thresholds:
            raise ValueError("iou_thresholds must be non-empty")
        for t in thresholds:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"iou threshold {t} outside (0, 1]")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("iou_thresholds must be strictly increasing")
        if self.recall_points < 2:
            raise ValueError("recall_points must be >= 2")
        if self.small_area_max <= 0:
            raise ValueError("small_area_max must be positive")


@dataclass
class EvalResult:
    """Per (class, threshold, band) AP plus band means.

    ``ap`` maps ``(class_id, iou_threshold, band)`` to an AP in [0, 1], or
    ``None`` for cells with no ground truth. ``map_all`` / ``map_small`` are
    arithmetic means over the defined cells of their band (``None`` when the
    whole band is undefined).
    """

    ap: dict[tuple[int, float, str], float | None]
    map_all: float | None
    map_small: float | None
    class_ids: tuple[int, ...]
    iou_thresholds: tuple[float, ...]

    def band_mean(self, band: str) -> float | None:
        cells = [v for k, v in sorted(self.ap.items(), key=lambda kv: kv[0][:2])
                 if k[2] == band and v is not None]
        if not cells:
            return None
        return float(sum(cells) / len(cells))


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area of two boxes; 0 when the union is empty."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0:
        return 0.0
    return inter / union


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GtAnnotation],
    threshold: float,
) -> list[tuple[int, int]]:
    """Greedy one-to-one matching for a single (image, class) group.

    Detections are processed in descending score order (ties by ascending
    input index); each takes the unmatched ground truth of maximal IoU,
    provided that IoU reaches ``threshold`` (GT ties by ascending id).
    Returns (detection index, gt id) pairs in processing order.
    """
    image_ids = {d.image_id for d in dets} | {g.image_id for g in gts}
    if len(image_ids) > 1:
        raise ContractViolation(f"mixed image ids in matching input: {sorted(map(str, image_ids))}")
    class_ids = {d.class_id for d in dets} | {g.class_id for g in gts}
    if len(class_ids) > 1:
        raise ContractViolation(f"mixed class ids in matching input: {sorted(class_ids)}")

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    matched: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for i in order:
        best_iou = 0.0
        best_id: int | None = None
        for gt in gts:
            if gt.id in matched:
                continue
            overlap = iou(dets[i].bbox, gt.bbox)
            if overlap < threshold:
                continue
            if best_id is None or overlap > best_iou or (overlap == best_iou and gt.id < best_id):
                best_iou = overlap
                best_id = gt.id
        if best_id is not None:
            matched.add(best_id)
            pairs.append((i, best_id))
    return pairs


def average_precision(
    tp_flags: Sequence[bool],
    total_gt: int,
    recall_points: int = 101,
) -> float | None:
    """Interpolated AP from pooled match flags in descending-score order.

    For each grid level r in {0, 1/(R-1), ..., 1} take the maximum precision
    achieved at recall >= r (0 if never reached); AP is the mean over the
    grid. Returns None when there is no ground truth to recall.
    """
    if total_gt < 0:
        raise ContractViolation("total_gt must be non-negative")
    if recall_points < 2:
        raise ContractViolation("recall_points must be >= 2")
    if total_gt == 0:
        return None
    flags = np.asarray(list(tp_flags), dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    precision = tp / (tp + fp)
    recall = tp / total_gt
    # recall is non-decreasing, so "max precision at recall >= r" is a suffix max
    suffix_max = np.maximum.accumulate(precision[::-1])[::-1]
    grid = np.arange(recall_points) / (recall_points - 1)
    idx = np.searchsorted(recall, grid, side="left")
    interp = np.where(idx < flags.size, suffix_max[np.minimum(idx, flags.size - 1)], 0.0)
    return float(interp.mean())


def _band_contains(area: float, band: str, cfg: EvalConfig) -> bool:
    if band == "all":
        return True
    if band == "small":
        return area < cfg.small_area_max
    raise ContractViolation(f"unknown area band {band!r}")


def _det_order_key(det: Detection):
    # Content-derived tiebreak keeps evaluation invariant under permutation
    # of the input lists even when scores tie.
    return (-det.score, str(det.image_id), det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h)


def evaluate(
    gts: Sequence[GtAnnotation],
    dets: Sequence[Detection],
    images: Mapping[int | str, tuple[int, int]],
    cfg: EvalConfig | None = None,
    class_ids: Iterable[int] | None = None,
) -> EvalResult:
    """Score detections against ground truth over the full threshold/band grid.

    ``images`` maps every referenced image id to (width, height). Band
    membership is decided by GT box area; an unmatched detection counts as a
    false positive in a band only when its own area is in that band.
    """
    cfg = cfg or EvalConfig()
    for gt in gts:
        if gt.image_id not in images:
            raise InputError(f"ground truth {gt.id} references unknown image {gt.image_id!r}")
    for det in dets:
        if det.image_id not in images:
            raise InputError(f"detection references unknown image {det.image_id!r}")

    if class_ids is not None:
        classes = tuple(sorted(set(class_ids)))
    else:
        classes = tuple(sorted({g.class_id for g in gts} | {d.class_id for d in dets}))

    ap: dict[tuple[int, float, str], float | None] = {}
    for c in classes:
        dets_c = sorted((d for d in dets if d.class_id == c), key=_det_order_key)
        gts_c = [g for g in gts if g.class_id == c]
        gts_by_image: dict[int | str, list[GtAnnotation]] = defaultdict(list)
        for g in gts_c:
            gts_by_image[g.image_id].append(g)
        # IoU of every detection against every same-image GT, computed once
        overlaps = [
            {g.id: iou(d.bbox, g.bbox) for g in gts_by_image.get(d.image_id, ())}
            for d in dets_c
        ]

        for t in cfg.iou_thresholds:
            for band in AREA_BANDS:
                band_gt_ids = {
                    g.id for g in gts_c if _band_contains(g.bbox.area(), band, cfg)
                }
                if not band_gt_ids:
                    ap[(c, t, band)] = None
                    continue
                matched: set[int] = set()
                flags: list[bool] = []
                for d, cand in zip(dets_c, overlaps):
                    best_iou = 0.0
                    best_id: int | None = None
                    for gid, overlap in cand.items():
                        if gid in matched or gid not in band_gt_ids or overlap < t:
                            continue
                        if best_id is None or overlap > best_iou or (
                            overlap == best_iou and gid < best_id
                        ):
                            best_iou = overlap
                            best_id = gid
                    if best_id is not None:
                        matched.add(best_id)
                        flags.append(True)
                    elif _band_contains(d.bbox.area(), band, cfg):
                        flags.append(False)
                    # out-of-band unmatched detections are ignored in this band
                ap[(c, t, band)] = average_precision(
                    flags, len(band_gt_ids), cfg.recall_points
                )

    result = EvalResult(
        ap=ap,
        map_all=None,
        map_small=None,
        class_ids=classes,
        iou_thresholds=cfg.iou_thresholds,
    )
    result.map_all = result.band_mean("all")
    result.map_small = result.band_mean("small")
    return result
