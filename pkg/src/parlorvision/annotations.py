"""Annotation handling: LabelMe documents in, COCO datasets out.

Parsing is pure and per-file; aggregation, splitting and validation are
deterministic reductions, so the same corpus always serializes to the same
bytes regardless of input order.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ValidationError
from .types import BBox, Detection

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Shape:
    label: str
    points: tuple[tuple[float, float], ...]
    shape_type: str


@dataclass(frozen=True)
class LabelMeDoc:
    image_path: str
    image_width: int
    image_height: int
    shapes: tuple[Shape, ...]


@dataclass(frozen=True)
class TaskSpec:
    """An annotation task: ordered category labels plus raw-label aliases."""

    name: str
    categories: tuple[str, ...]
    aliases: dict[str, str] = field(default_factory=dict)

    def normalize(self, label: str) -> str | None:
        """Map a raw shape label to a task category name, or None if foreign."""
        label = self.aliases.get(label, label)
        return label if label in self.categories else None


TEAT_SHAPE = TaskSpec("teat_shape", ("1", "3", "7", "8"))
# skin files carry both bare and C-prefixed labels for the same classes
SKIN_CONDITION = TaskSpec("skin_condition", ("C1", "C3"), aliases={"1": "C1", "3": "C3"})

TASKS = {t.name: t for t in (TEAT_SHAPE, SKIN_CONDITION)}


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise ValidationError(
            f"unknown task {name!r}; expected one of {sorted(TASKS)}"
        ) from None


@dataclass(frozen=True)
class CocoImage:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class CocoAnnotation:
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]  # x, y, w, h
    area: float


@dataclass(frozen=True)
class CocoCategory:
    id: int
    name: str


@dataclass(frozen=True)
class CocoDataset:
    images: tuple[CocoImage, ...]
    annotations: tuple[CocoAnnotation, ...]
    categories: tuple[CocoCategory, ...]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError(f"train_frac {self.train_frac} outside (0, 1)")


# --------------------------------------------------------------------------
# LabelMe parsing


def _require(mapping, key, path):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ValidationError(f"{path}: missing field {key!r}")
    return mapping[key]


def _as_positive_int(value, path):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
        raise ValidationError(f"{path}: must be a positive number, got {value!r}")
    return int(value)


def _as_point(value, path):
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ValidationError(f"{path}: expected an [x, y] number pair, got {value!r}")
    return float(value[0]), float(value[1])


def parse_labelme(data: bytes | str) -> LabelMeDoc:
    """Parse and validate one LabelMe JSON document.

    Raises ValidationError naming the offending JSON path for malformed
    documents, unsupported shape types, or rectangles without exactly two
    corner points. Polygons keep all their points.
    """
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("document root must be a JSON object")

    image_path = _require(raw, "imagePath", "$")
    if not isinstance(image_path, str) or not image_path:
        raise ValidationError("imagePath: must be a non-empty string")
    width = _as_positive_int(_require(raw, "imageWidth", "$"), "imageWidth")
    height = _as_positive_int(_require(raw, "imageHeight", "$"), "imageHeight")
    raw_shapes = _require(raw, "shapes", "$")
    if not isinstance(raw_shapes, list):
        raise ValidationError("shapes: must be a list")

    shapes = []
    for i, raw_shape in enumerate(raw_shapes):
        path = f"shapes[{i}]"
        label = _require(raw_shape, "label", path)
        if not isinstance(label, str):
            raise ValidationError(f"{path}.label: must be a string")
        shape_type = _require(raw_shape, "shape_type", path)
        if shape_type not in ("rectangle", "polygon"):
            raise ValidationError(f"{path}.shape_type: unsupported {shape_type!r}")
        raw_points = _require(raw_shape, "points", path)
        if not isinstance(raw_points, list):
            raise ValidationError(f"{path}.points: must be a list")
        points = tuple(_as_point(p, f"{path}.points[{j}]") for j, p in enumerate(raw_points))
        if shape_type == "rectangle" and len(points) != 2:
            raise ValidationError(
                f"{path}.points: rectangle needs exactly 2 points, got {len(points)}"
            )
        if len(points) < 2:
            raise ValidationError(f"{path}.points: need at least 2 points")
        shapes.append(Shape(label=label, points=points, shape_type=shape_type))

    return LabelMeDoc(
        image_path=image_path,
        image_width=width,
        image_height=height,
        shapes=tuple(shapes),
    )


# --------------------------------------------------------------------------
# Aggregation


def shape_envelope(shape: Shape) -> tuple[float, float, float, float]:
    """Axis-aligned (x, y, w, h) envelope of a shape's points."""
    xs = [p[0] for p in shape.points]
    ys = [p[1] for p in shape.points]
    x, y = min(xs), min(ys)
    return x, y, max(xs) - x, max(ys) - y


def aggregate(docs: Iterable[LabelMeDoc], task: TaskSpec) -> CocoDataset:
    """Consolidate per-image documents into one COCO dataset.

    Images are sorted by file name and numbered from 1; annotation ids follow
    (image, shape) order; category ids are 1-based positions in the task's
    category list. Shape labels foreign to the task are skipped with a
    warning; a bbox poking outside its image is an error.
    """
    ordered = sorted(docs, key=lambda d: d.image_path)
    seen: set[str] = set()
    for doc in ordered:
        if doc.image_path in seen:
            raise ValidationError(f"duplicate file_name {doc.image_path!r}")
        seen.add(doc.image_path)

    category_ids = {name: i for i, name in enumerate(task.categories, start=1)}
    images: list[CocoImage] = []
    annotations: list[CocoAnnotation] = []
    skipped = 0
    next_ann_id = 1
    for image_id, doc in enumerate(ordered, start=1):
        images.append(CocoImage(id=image_id, file_name=doc.image_path,
                                width=doc.image_width, height=doc.image_height))
        for shape_index, shape in enumerate(doc.shapes):
            category = task.normalize(shape.label)
            if category is None:
                skipped += 1
                continue
            x, y, w, h = shape_envelope(shape)
            if x < 0 or y < 0 or x + w > doc.image_width or y + h > doc.image_height:
                raise ValidationError(
                    f"{doc.image_path}: shapes[{shape_index}] bbox "
                    f"({x}, {y}, {w}, {h}) exceeds image bounds "
                    f"{doc.image_width}x{doc.image_height}"
                )
            annotations.append(CocoAnnotation(
                id=next_ann_id, image_id=image_id,
                category_id=category_ids[category],
                bbox=(x, y, w, h), area=w * h,
            ))
            next_ann_id += 1
    if skipped:
        logger.warning("skipped %d shapes with labels outside task %r", skipped, task.name)

    categories = tuple(CocoCategory(id=i, name=name)
                       for name, i in category_ids.items())
    return CocoDataset(images=tuple(images), annotations=tuple(annotations),
                       categories=categories)


# --------------------------------------------------------------------------
# Split


def _lcg_shuffle(items: list, seed: int) -> None:
    """In-place Fisher-Yates shuffle driven by a 32-bit linear congruential
    generator (state = 1664525 * state + 1013904223 mod 2^32), so any
    implementation reproduces the same permutation from the same seed."""
    state = seed & 0xFFFFFFFF
    for i in range(len(items) - 1, 0, -1):
        state = (1664525 * state + 1013904223) & 0xFFFFFFFF
        j = state % (i + 1)
        items[i], items[j] = items[j], items[i]


def split(ds: CocoDataset, spec: SplitSpec) -> tuple[CocoDataset, CocoDataset]:
    """Image-level split: a seeded permutation sends the first
    floor(train_frac * N) images to train, the rest to validation.
    Annotations follow their image; the two halves partition the input."""
    n = len(ds.images)
    if n < 2:
        raise ValidationError(f"cannot split a dataset of {n} image(s)")
    ids = sorted(image.id for image in ds.images)
    _lcg_shuffle(ids, spec.seed)
    n_train = math.floor(spec.train_frac * n)
    train_ids = set(ids[:n_train])

    def subset(keep) -> CocoDataset:
        return CocoDataset(
            images=tuple(im for im in ds.images if keep(im.id)),
            annotations=tuple(a for a in ds.annotations if keep(a.image_id)),
            categories=ds.categories,
        )

    train = subset(lambda i: i in train_ids)
    val = subset(lambda i: i not in train_ids)
    for part_name, part in (("train", train), ("val", val)):
        violations = validate_coco(part)
        if violations:
            raise ValidationError(f"{part_name} split failed validation: {violations[0]}")
    return train, val


# --------------------------------------------------------------------------
# Stats and validation


@dataclass(frozen=True)
class ClassStats:
    """Annotation counts per category plus the max:min imbalance pair."""

    counts: dict[str, int]
    imbalance: tuple[int, int] | None

    @property
    def imbalance_quotient(self) -> float | None:
        if self.imbalance is None or self.imbalance[1] == 0:
            return None
        return self.imbalance[0] / self.imbalance[1]


def class_stats(ds: CocoDataset) -> ClassStats:
    names = {c.id: c.name for c in ds.categories}
    counts = {c.name: 0 for c in ds.categories}
    for ann in ds.annotations:
        counts[names[ann.category_id]] += 1
    if counts and any(counts.values()):
        imbalance = (max(counts.values()), min(counts.values()))
    else:
        imbalance = None
    return ClassStats(counts=counts, imbalance=imbalance)


def validate_coco(ds: CocoDataset) -> list[str]:
    """Check dataset invariants; returns violations (empty when valid)."""
    violations: list[str] = []

    def check_unique(kind, ids):
        seen = set()
        for i in ids:
            if i in seen:
                violations.append(f"{kind}: duplicate id {i}")
            seen.add(i)

    check_unique("images", (im.id for im in ds.images))
    check_unique("annotations", (a.id for a in ds.annotations))
    check_unique("categories", (c.id for c in ds.categories))

    image_dims = {im.id: (im.width, im.height) for im in ds.images}
    category_ids = {c.id for c in ds.categories}
    for i, im in enumerate(ds.images):
        if im.width <= 0 or im.height <= 0:
            violations.append(f"images[{i}]: non-positive dimensions {im.width}x{im.height}")
    for i, ann in enumerate(ds.annotations):
        where = f"annotations[{i}] (id {ann.id})"
        if ann.image_id not in image_dims:
            violations.append(f"{where}: references missing image {ann.image_id}")
            continue
        if ann.category_id not in category_ids:
            violations.append(f"{where}: references missing category {ann.category_id}")
        x, y, w, h = ann.bbox
        if w < 0 or h < 0:
            violations.append(f"{where}: negative bbox dimensions")
            continue
        if abs(ann.area - w * h) > 1e-6:
            violations.append(f"{where}: area {ann.area} != w*h {w * h}")
        width, height = image_dims[ann.image_id]
        if x < 0 or y < 0 or x + w > width or y + h > height:
            violations.append(f"{where}: bbox outside image bounds")
    return violations


# --------------------------------------------------------------------------
# Serialization (byte-stable)


def coco_to_dict(ds: CocoDataset) -> dict:
    return {
        "images": [
            {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
            for im in ds.images
        ],
        "annotations": [
            {"id": a.id, "image_id": a.image_id, "category_id": a.category_id,
             "bbox": list(a.bbox), "area": a.area}
            for a in ds.annotations
        ],
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
    }


def dumps_coco(ds: CocoDataset) -> str:
    return json.dumps(coco_to_dict(ds), ensure_ascii=False, indent=2) + "\n"


def load_coco(data: bytes | str) -> CocoDataset:
    """Parse a COCO dataset document; crowd-flagged annotations are rejected."""
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("document root must be a JSON object")
    images = []
    for i, im in enumerate(raw.get("images", [])):
        images.append(CocoImage(
            id=_require(im, "id", f"images[{i}]"),
            file_name=_require(im, "file_name", f"images[{i}]"),
            width=_require(im, "width", f"images[{i}]"),
            height=_require(im, "height", f"images[{i}]"),
        ))
    annotations = []
    for i, ann in enumerate(raw.get("annotations", [])):
        path = f"annotations[{i}]"
        if ann.get("iscrowd"):
            raise ValidationError(f"{path}: crowd annotations are not supported")
        bbox = _require(ann, "bbox", path)
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ValidationError(f"{path}.bbox: expected [x, y, w, h]")
        x, y, w, h = (float(v) for v in bbox)
        annotations.append(CocoAnnotation(
            id=_require(ann, "id", path),
            image_id=_require(ann, "image_id", path),
            category_id=_require(ann, "category_id", path),
            bbox=(x, y, w, h),
            area=float(ann.get("area", w * h)),
        ))
    categories = []
    for i, cat in enumerate(raw.get("categories", [])):
        categories.append(CocoCategory(
            id=_require(cat, "id", f"categories[{i}]"),
            name=_require(cat, "name", f"categories[{i}]"),
        ))
    return CocoDataset(images=tuple(images), annotations=tuple(annotations),
                       categories=tuple(categories))


def load_detections(data: bytes | str) -> list[Detection]:
    """Parse a COCO-results style detection list:
    [{image_id, category_id, bbox [x, y, w, h], score}, ...]."""
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ValidationError("detections document must be a JSON list")
    dets = []
    for i, entry in enumerate(raw):
        path = f"$[{i}]"
        bbox = _require(entry, "bbox", path)
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ValidationError(f"{path}.bbox: expected [x, y, w, h]")
        score = _require(entry, "score", path)
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ValidationError(f"{path}.score: must be in [0, 1], got {score!r}")
        try:
            box = BBox.from_list(bbox)
        except ValueError as exc:
            raise ValidationError(f"{path}.bbox: {exc}") from exc
        dets.append(Detection(
            image_id=_require(entry, "image_id", path),
            class_id=_require(entry, "category_id", path),
            bbox=box,
            score=float(score),
        ))
    return dets
