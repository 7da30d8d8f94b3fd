"""Pluggable inference backends: contract, scripted replay, deadline
accounting, and the benchmark metadata registry.

A backend is total: it answers or raises a BackendError, never silently
drops a request. Scores live in [0, 1] and boxes inside the frame.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, runtime_checkable

from .errors import BackendError, FixtureError, InputError
from .extractor import OcrResult
from .frames import FrameRecord
from .types import BBox, Detection


@runtime_checkable
class DetectorBackend(Protocol):
    """Inference contract consumed by the extraction engine."""

    def detect(self, frame: FrameRecord, task: str | None) -> list[Detection]:
        ...

    def ocr(self, frame: FrameRecord) -> OcrResult | None:
        ...


@dataclass(frozen=True)
class LatencyRecord:
    """Wall-clock accounting for one backend call against the parlor budget."""

    frame_index: int
    op: str  # "detect" | "ocr"
    duration_ms: float
    budget_ms: float
    violated: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "violated", self.duration_ms > self.budget_ms)

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "op": self.op,
            "duration_ms": self.duration_ms,
            "budget_ms": self.budget_ms,
            "violated": self.violated,
        }


def _check_box_in_frame(bbox: BBox, frame: FrameRecord, what: str) -> None:
    if bbox.x < 0 or bbox.y < 0 or bbox.x2 > frame.width or bbox.y2 > frame.height:
        raise BackendError(
            f"{what} box ({bbox.x}, {bbox.y}, {bbox.w}, {bbox.h}) outside "
            f"frame {frame.width}x{frame.height} at index {frame.index}")


class ScriptedBackend:
    """Replays canned results keyed by frame index; unknown frames answer
    empty. Deterministic and side-effect free, so golden runs reproduce."""

    def __init__(self, detections: dict[int, list[dict]],
                 ocr_results: dict[int, dict]):
        self._detections = detections
        self._ocr = ocr_results

    def detect(self, frame: FrameRecord, task: str | None) -> list[Detection]:
        dets = []
        for entry in self._detections.get(frame.index, []):
            bbox = BBox.from_list(entry["bbox"])
            _check_box_in_frame(bbox, frame, "scripted detection")
            dets.append(Detection(image_id=frame.index, class_id=entry["class_id"],
                                  bbox=bbox, score=entry["score"]))
        return dets

    def ocr(self, frame: FrameRecord) -> OcrResult | None:
        entry = self._ocr.get(frame.index)
        if entry is None:
            return None
        bbox = BBox.from_list(entry["bbox"])
        _check_box_in_frame(bbox, frame, "scripted ocr")
        return OcrResult(text=entry["text"], confidence=entry["confidence"], bbox=bbox)


def scripted_backend(fixture_path: str | Path) -> ScriptedBackend:
    """Load a scripted fixture: {"detections": {"<frame>": [...]},
    "ocr": {"<frame>": {...}}}. Invariants are enforced at load time."""
    try:
        raw = json.loads(Path(fixture_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FixtureError(f"cannot load fixture {fixture_path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise FixtureError("fixture root must be a JSON object")

    detections: dict[int, list[dict]] = {}
    for key, entries in raw.get("detections", {}).items():
        frame_entries = []
        for i, entry in enumerate(entries):
            where = f"detections[{key}][{i}]"
            frame_entries.append({
                "bbox": _fixture_bbox(entry, where),
                "class_id": int(entry.get("class_id", 1)),
                "score": _fixture_unit(entry, "score", where),
            })
        detections[int(key)] = frame_entries
    ocr_results: dict[int, dict] = {}
    for key, entry in raw.get("ocr", {}).items():
        where = f"ocr[{key}]"
        text = entry.get("text")
        if not isinstance(text, str):
            raise FixtureError(f"{where}.text: must be a string")
        ocr_results[int(key)] = {
            "text": text,
            "confidence": _fixture_unit(entry, "confidence", where),
            "bbox": _fixture_bbox(entry, where),
        }
    return ScriptedBackend(detections, ocr_results)


def _fixture_bbox(entry: dict, where: str) -> list[float]:
    bbox = entry.get("bbox")
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise FixtureError(f"{where}.bbox: expected [x, y, w, h]")
    x, y, w, h = (float(v) for v in bbox)
    if w < 0 or h < 0:
        raise FixtureError(f"{where}.bbox: negative dimensions")
    return [x, y, w, h]


def _fixture_unit(entry: dict, key: str, where: str) -> float:
    value = entry.get(key)
    if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
        raise FixtureError(f"{where}.{key}: must be in [0, 1], got {value!r}")
    return float(value)


class DeadlineBackend:
    """Forwards calls to an inner backend, timing each against a budget.

    Results are never altered; a LatencyRecord goes to the log sink per
    call, including calls that raise. The deadline is physical (the parlor
    keeps rotating), so wall-clock time is what gets measured.
    """

    def __init__(self, inner: DetectorBackend, budget_ms: float,
                 log: Callable[[LatencyRecord], None],
                 clock: Callable[[], float] = time.perf_counter):
        if budget_ms <= 0:
            raise ValueError("budget_ms must be positive")
        self.inner = inner
        self.budget_ms = budget_ms
        self.log = log
        self.clock = clock

    def _timed(self, frame: FrameRecord, op: str, call):
        start = self.clock()
        try:
            return call()
        finally:
            duration_ms = (self.clock() - start) * 1000.0
            self.log(LatencyRecord(frame_index=frame.index, op=op,
                                   duration_ms=duration_ms, budget_ms=self.budget_ms))

    def detect(self, frame: FrameRecord, task: str | None) -> list[Detection]:
        return self._timed(frame, "detect", lambda: self.inner.detect(frame, task))

    def ocr(self, frame: FrameRecord) -> OcrResult | None:
        return self._timed(frame, "ocr", lambda: self.inner.ocr(frame))


def with_deadline(inner: DetectorBackend, budget_ms: float = 2000,
                  log: Callable[[LatencyRecord], None] | None = None,
                  clock: Callable[[], float] = time.perf_counter) -> DeadlineBackend:
    return DeadlineBackend(inner, budget_ms, log or (lambda record: None), clock)


@dataclass(frozen=True)
class ModelCard:
    """Benchmark metadata for one fine-tuned model on one task."""

    name: str
    task: str
    map_small: float
    avg_inference_ms: int
    params_millions: float
    compute: str

    def __post_init__(self):
        if not 0.0 <= self.map_small <= 1.0:
            raise ValueError(f"map_small {self.map_small} outside [0, 1]")


_REGISTRY = (
    ModelCard("DINO", "teat_shape", 0.783, 628, 47.546, "0.274 TFLOPs"),
    ModelCard("YOLO-F", "teat_shape", 0.634, 598, 42.409, "98.808 GFLOPs"),
    ModelCard("Faster RCNN", "teat_shape", 0.573, 576, 41.364, "0.208 TFLOPs"),
    ModelCard("DINO", "skin_condition", 0.828, 505, 47.546, "0.274 TFLOPs"),
    ModelCard("YOLO-F", "skin_condition", 0.615, 498, 42.409, "98.808 GFLOPs"),
    ModelCard("Faster RCNN", "skin_condition", 0.695, 463, 41.364, "0.208 TFLOPs"),
)

_TASK_ALIASES = {"skin": "skin_condition", "teat": "teat_shape"}


def model_registry() -> tuple[ModelCard, ...]:
    """All benchmark cards, teat-shape task first."""
    return _REGISTRY


def lookup(name: str, task: str) -> ModelCard:
    task = _TASK_ALIASES.get(task, task)
    for card in _REGISTRY:
        if card.name == name and card.task == task:
            return card
    raise InputError(f"no model card for name={name!r} task={task!r}")


def best_by_map(task: str) -> ModelCard:
    task = _TASK_ALIASES.get(task, task)
    cards = [c for c in _REGISTRY if c.task == task]
    if not cards:
        raise InputError(f"no model cards for task {task!r}")
    return max(cards, key=lambda c: c.map_small)
