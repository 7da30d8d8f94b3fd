"""Keyframe extraction state machine.

Consumes an ordered frame stream, gates frames into stall-id keys (OCR) and
teat keys (detector), keeps one folder per stall id under the session, and
stores cropped teat segments with a JSONL manifest. Strictly sequential in
frame order: stall-id assignment is order-dependent, so one stream gets one
extractor run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .errors import ContractViolation, SinkWriteError
from .frames import FrameRecord, ImagePayload
from .ledger import LedgerEntry, StorageLedger
from .types import BBox, Detection


@dataclass(frozen=True)
class OcrResult:
    """Digit-tag reading on one frame."""

    text: str
    confidence: float
    bbox: BBox

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ExtractorConfig:
    """Gating parameters and output location for one extraction run."""

    output_root: Path
    session: str = "session"
    extraction_rate: int = 1
    ocr_conf_min: float = 0.90
    det_conf_min: float = 0.50
    edge_margin_frac: float = 0.05
    center_margin_frac: float = 0.10
    expected_teat_count: int = 4
    detect_task: str = "teat_shape"

    def __post_init__(self):
        object.__setattr__(self, "output_root", Path(self.output_root))
        if self.extraction_rate < 1:
            raise ValueError("extraction_rate must be >= 1")
        for name in ("edge_margin_frac", "center_margin_frac"):
            value = getattr(self, name)
            if not 0.0 < value < 0.5:
                raise ValueError(f"{name} must be in (0, 0.5), got {value}")
        if self.expected_teat_count < 1:
            raise ValueError("expected_teat_count must be >= 1")
        for name in ("ocr_conf_min", "det_conf_min"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass
class ExtractorState:
    """Mutable loop state: current stall, its folder, and the counters."""

    cur_stall_id: str | None = None
    folder_name: str | None = None
    frames_seen: int = 0
    stall_keys: int = 0
    teat_keys: int = 0
    rejected: int = 0

    def counters(self) -> dict[str, int]:
        return {
            "frames_seen": self.frames_seen,
            "stall_keys": self.stall_keys,
            "teat_keys": self.teat_keys,
            "rejected": self.rejected,
        }


@dataclass(frozen=True)
class TeatKeyframeRecord:
    """Committed teat keyframe: stored segment files plus their boxes."""

    stall_id: str
    frame_index: int
    segments: tuple[tuple[BBox, str, float], ...]  # (bbox, file path, score)


class DetectorBackendLike(Protocol):
    def detect(self, frame: FrameRecord, task: str | None) -> list[Detection]:
        ...


class OcrBackendLike(Protocol):
    def ocr(self, frame: FrameRecord) -> OcrResult | None:
        ...


class RecordSink(Protocol):
    """Destination for stall folders and teat segment records."""

    def create_stall_folder(self, stall_id: str) -> str:
        ...

    def store(self, stall_id: str, frame_index: int,
              segments: Sequence[tuple[Detection, ImagePayload]]) -> TeatKeyframeRecord:
        ...


def gate_stall(ocr: OcrResult | None, frame: FrameRecord,
               cfg: ExtractorConfig) -> str | None:
    """Accept a stall-id reading: confident, all digits, and clear of the
    left/right edge bands that truncate tags as the parlor rotates."""
    if ocr is None:
        return None
    if ocr.confidence < cfg.ocr_conf_min:
        return None
    if not (ocr.text.isascii() and ocr.text.isdigit()):
        return None
    margin = cfg.edge_margin_frac * frame.width
    if ocr.bbox.x < margin or ocr.bbox.x2 > frame.width - margin:
        return None
    return ocr.text


def gate_teats(dets: Sequence[Detection], frame: FrameRecord,
               cfg: ExtractorConfig) -> bool:
    """Accept a teat keyframe: exactly the expected number of confident
    detections, every one wholly inside the central region of the frame."""
    confident = [d for d in dets if d.score >= cfg.det_conf_min]
    if len(confident) != cfg.expected_teat_count:
        return False
    mx = cfg.center_margin_frac * frame.width
    my = cfg.center_margin_frac * frame.height
    for det in confident:
        b = det.bbox
        if b.x < mx or b.y < my or b.x2 > frame.width - mx or b.y2 > frame.height - my:
            return False
    return True


def crop_segments(frame: FrameRecord, dets: Sequence[Detection],
                  ) -> list[tuple[Detection, ImagePayload]]:
    """One crop per detection, clamped to frame bounds, in detection order."""
    if not dets:
        raise ContractViolation("crop_segments needs at least one detection")
    crops = []
    for det in dets:
        b = det.bbox
        x0 = max(0, math.floor(b.x))
        y0 = max(0, math.floor(b.y))
        x1 = min(frame.width, math.ceil(b.x2))
        y1 = min(frame.height, math.ceil(b.y2))
        x1 = max(x0, x1)
        y1 = max(y0, y1)
        crops.append((det, frame.payload.crop(x0, y0, x1 - x0, y1 - y0)))
    return crops


def process_stream(
    source: Iterable[FrameRecord],
    detector: DetectorBackendLike,
    ocr: OcrBackendLike,
    cfg: ExtractorConfig,
    sink: RecordSink,
    ledger: StorageLedger | None = None,
) -> ExtractorState:
    """Run the extraction loop over a frame stream.

    Frames at indices that are not multiples of extraction_rate are skipped
    before any backend call. Sampled frames become stall keys (folder
    switch), teat keys (segments stored under the current stall folder), or
    rejections; teat keys arriving before the first stall key are rejected.
    Sink failures abort with the partial state attached to the error.
    """
    state = ExtractorState()
    last_index: int | None = None
    try:
        for frame in source:
            if last_index is not None and frame.index <= last_index:
                raise ContractViolation(
                    f"frame index {frame.index} after {last_index}: stream must be ordered")
            last_index = frame.index
            state.frames_seen += 1
            if ledger is not None:
                ledger.record(LedgerEntry("raw_video", f"frame:{frame.index}",
                                          frame.payload.byte_size()))
            if frame.index % cfg.extraction_rate != 0:
                continue

            ocr_result = ocr.ocr(frame)
            dets = detector.detect(frame, cfg.detect_task)

            stall_id = gate_stall(ocr_result, frame, cfg)
            if stall_id is not None:
                state.stall_keys += 1
                if ledger is not None:
                    ledger.record(LedgerEntry("intermediate", f"frame:{frame.index}",
                                              frame.payload.byte_size()))
                if stall_id != state.cur_stall_id:
                    state.folder_name = sink.create_stall_folder(stall_id)
                    state.cur_stall_id = stall_id
            elif gate_teats(dets, frame, cfg):
                if state.cur_stall_id is None:
                    # no folder to store under yet
                    state.rejected += 1
                    continue
                state.teat_keys += 1
                if ledger is not None:
                    ledger.record(LedgerEntry("intermediate", f"frame:{frame.index}",
                                              frame.payload.byte_size()))
                confident = [d for d in dets if d.score >= cfg.det_conf_min]
                segments = crop_segments(frame, confident)
                sink.store(state.cur_stall_id, frame.index, segments)
            else:
                state.rejected += 1
    except SinkWriteError as exc:
        exc.state = state
        raise
    return state


class DirectorySink:
    """Filesystem sink: ``<output_root>/<session>/<stall_id>/`` folders with
    ``teat_<frameindex>_<k>.img`` segment files and a ``manifest.jsonl``."""

    def __init__(self, output_root: str | Path, session: str,
                 ledger: StorageLedger | None = None):
        self.session = session
        self.session_dir = Path(output_root) / session
        self.ledger = ledger

    def create_stall_folder(self, stall_id: str) -> str:
        folder = self.session_dir / stall_id
        try:
            folder.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise SinkWriteError(f"cannot create stall folder {folder}: {exc}") from exc
        return str(folder)

    def store(self, stall_id: str, frame_index: int,
              segments: Sequence[tuple[Detection, ImagePayload]]) -> TeatKeyframeRecord:
        folder = self.session_dir / stall_id
        stored: list[tuple[BBox, str, float]] = []
        try:
            with (folder / "manifest.jsonl").open("a", encoding="utf-8") as manifest:
                for k, (det, crop) in enumerate(segments):
                    data = crop.encode()
                    name = f"teat_{frame_index}_{k}.img"
                    (folder / name).write_bytes(data)
                    line = {
                        "frame_index": frame_index,
                        "stall_id": stall_id,
                        "k": k,
                        "bbox": det.bbox.as_list(),
                        "score": det.score,
                        "file": name,
                        "bytes": len(data),
                    }
                    manifest.write(json.dumps(line, ensure_ascii=False) + "\n")
                    stored.append((det.bbox, str(folder / name), det.score))
                    if self.ledger is not None:
                        # path relative to output_root keeps trees relocatable
                        self.ledger.record(LedgerEntry(
                            "keyframe_record",
                            f"{self.session}/{stall_id}/{name}", len(data)))
        except OSError as exc:
            raise SinkWriteError(f"cannot store record in {folder}: {exc}") from exc
        return TeatKeyframeRecord(stall_id=stall_id, frame_index=frame_index,
                                  segments=tuple(stored))
