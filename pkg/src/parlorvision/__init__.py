"""Deterministic keyframe pipeline and evaluation toolkit for per-stall
teat-health records."""

from .annotations import (
    SKIN_CONDITION,
    TEAT_SHAPE,
    CocoDataset,
    LabelMeDoc,
    SplitSpec,
    TaskSpec,
    aggregate,
    class_stats,
    get_task,
    parse_labelme,
    split,
    validate_coco,
)
from .backends import (
    DetectorBackend,
    LatencyRecord,
    ModelCard,
    ScriptedBackend,
    best_by_map,
    lookup,
    model_registry,
    scripted_backend,
    with_deadline,
)
from .extractor import (
    DirectorySink,
    ExtractorConfig,
    ExtractorState,
    OcrResult,
    TeatKeyframeRecord,
    crop_segments,
    gate_stall,
    gate_teats,
    process_stream,
)
from .frames import ArrayPayload, FrameRecord, PillowPayload, load_frame_stream
from .ledger import LedgerEntry, LedgerReport, StorageLedger
from .metrics import (
    EvalConfig,
    EvalResult,
    average_precision,
    evaluate,
    iou,
    match_detections,
)
from .types import BBox, Detection, GtAnnotation
from .wire import WireBackend, wire_backend

__version__ = "0.1.0"
