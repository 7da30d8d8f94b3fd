import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parlorvision.backends import (
    LatencyRecord,
    ScriptedBackend,
    best_by_map,
    lookup,
    model_registry,
    scripted_backend,
    with_deadline,
)
from parlorvision.errors import (
    BackendError,
    BackendTimeout,
    FixtureError,
    InputError,
    ProtocolError,
)
from parlorvision.frames import ArrayPayload, FrameRecord
from parlorvision.types import BBox, Detection
from parlorvision.wire import (
    WireBackend,
    canonical_json,
    decode_request,
    decode_response,
    encode_detect_response,
    encode_error,
    encode_ocr_response,
    encode_request,
)

PEER = Path(__file__).with_name("wire_peer.py")


def make_frame(index=0, width=64, height=48, path=None):
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    return FrameRecord(index=index, width=width, height=height,
                       payload=ArrayPayload(pixels, source_path=path))


class TestScriptedBackend:
    def test_replays_fixture(self, tmp_path):
        fixture = tmp_path / "fixture.json"
        fixture.write_text(json.dumps({
            "detections": {"0": [
                {"bbox": [1, 2, 3, 4], "class_id": 2, "score": 0.9},
            ] * 4},
            "ocr": {"0": {"text": "7", "confidence": 0.99, "bbox": [5, 5, 10, 10]}},
        }))
        backend = scripted_backend(fixture)
        dets = backend.detect(make_frame(0), "teat_shape")
        assert len(dets) == 4
        assert dets[0].class_id == 2
        assert dets[0].image_id == 0
        result = backend.ocr(make_frame(0))
        assert result.text == "7"

    def test_unknown_frame_is_empty(self, tmp_path):
        fixture = tmp_path / "fixture.json"
        fixture.write_text(json.dumps({"detections": {}, "ocr": {}}))
        backend = scripted_backend(fixture)
        assert backend.detect(make_frame(99), None) == []
        assert backend.ocr(make_frame(99)) is None

    def test_score_out_of_range_is_load_error(self, tmp_path):
        fixture = tmp_path / "fixture.json"
        fixture.write_text(json.dumps({
            "detections": {"0": [{"bbox": [1, 2, 3, 4], "class_id": 1, "score": 1.2}]},
        }))
        with pytest.raises(FixtureError, match="score"):
            scripted_backend(fixture)

    def test_malformed_fixture(self, tmp_path):
        fixture = tmp_path / "fixture.json"
        fixture.write_text("{broken")
        with pytest.raises(FixtureError):
            scripted_backend(fixture)

    def test_box_outside_frame_rejected_at_call(self):
        backend = ScriptedBackend(
            {0: [{"bbox": [60.0, 2.0, 10.0, 4.0], "class_id": 1, "score": 0.5}]}, {})
        with pytest.raises(BackendError, match="outside"):
            backend.detect(make_frame(0), None)

    def test_deterministic(self, tmp_path):
        fixture = tmp_path / "fixture.json"
        fixture.write_text(json.dumps({
            "detections": {"0": [{"bbox": [1, 2, 3, 4], "class_id": 1, "score": 0.5}]},
        }))
        backend = scripted_backend(fixture)
        first = backend.detect(make_frame(0), None)
        second = backend.detect(make_frame(0), None)
        assert first == second


class FakeClock:
    """Deterministic clock: advances by the scripted step on each call pair."""

    def __init__(self, steps_ms):
        self.steps = list(steps_ms)
        self.now = 0.0
        self.pending = None

    def __call__(self):
        if self.pending is None:
            self.pending = self.steps.pop(0)
        else:
            self.now += self.pending / 1000.0
            self.pending = None
        return self.now


class TestDeadline:
    def test_reported_inference_times_fit_the_budget(self):
        times = [628, 598, 576, 505, 498, 463]
        records = []
        backend = with_deadline(ScriptedBackend({}, {}), budget_ms=2000,
                                log=records.append, clock=FakeClock(times))
        for i in range(len(times)):
            backend.detect(make_frame(i), None)
        assert [r.violated for r in records] == [False] * 6
        assert [round(r.duration_ms) for r in records] == times

    def test_budget_crossing_is_flagged(self):
        records = []
        backend = with_deadline(ScriptedBackend({}, {}), budget_ms=2000,
                                log=records.append, clock=FakeClock([2500]))
        backend.detect(make_frame(0), None)
        assert records[0].violated is True

    def test_exactly_at_budget_is_not_violated(self):
        record = LatencyRecord(frame_index=0, op="detect",
                               duration_ms=2000.0, budget_ms=2000.0)
        assert record.violated is False

    @given(st.floats(0, 5000), st.floats(1, 5000))
    def test_violated_iff_over_budget(self, duration, budget):
        record = LatencyRecord(frame_index=0, op="ocr",
                               duration_ms=duration, budget_ms=budget)
        assert record.violated == (duration > budget)

    def test_results_pass_through_unaltered(self):
        inner = ScriptedBackend(
            {3: [{"bbox": [1.0, 2.0, 3.0, 4.0], "class_id": 1, "score": 0.5}]},
            {3: {"text": "9", "confidence": 0.9, "bbox": [1.0, 1.0, 2.0, 2.0]}})
        records = []
        wrapped = with_deadline(inner, budget_ms=2000, log=records.append)
        frame = make_frame(3)
        assert wrapped.detect(frame, "teat_shape") == inner.detect(frame, "teat_shape")
        assert wrapped.ocr(frame) == inner.ocr(frame)
        assert [r.op for r in records] == ["detect", "ocr"]

    def test_errors_pass_through_but_still_logged(self):
        class Exploding:
            def detect(self, frame, task):
                raise BackendError("boom")

            def ocr(self, frame):
                return None

        records = []
        wrapped = with_deadline(Exploding(), budget_ms=100, log=records.append)
        with pytest.raises(BackendError):
            wrapped.detect(make_frame(0), None)
        assert len(records) == 1
        assert records[0].op == "detect"

    def test_bad_budget_rejected(self):
        with pytest.raises(ValueError):
            with_deadline(ScriptedBackend({}, {}), budget_ms=0)


class TestRegistry:
    def test_table_values_verbatim(self):
        expected = {
            ("DINO", "teat_shape"): (0.783, 628),
            ("YOLO-F", "teat_shape"): (0.634, 598),
            ("Faster RCNN", "teat_shape"): (0.573, 576),
            ("DINO", "skin_condition"): (0.828, 505),
            ("YOLO-F", "skin_condition"): (0.615, 498),
            ("Faster RCNN", "skin_condition"): (0.695, 463),
        }
        cards = model_registry()
        assert len(cards) == 6
        for card in cards:
            map_small, ms = expected[(card.name, card.task)]
            assert card.map_small == map_small
            assert card.avg_inference_ms == ms

    def test_lookup_with_task_alias(self):
        assert lookup("DINO", "teat_shape").map_small == 0.783
        assert lookup("Faster RCNN", "skin").avg_inference_ms == 463

    def test_best_per_task_is_dino(self):
        assert best_by_map("teat_shape").name == "DINO"
        assert best_by_map("skin_condition").name == "DINO"

    def test_runtime_claim_holds(self):
        # the transformer stays within ~110% of the fastest baseline per task
        for task in ("teat_shape", "skin_condition"):
            cards = [c for c in model_registry() if c.task == task]
            dino = next(c for c in cards if c.name == "DINO")
            fastest = min(c.avg_inference_ms for c in cards if c.name != "DINO")
            assert dino.avg_inference_ms <= 1.10 * fastest

    def test_unknown_lookup(self):
        with pytest.raises(InputError):
            lookup("SSD", "teat_shape")


json_scalars = st.one_of(st.integers(-1000, 1000),
                         st.text(max_size=8))


class TestWireCodec:
    @given(st.integers(0, 10**6), st.sampled_from(["detect", "ocr"]),
           st.one_of(st.none(), st.sampled_from(["teat_shape", "skin_condition"])),
           st.text(min_size=1, max_size=30).filter(lambda s: "\n" not in s))
    def test_request_round_trip(self, rid, op, task, path):
        line = encode_request(rid, op, task, path)
        decoded = decode_request(line)
        assert canonical_json(decoded) == line

    @given(st.integers(0, 100),
           st.lists(st.fixed_dictionaries({
               "bbox": st.lists(st.integers(0, 50), min_size=4, max_size=4),
               "class_id": st.integers(1, 4),
               "score": st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]),
           }), max_size=4))
    def test_detect_response_round_trip(self, rid, dets):
        line = encode_detect_response(rid, dets)
        assert canonical_json(decode_response(line)) == line

    def test_ocr_and_error_round_trip(self):
        for line in (
            encode_ocr_response(4, "42", 0.75, [1, 2, 3, 4]),
            encode_ocr_response(5, None),
            encode_error(6, "bad_request", "invalid JSON"),
            encode_error(None, "bad_request", "invalid JSON"),
        ):
            assert canonical_json(decode_response(line)) == line

    def test_decode_request_rejects_garbage(self):
        with pytest.raises(ProtocolError):
            decode_request("not json")
        with pytest.raises(ProtocolError):
            decode_request(json.dumps({"id": 1, "op": "segment",
                                       "image": {"path": "x"}}))
        with pytest.raises(ProtocolError):
            decode_request(json.dumps({"id": "x", "op": "detect",
                                       "image": {"path": "x"}}))


def peer(mode):
    return f"{sys.executable} {PEER} {mode}"


class TestWireBackend:
    def test_detect_happy_path(self):
        with WireBackend(peer("ok")) as backend:
            dets = backend.detect(make_frame(1, path="frame1.npy"), "teat_shape")
        assert dets == [Detection(image_id=1, class_id=2,
                                  bbox=BBox(10.0, 10.0, 5.0, 5.0), score=0.8)]

    def test_ocr_happy_path(self):
        with WireBackend(peer("ok")) as backend:
            result = backend.ocr(make_frame(2, path="frame2.npy"))
        assert result.text == "42"
        assert result.confidence == 0.95

    def test_sequential_ids(self):
        with WireBackend(peer("ok")) as backend:
            frame = make_frame(0, path="f.npy")
            backend.detect(frame, None)
            backend.detect(frame, None)
            backend.ocr(frame)

    def test_error_response_surfaces_code(self):
        with WireBackend(peer("error")) as backend:
            with pytest.raises(BackendError) as info:
                backend.detect(make_frame(0, path="f.npy"), None)
        assert info.value.code == "boom"
        assert "scripted failure" in str(info.value)

    def test_wrong_id_is_protocol_error(self):
        with WireBackend(peer("wrongid")) as backend:
            with pytest.raises(ProtocolError, match="id"):
                backend.detect(make_frame(0, path="f.npy"), None)

    def test_garbage_is_protocol_error(self):
        with WireBackend(peer("garbage")) as backend:
            with pytest.raises(ProtocolError):
                backend.detect(make_frame(0, path="f.npy"), None)

    def test_peer_exit_is_protocol_error(self):
        with WireBackend(peer("exit")) as backend:
            with pytest.raises(ProtocolError, match="exited"):
                backend.detect(make_frame(0, path="f.npy"), None)

    def test_timeout(self):
        with WireBackend(peer("sleep"), timeout_ms=300) as backend:
            with pytest.raises(BackendTimeout):
                backend.detect(make_frame(0, path="f.npy"), None)

    def test_missing_command_is_backend_error(self):
        with pytest.raises(BackendError):
            WireBackend("definitely-not-a-real-binary-12345")

    def test_pathless_frame_is_backend_error(self):
        with WireBackend(peer("ok")) as backend:
            with pytest.raises(BackendError, match="path"):
                backend.detect(make_frame(0), None)
