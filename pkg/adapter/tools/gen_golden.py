"""Generate the 50-line golden transcript and its expected responses.

The expected side derives every response from the documented stub contract
(four fixed boxes at score 0.75 with class ids cycling through the task's
classes; constant "42"/0.97 tag reading; frozen bad_request messages),
without importing the adapter implementation.

Run from adapter/:  python3 tools/gen_golden.py
"""

import json
from pathlib import Path


def canon(obj):
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=True)


STUB_BOXES = [[1272, 680, 60, 60], [1372, 680, 60, 60],
              [1272, 780, 60, 60], [1372, 780, 60, 60]]
STUB_TAG = {"text": "42", "confidence": 0.97, "bbox": [1300, 80, 104, 60]}
CLASS_COUNT = {"teat_shape": 4, "skin_condition": 2, None: 4}


def stub_detections(task):
    n = CLASS_COUNT.get(task, 4)
    return [{"bbox": box, "class_id": (k % n) + 1, "score": 0.75}
            for k, box in enumerate(STUB_BOXES)]


def main():
    requests = []
    responses = []
    next_id = 0

    def ask(op, task, path):
        nonlocal next_id
        next_id += 1
        requests.append(canon({"id": next_id, "op": op, "task": task,
                               "image": {"path": path}}))
        if op == "detect":
            responses.append(canon({"id": next_id,
                                    "detections": stub_detections(task)}))
        else:
            responses.append(canon({"id": next_id, "text": STUB_TAG["text"],
                                    "confidence": STUB_TAG["confidence"],
                                    "bbox": STUB_TAG["bbox"]}))

    def bad(raw_line, rid, message):
        requests.append(raw_line)
        responses.append(canon({"id": rid,
                                "error": {"code": "bad_request",
                                          "message": message}}))

    for i in range(12):
        ask("detect", "teat_shape", f"frames/frame_{i:05d}.png")
    bad("this is not json", None, "invalid JSON")
    for i in range(8):
        ask("ocr", None, f"frames/frame_{i:05d}.png")
    bad("[]", None, "request must be a JSON object")
    for i in range(8):
        ask("detect", "skin_condition", f"frames/frame_{i:05d}.png")
    bad(canon({"id": 900, "op": "segment", "image": {"path": "x.png"}}),
        900, "unsupported op")
    bad('{"op": "detect", "image": {"path": "x.png"}}', None,
        "id must be an integer")
    bad('{"id": 0.5, "op": "detect", "image": {"path": "x.png"}}', None,
        "id must be an integer")
    bad(canon({"id": 901, "op": "detect"}), 901, "image.path must be a string")
    for i in range(3):
        ask("detect", None, f"frames/frame_{i:05d}.png")
    for i in range(12):
        ask("ocr", None, f"frames/extra_{i:05d}.png")
    ask("detect", "teat_shape", "frames/last.png")

    assert len(requests) == 50, len(requests)
    assert len(responses) == 50

    fixtures = Path(__file__).parent.parent / "test" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    (fixtures / "golden_requests.ndjson").write_text(
        "\n".join(requests) + "\n", encoding="utf-8")
    (fixtures / "golden_responses.ndjson").write_text(
        "\n".join(responses) + "\n", encoding="utf-8")
    print(f"wrote {len(requests)} request/response pairs to {fixtures}")


if __name__ == "__main__":
    main()
