"""Newline-delimited JSON wire protocol for out-of-process detectors.

One UTF-8 JSON object per line, flushed after every line:

    request:  {"id": n, "op": "detect"|"ocr", "task": <task>|null,
               "image": {"path": <string>}}
    detect:   {"id": n, "detections": [{"bbox": [x,y,w,h],
               "class_id": n, "score": f}, ...]}
    ocr:      {"id": n, "text": s, "confidence": f, "bbox": [x,y,w,h]}
              or {"id": n, "text": null}
    error:    {"id": n, "error": {"code": s, "message": s}}

The client keeps one request in flight per connection and requires the
response id to echo the request id. Encoding is canonical (sorted keys,
compact separators) so encode(decode(x)) == x for client-produced lines.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
from typing import Any

from .errors import BackendError, BackendTimeout, ProtocolError
from .extractor import OcrResult
from .frames import FrameRecord
from .types import BBox, Detection

DEFAULT_TIMEOUT_MS = 5000


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=True)


def encode_request(request_id: int, op: str, task: str | None, image_path: str) -> str:
    return canonical_json({
        "id": request_id, "op": op, "task": task, "image": {"path": image_path},
    })


def decode_request(line: str) -> dict:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"request is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("id"), int):
        raise ProtocolError("request must be an object with an integer id")
    if raw.get("op") not in ("detect", "ocr"):
        raise ProtocolError(f"unsupported op {raw.get('op')!r}")
    image = raw.get("image")
    if not isinstance(image, dict) or not isinstance(image.get("path"), str):
        raise ProtocolError("request.image.path must be a string")
    return {"id": raw["id"], "op": raw["op"], "task": raw.get("task"),
            "image": {"path": image["path"]}}


def encode_detect_response(request_id: int, detections: list[dict]) -> str:
    return canonical_json({"id": request_id, "detections": detections})


def encode_ocr_response(request_id: int, text: str | None,
                        confidence: float | None = None,
                        bbox: list[float] | None = None) -> str:
    if text is None:
        return canonical_json({"id": request_id, "text": None})
    return canonical_json({"id": request_id, "text": text,
                           "confidence": confidence, "bbox": bbox})


def encode_error(request_id: int | None, code: str, message: str) -> str:
    return canonical_json({"id": request_id,
                           "error": {"code": code, "message": message}})


def decode_response(line: str) -> dict:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProtocolError("response must be a JSON object")
    return raw


class _SubprocessTransport:
    """Child process speaking the protocol on its standard streams."""

    def __init__(self, command: str):
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,  # line buffered
            )
        except OSError as exc:
            raise BackendError(f"cannot start backend process {command!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise ProtocolError(f"backend process closed its input: {exc}") from exc

    def recv_line(self, timeout_ms: float) -> str:
        try:
            line = self._lines.get(timeout=timeout_ms / 1000.0)
        except queue.Empty:
            raise BackendTimeout(f"no response within {timeout_ms:.0f} ms") from None
        if line is None:
            code = self.proc.poll()
            raise ProtocolError(f"backend process exited (code {code})")
        return line.rstrip("\n")

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class _TcpTransport:
    """Socket peer at tcp:<host>:<port>."""

    def __init__(self, host: str, port: int):
        try:
            self.sock = socket.create_connection((host, port), timeout=5)
        except OSError as exc:
            raise BackendError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.file = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self.file.write(line + "\n")
            self.file.flush()
        except OSError as exc:
            raise ProtocolError(f"peer closed the connection: {exc}") from exc

    def recv_line(self, timeout_ms: float) -> str:
        self.sock.settimeout(timeout_ms / 1000.0)
        try:
            line = self.file.readline()
        except socket.timeout:
            raise BackendTimeout(f"no response within {timeout_ms:.0f} ms") from None
        except OSError as exc:
            raise ProtocolError(f"peer connection failed: {exc}") from exc
        if not line:
            raise ProtocolError("peer closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self.file.close()
            self.sock.close()
        except OSError:
            pass


class WireBackend:
    """Detector backend speaking the NDJSON protocol with a child process
    (any command line) or a TCP peer (endpoint ``tcp:<host>:<port>``).

    Requests carry the frame's file path, so frames must come from files.
    One request in flight at a time; pipelining stays off for determinism.
    """

    def __init__(self, endpoint: str, timeout_ms: float = DEFAULT_TIMEOUT_MS):
        if timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        self.timeout_ms = timeout_ms
        self._next_id = 0
        self._lock = threading.Lock()
        if endpoint.startswith("tcp:"):
            _, host, port = endpoint.split(":", 2)
            self.transport = _TcpTransport(host, int(port))
        else:
            self.transport = _SubprocessTransport(endpoint)

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def _round_trip(self, op: str, task: str | None, frame: FrameRecord) -> dict:
        path = frame.payload.source_path
        if path is None:
            raise BackendError(
                f"frame {frame.index} has no file path; the wire protocol exchanges paths")
        with self._lock:
            self._next_id += 1
            request_id = self._next_id
            self.transport.send_line(encode_request(request_id, op, task, path))
            raw = decode_response(self.transport.recv_line(self.timeout_ms))
        if raw.get("id") != request_id:
            raise ProtocolError(f"response id {raw.get('id')!r} != request id {request_id}")
        error = raw.get("error")
        if error is not None:
            if not isinstance(error, dict):
                raise ProtocolError("error field must be an object")
            raise BackendError(str(error.get("message", "backend error")),
                               code=str(error.get("code", "backend_error")))
        return raw

    def detect(self, frame: FrameRecord, task: str | None) -> list[Detection]:
        raw = self._round_trip("detect", task, frame)
        entries = raw.get("detections")
        if not isinstance(entries, list):
            raise ProtocolError("detect response is missing the detections list")
        dets = []
        for i, entry in enumerate(entries):
            try:
                bbox = BBox.from_list(entry["bbox"])
                det = Detection(image_id=frame.index,
                                class_id=int(entry["class_id"]),
                                bbox=bbox, score=float(entry["score"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"bad detection [{i}] in response: {exc}") from exc
            if bbox.x < 0 or bbox.y < 0 or bbox.x2 > frame.width or bbox.y2 > frame.height:
                raise BackendError(
                    f"detection [{i}] outside frame {frame.width}x{frame.height}")
            dets.append(det)
        return dets

    def ocr(self, frame: FrameRecord) -> OcrResult | None:
        raw = self._round_trip("ocr", None, frame)
        if "text" not in raw:
            raise ProtocolError("ocr response is missing the text field")
        if raw["text"] is None:
            return None
        try:
            bbox = BBox.from_list(raw["bbox"])
            result = OcrResult(text=str(raw["text"]),
                               confidence=float(raw["confidence"]), bbox=bbox)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad ocr response: {exc}") from exc
        if bbox.x < 0 or bbox.y < 0 or bbox.x2 > frame.width or bbox.y2 > frame.height:
            raise BackendError(f"ocr box outside frame {frame.width}x{frame.height}")
        return result


def wire_backend(endpoint: str, timeout_ms: float = DEFAULT_TIMEOUT_MS) -> WireBackend:
    return WireBackend(endpoint, timeout_ms=timeout_ms)
