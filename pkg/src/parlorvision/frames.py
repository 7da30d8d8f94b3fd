"""Decoded-frame payloads and replayable frame streams.

The engine never touches pixel encodings itself: payloads crop and encode
themselves, so stored segments keep whatever representation the stream
delivered (raw arrays stay raw, PNG stays PNG) with no enhancement pass.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Protocol, runtime_checkable

import numpy as np

from .errors import ValidationError


@runtime_checkable
class ImagePayload(Protocol):
    """Opaque image handle: croppable, encodable, and byte-sizeable."""

    def crop(self, x: int, y: int, w: int, h: int) -> "ImagePayload":
        ...

    def encode(self) -> bytes:
        ...

    def byte_size(self) -> int:
        ...

    @property
    def source_path(self) -> str | None:
        ...


@dataclass(frozen=True)
class FrameRecord:
    """One decoded frame of a stream; indices are strictly increasing."""

    index: int
    width: int
    height: int
    payload: ImagePayload


class ArrayPayload:
    """Frame backed by an (H, W, C) or (H, W) uint8 array.

    Encoding is the raw C-order buffer, which keeps stored segments
    byte-deterministic across platforms and library versions.
    """

    def __init__(self, pixels: np.ndarray, source_path: str | None = None):
        if pixels.ndim not in (2, 3):
            raise ValueError(f"expected (H, W[, C]) array, got shape {pixels.shape}")
        self.pixels = np.ascontiguousarray(pixels)
        self._source_path = source_path

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def source_path(self) -> str | None:
        return self._source_path

    def crop(self, x: int, y: int, w: int, h: int) -> "ArrayPayload":
        return ArrayPayload(self.pixels[y:y + h, x:x + w])

    def encode(self) -> bytes:
        return self.pixels.tobytes()

    def byte_size(self) -> int:
        return int(self.pixels.nbytes)


class PillowPayload:
    """Frame backed by a PIL image; crops re-encode in the source format."""

    def __init__(self, image, source_path: str | None = None, image_format: str | None = None):
        self.image = image
        self._source_path = source_path
        self.image_format = image_format or image.format or "PNG"

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height

    @property
    def source_path(self) -> str | None:
        return self._source_path

    def crop(self, x: int, y: int, w: int, h: int) -> "PillowPayload":
        cropped = self.image.crop((x, y, x + w, y + h))
        return PillowPayload(cropped, image_format=self.image_format)

    def encode(self) -> bytes:
        buf = io.BytesIO()
        self.image.save(buf, format=self.image_format)
        return buf.getvalue()

    def byte_size(self) -> int:
        if self._source_path:
            try:
                return Path(self._source_path).stat().st_size
            except OSError:
                pass
        return len(self.encode())


def load_frame_stream(manifest_path: str | Path) -> Iterator[FrameRecord]:
    """Yield frames listed in a frames.jsonl manifest.

    Each line is {"index": int, "file": path-relative-to-manifest}; .npy
    files load as raw arrays, anything else goes through Pillow. Optional
    width/height fields are checked against the decoded frame.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    try:
        lines = manifest_path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read frame manifest: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            index = int(entry["index"])
            file_name = entry["file"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(
                f"{manifest_path}:{lineno}: bad frame entry: {exc}") from exc
        path = base / file_name
        frame = load_frame(path, index)
        for dim, got in (("width", frame.width), ("height", frame.height)):
            stated = entry.get(dim)
            if stated is not None and stated != got:
                raise ValidationError(
                    f"{manifest_path}:{lineno}: stated {dim} {stated} != decoded {got}")
        yield frame


def load_frame(path: str | Path, index: int) -> FrameRecord:
    path = Path(path)
    if path.suffix == ".npy":
        try:
            pixels = np.load(path)
        except (OSError, ValueError) as exc:
            raise ValidationError(f"cannot load frame {path}: {exc}") from exc
        payload = ArrayPayload(pixels, source_path=str(path))
    else:
        from PIL import Image, UnidentifiedImageError

        try:
            image = Image.open(path)
            image.load()
        except (OSError, UnidentifiedImageError) as exc:
            raise ValidationError(f"cannot load frame {path}: {exc}") from exc
        payload = PillowPayload(image, source_path=str(path))
    return FrameRecord(index=index, width=payload.width, height=payload.height,
                       payload=payload)
