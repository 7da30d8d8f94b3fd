"""Pixel-space geometry primitives shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box as (left, top, width, height) in pixels.

    Width and height must be non-negative; a degenerate box (w == 0 or
    h == 0) has zero area and zero overlap with everything.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box dimensions: w={self.w}, h={self.h}")

    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values) -> "BBox":
        if len(values) != 4:
            raise ValueError(f"bbox needs 4 values, got {len(values)}")
        x, y, w, h = (float(v) for v in values)
        return cls(x, y, w, h)


@dataclass(frozen=True)
class Detection:
    """A scored model prediction on one image."""

    image_id: int | str
    class_id: int
    bbox: BBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GtAnnotation:
    """A ground-truth box; ids are unique within a dataset."""

    id: int
    image_id: int | str
    class_id: int
    bbox: BBox
