"""Byte accounting: raw video vs. intermediates vs. stored keyframe records.

Single writer (the extractor), any number of readers; totals are read under
the same lock that guards appends. Sizes are reported in decimal SI units.
The headline reduction ratio compares raw video to keyframe records only,
since intermediates are removable and should not mask the saving.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

CATEGORIES = ("raw_video", "intermediate", "keyframe_record")


@dataclass(frozen=True)
class LedgerEntry:
    category: str
    path: str
    bytes: int

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValidationError(
                f"unknown ledger category {self.category!r}; expected one of {CATEGORIES}")
        if self.bytes < 0:
            raise ValidationError(f"negative byte count {self.bytes} for {self.path!r}")


@dataclass(frozen=True)
class LedgerReport:
    totals: dict[str, int]
    counts: dict[str, int]
    averages: dict[str, float | None]
    reduction_ratio: float | None

    def to_dict(self) -> dict:
        return {
            "totals": dict(self.totals),
            "counts": dict(self.counts),
            "averages": dict(self.averages),
            "reduction_ratio": self.reduction_ratio,
        }


class StorageLedger:
    def __init__(self):
        self._entries: list[LedgerEntry] = []
        self._totals = {c: 0 for c in CATEGORIES}
        self._counts = {c: 0 for c in CATEGORIES}
        self._lock = threading.Lock()

    def record(self, entry: LedgerEntry) -> None:
        """Append an entry; totals update atomically w.r.t. readers."""
        with self._lock:
            self._entries.append(entry)
            self._totals[entry.category] += entry.bytes
            self._counts[entry.category] += 1

    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def report(self) -> LedgerReport:
        with self._lock:
            totals = dict(self._totals)
            counts = dict(self._counts)
        averages = {
            c: (totals[c] / counts[c]) if counts[c] else None for c in CATEGORIES
        }
        if totals["keyframe_record"] > 0:
            ratio = totals["raw_video"] / totals["keyframe_record"]
        else:
            ratio = None
        return LedgerReport(totals=totals, counts=counts, averages=averages,
                            reduction_ratio=ratio)


def load_entries(path: str | Path) -> list[LedgerEntry]:
    """Read a JSONL file of {category, path, bytes} entries."""
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            entry = LedgerEntry(category=raw["category"], path=raw["path"],
                                bytes=int(raw["bytes"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad ledger entry: {exc}") from exc
        entries.append(entry)
    return entries


_SI_UNITS = (("TB", 10 ** 12), ("GB", 10 ** 9), ("MB", 10 ** 6), ("KB", 10 ** 3))


def format_si(n_bytes: int | float) -> str:
    """Format a byte count with decimal SI units (10^3 steps)."""
    for unit, scale in _SI_UNITS:
        if n_bytes >= scale:
            return f"{n_bytes / scale:.2f} {unit}"
    return f"{int(n_bytes)} B"


def render_table(report: LedgerReport) -> str:
    """Fixed-width ledger table with SI-formatted sizes."""
    rows = [("category", "entries", "total", "average")]
    for category in CATEGORIES:
        count = report.counts[category]
        avg = report.averages[category]
        rows.append((
            category,
            str(count),
            format_si(report.totals[category]),
            format_si(avg) if avg is not None else "-",
        ))
    ratio = (f"{report.reduction_ratio:.2f}x"
             if report.reduction_ratio is not None else "-")
    rows.append(("reduction_ratio", "", ratio, ""))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(4)))
    return "\n".join(lines)
