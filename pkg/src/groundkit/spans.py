"""Time spans, coarse categories, IoU and metric aggregation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from groundkit.errors import EmptyInput, OutOfWindow, ZeroLengthInput

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7)


@dataclass(frozen=True)
class TimeSpan:
    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValueError(f"non-finite span endpoint: [{self.start_s}, {self.end_s}]")
        if self.start_s < 0:
            raise ValueError(f"negative span start: {self.start_s}")
        if self.end_s < self.start_s:
            raise ValueError(f"invalid span: end_s({self.end_s}) < start_s({self.start_s})")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    @property
    def mid(self) -> float:
        return (self.start_s + self.end_s) / 2

    def contains(self, other: TimeSpan) -> bool:
        return self.start_s <= other.start_s and other.end_s <= self.end_s

    def intersection(self, other: TimeSpan) -> Optional[TimeSpan]:
        """Overlap of two spans, or None when they share no positive-length part."""
        lo = max(self.start_s, other.start_s)
        hi = min(self.end_s, other.end_s)
        if hi <= lo:
            return None
        return TimeSpan(lo, hi)

    def to_list(self) -> list[float]:
        return [self.start_s, self.end_s]

    @classmethod
    def from_seq(cls, pair: Sequence[float]) -> TimeSpan:
        if len(pair) != 2:
            raise ValueError(f"expected [start, end], got {pair!r}")
        return cls(float(pair[0]), float(pair[1]))

    def __str__(self) -> str:
        return f"[{self.start_s:g}, {self.end_s:g}]"


def require_positive(*spans: TimeSpan) -> None:
    for s in spans:
        if s.length <= 0:
            raise ZeroLengthInput(f"span {s} has zero length")


class Category(enum.Enum):
    """Coarse position of a segment inside a window.

    Member order is the canonical order used for tie-breaking and for the
    unshuffled option list.
    """

    BEGINNING = "beginning"
    MIDDLE = "middle"
    END = "end"
    THROUGHOUT = "throughout"

    @classmethod
    def parse(cls, value: str) -> Category:
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"unknown category {value!r}") from None


CATEGORIES: tuple[Category, ...] = tuple(Category)


def categorize(segment: TimeSpan, window: TimeSpan) -> Category:
    """Place ``segment`` inside ``window`` as beginning / middle / end / throughout.

    Throughout wins when the segment is strictly longer than half the window.
    Otherwise a segment ending at or before the midpoint is Beginning, one
    starting at or after it is End, and anything straddling it is Middle.
    """
    require_positive(segment, window)
    if not window.contains(segment):
        raise OutOfWindow(f"segment {segment} is not inside window {window}")
    # compare doubled quantities so the midpoint never gets rounded
    if 2 * segment.length > window.length:
        return Category.THROUGHOUT
    twice_mid = window.start_s + window.end_s
    if 2 * segment.end_s <= twice_mid:
        return Category.BEGINNING
    if 2 * segment.start_s >= twice_mid:
        return Category.END
    return Category.MIDDLE


def iou(a: TimeSpan, b: TimeSpan) -> float:
    require_positive(a, b)
    inter = max(0.0, min(a.end_s, b.end_s) - max(a.start_s, b.start_s))
    union = max(a.end_s, b.end_s) - min(a.start_s, b.start_s)
    if inter == 0.0:
        return 0.0
    if a == b:
        return 1.0
    # distinct spans can round to a ratio of 1.0; keep "1 iff equal" exact
    return min(inter / union, math.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class GroundingRecord:
    id: str
    video_duration_s: float
    query: str
    gt_span: TimeSpan
    pos_span: Optional[TimeSpan] = None
    neg_span: Optional[TimeSpan] = None

    def __post_init__(self) -> None:
        video = TimeSpan(0.0, self.video_duration_s)
        if not video.contains(self.gt_span):
            raise OutOfWindow(f"record {self.id}: gt {self.gt_span} outside [0, {self.video_duration_s}]")
        if self.pos_span is not None and self.neg_span is not None:
            if not (self.neg_span.contains(self.pos_span) and video.contains(self.neg_span)):
                raise OutOfWindow(f"record {self.id}: expected pos ⊆ neg ⊆ video")

    @property
    def video_span(self) -> TimeSpan:
        return TimeSpan(0.0, self.video_duration_s)

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "duration": self.video_duration_s,
            "query": self.query,
            "gt": self.gt_span.to_list(),
        }
        if self.pos_span is not None:
            out["pos"] = self.pos_span.to_list()
        if self.neg_span is not None:
            out["neg"] = self.neg_span.to_list()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> GroundingRecord:
        return cls(
            id=str(obj["id"]),
            video_duration_s=float(obj["duration"]),
            query=str(obj["query"]),
            gt_span=TimeSpan.from_seq(obj["gt"]),
            pos_span=TimeSpan.from_seq(obj["pos"]) if obj.get("pos") is not None else None,
            neg_span=TimeSpan.from_seq(obj["neg"]) if obj.get("neg") is not None else None,
        )


@dataclass(frozen=True)
class MetricsReport:
    mIoU: float
    recall_at: dict[float, float]
    n_examples: int
    n_failed: int
    mode: str = "strict"
    inclusive: bool = False
    ious: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def to_json(self) -> dict:
        return {
            "mIoU": self.mIoU,
            "recall_at": {f"{t:g}": r for t, r in self.recall_at.items()},
            "n_examples": self.n_examples,
            "n_failed": self.n_failed,
            "mode": self.mode,
            "inclusive": self.inclusive,
        }

    def as_percent_row(self) -> str:
        cells = [self.mIoU] + [self.recall_at[t] for t in sorted(self.recall_at)]
        return "/".join(f"{100 * c:.1f}" for c in cells)


def aggregate_metrics(
    pairs: Iterable[tuple[Optional[TimeSpan], TimeSpan]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    mode: str = "strict",
    inclusive: bool = False,
) -> MetricsReport:
    """mIoU and recall at IoU thresholds.

    A prediction of ``None`` is a failure. In ``strict`` mode it counts as IoU 0;
    in ``formatted-only`` mode it is left out of the averages (but still counted
    in ``n_failed``). Recall uses ``IoU > t`` unless ``inclusive`` is set.
    """
    if mode not in ("strict", "formatted-only"):
        raise ValueError(f"unknown metrics mode {mode!r}")
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no predictions to aggregate")
    ious = []
    n_failed = 0
    for pred, gt in pairs:
        require_positive(gt)
        if pred is None:
            n_failed += 1
            if mode == "strict":
                ious.append(0.0)
            continue
        ious.append(iou(pred, gt) if pred.length > 0 else 0.0)
    if not ious:
        raise EmptyInput("every prediction failed; nothing to score in formatted-only mode")
    n = len(ious)
    if inclusive:
        recall = {float(t): sum(v >= t for v in ious) / n for t in thresholds}
    else:
        recall = {float(t): sum(v > t for v in ious) / n for t in thresholds}
    return MetricsReport(
        mIoU=math.fsum(ious) / n,
        recall_at=recall,
        n_examples=len(pairs),
        n_failed=n_failed,
        mode=mode,
        inclusive=inclusive,
        ious=tuple(ious),
    )
