"""Recursive grounding, its upper bound, the random baseline and answer parsing."""

from __future__ import annotations

import enum
import random
import re
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from groundkit.errors import MalformedAnswer, OracleFailure, ZeroLengthInput
from groundkit.prompts import LETTERS, default_bank, lettered, shuffled_order
from groundkit.spans import CATEGORIES, Category, GroundingRecord, TimeSpan, require_positive

DEFAULT_NUM_FRAMES = 12


def window_update(window: TimeSpan, choice: Category) -> TimeSpan:
    """Narrow ``window`` according to one coarse choice.

    Arithmetic mirrors the reference loop exactly (``end -= L / 2`` and so on)
    so that windows computed here and in the vectorised upper bound agree to
    the bit.
    """
    require_positive(window)
    start, end = window.start_s, window.end_s
    clip_length = end - start
    if choice is Category.THROUGHOUT:
        return window
    if choice is Category.BEGINNING:
        end -= clip_length / 2
    elif choice is Category.END:
        start += clip_length / 2
    else:
        start += clip_length / 4
        end -= clip_length / 4
    return TimeSpan(start, end)


@dataclass(frozen=True)
class FramePlan:
    window: TimeSpan
    timestamps: tuple[float, ...]

    @property
    def num_frames(self) -> int:
        return len(self.timestamps)

    def relative(self) -> tuple[float, ...]:
        """Timestamps measured from the start of the window (what a clip-level model sees)."""
        return tuple(t - self.window.start_s for t in self.timestamps)


def frame_plan(window: TimeSpan, num_frames: int = DEFAULT_NUM_FRAMES) -> FramePlan:
    """Midpoints of ``num_frames`` equal bins covering ``window``."""
    require_positive(window)
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")
    step = window.length / num_frames
    ts = tuple(window.start_s + (i + 0.5) * step for i in range(num_frames))
    return FramePlan(window, ts)


class ChoiceOracle(Protocol):
    concurrent_safe: bool

    def choose(
        self,
        window: TimeSpan,
        frames: FramePlan,
        query: str,
        options: Sequence[tuple[str, Category]],
    ) -> Category: ...


@dataclass(frozen=True)
class Round:
    window: TimeSpan
    frame_timestamps: tuple[float, ...]
    option_order: tuple[Category, ...]
    choice: Category


class Termination(str, enum.Enum):
    THROUGHOUT_BREAK = "ThroughoutBreak"
    MAX_ROUNDS = "MaxRounds"
    ORACLE_ERROR = "OracleError"


@dataclass
class GroundingTrace:
    rounds: list[Round] = field(default_factory=list)
    final_window: Optional[TimeSpan] = None
    terminated_by: Optional[Termination] = None
    failure: Optional[str] = None

    @property
    def choices(self) -> list[Category]:
        return [r.choice for r in self.rounds]

    def to_json(self) -> list[dict]:
        return [{"window": r.window.to_list(), "choice": r.choice.value} for r in self.rounds]


def recursive_ground(
    oracle: ChoiceOracle,
    record: GroundingRecord,
    max_rounds: int,
    num_frames: int = DEFAULT_NUM_FRAMES,
    seed: int = 0,
) -> tuple[TimeSpan, GroundingTrace]:
    """Binary-search style grounding driven by an oracle's coarse answers.

    Starts from the whole video and asks the oracle once per round, shuffling
    the option letters with ``seed``. A Throughout answer stops the search.
    On ``OracleFailure`` the partial trace is attached to the exception.
    """
    if max_rounds < 0:
        raise ValueError("max_rounds must be >= 0")
    window = record.video_span
    require_positive(window)
    rng = random.Random(seed)
    trace = GroundingTrace(terminated_by=Termination.MAX_ROUNDS)
    for _ in range(max_rounds):
        plan = frame_plan(window, num_frames)
        order = shuffled_order(rng)
        try:
            choice = oracle.choose(window, plan, record.query, lettered(order))
        except OracleFailure as exc:
            trace.final_window = window
            trace.terminated_by = Termination.ORACLE_ERROR
            trace.failure = exc.kind
            exc.trace = trace
            raise
        trace.rounds.append(Round(window, plan.timestamps, order, choice))
        if choice is Category.THROUGHOUT:
            trace.terminated_by = Termination.THROUGHOUT_BREAK
            break
        window = window_update(window, choice)
    trace.final_window = window
    return window, trace


# ---------------------------------------------------------------------------
# upper bound


def choice_sequences(max_rounds: int) -> list[tuple[Category, ...]]:
    """Every distinct answer sequence, in lexicographic (B, M, E, T) order.

    A sequence either has ``max_rounds`` non-Throughout answers or ends with
    Throughout, so no sequence is a prefix of another.
    """
    out: list[tuple[Category, ...]] = []

    def visit(prefix: tuple[Category, ...]) -> None:
        if len(prefix) == max_rounds:
            out.append(prefix)
            return
        for c in CATEGORIES:
            if c is Category.THROUGHOUT:
                out.append(prefix + (c,))
            else:
                visit(prefix + (c,))

    visit(())
    return out


def _windows_for(durations: np.ndarray, sequences: Sequence[tuple[Category, ...]]):
    """Start/end arrays of shape (n_records, n_sequences), using window_update's arithmetic."""
    n = len(durations)
    starts = np.empty((n, len(sequences)))
    ends = np.empty((n, len(sequences)))
    cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {(): (np.zeros(n), durations.astype(float))}
    for j, seq in enumerate(sequences):
        steps = seq[:-1] if seq and seq[-1] is Category.THROUGHOUT else seq
        for k in range(1, len(steps) + 1):
            key = steps[:k]
            if key in cache:
                continue
            s, e = cache[key[:-1]]
            clip_length = e - s
            c = key[-1]
            if c is Category.BEGINNING:
                s, e = s, e - clip_length / 2
            elif c is Category.END:
                s, e = s + clip_length / 2, e
            else:
                s, e = s + clip_length / 4, e - clip_length / 4
            cache[key] = (s, e)
        starts[:, j], ends[:, j] = cache[steps]
    return starts, ends


def _iou_matrix(starts, ends, gt_s, gt_e) -> np.ndarray:
    gs = gt_s[:, None]
    ge = gt_e[:, None]
    inter = np.maximum(0.0, np.minimum(ends, ge) - np.maximum(starts, gs))
    union = np.maximum(ends, ge) - np.minimum(starts, gs)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(inter > 0, inter / union, 0.0)
    equal = (starts == gs) & (ends == ge)
    ratio = np.minimum(ratio, np.nextafter(1.0, 0.0))
    return np.where(equal, 1.0, ratio)


@dataclass(frozen=True)
class UpperboundResult:
    best_span: TimeSpan
    best_iou: float
    choices: tuple[Category, ...]


def upperbound_batch(records: Sequence[GroundingRecord], max_rounds: int) -> list[UpperboundResult]:
    """Best reachable window per record over all answer sequences of length <= max_rounds."""
    if max_rounds < 0:
        raise ValueError("max_rounds must be >= 0")
    if not records:
        return []
    for r in records:
        require_positive(r.video_span, r.gt_span)
    seqs = choice_sequences(max_rounds)
    durations = np.array([r.video_duration_s for r in records], dtype=float)
    gt_s = np.array([r.gt_span.start_s for r in records], dtype=float)
    gt_e = np.array([r.gt_span.end_s for r in records], dtype=float)
    starts, ends = _windows_for(durations, seqs)
    ious = _iou_matrix(starts, ends, gt_s, gt_e)
    best = np.argmax(ious, axis=1)  # first maximum = lexicographically earliest
    out = []
    for i, j in enumerate(best):
        out.append(
            UpperboundResult(
                TimeSpan(float(starts[i, j]), float(ends[i, j])),
                float(ious[i, j]),
                seqs[j],
            )
        )
    return out


def upperbound(record: GroundingRecord, max_rounds: int) -> tuple[TimeSpan, float]:
    res = upperbound_batch([record], max_rounds)[0]
    return res.best_span, res.best_iou


def random_baseline(record: GroundingRecord, span_len: float, seed: int = 0) -> TimeSpan:
    """A span of ``span_len`` seconds placed uniformly at random inside the video."""
    if span_len <= 0:
        raise ZeroLengthInput("span_len must be positive")
    duration = record.video_duration_s
    rng = random.Random(seed)
    start = rng.uniform(0.0, max(0.0, duration - span_len))
    end = min(start + min(span_len, duration), duration)
    return TimeSpan(start, end)


# ---------------------------------------------------------------------------
# answer formats


class Representation(str, enum.Enum):
    COARSE = "coarse"
    FRAME = "frame"
    SECOND = "second"


_LETTER_RE = re.compile(r"\(\s*([A-Da-d])\s*\)")
_FRAME_RE = re.compile(r"\bfrom\s+frame\s+(\d+)\s+to\s+frame\s+(\d+)\b", re.IGNORECASE)
_NUM = r"(\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)"
_SECOND_RE = re.compile(rf"\bfrom\s+second\s+{_NUM}\s+to\s+second\s+{_NUM}", re.IGNORECASE)

# the body text writes "In the middle", the appendix options say "At the middle"
_STATEMENT_PATTERNS = {
    Category.BEGINNING: re.compile(r"\bat the beginning of the video\b", re.IGNORECASE),
    Category.MIDDLE: re.compile(r"\b(?:at|in) the middle of the video\b", re.IGNORECASE),
    Category.END: re.compile(r"\bat the end of the video\b", re.IGNORECASE),
    Category.THROUGHOUT: re.compile(r"\bthroughout the entire video\b", re.IGNORECASE),
}


def _parse_coarse(text: str, options: Optional[Sequence[tuple[str, Category]]]) -> Category:
    letters = {m.group(1).upper() for m in _LETTER_RE.finditer(text)}
    found = {c for c, pat in _STATEMENT_PATTERNS.items() if pat.search(text)}
    if letters:
        if len(letters) > 1:
            raise MalformedAnswer(f"several option letters in {text!r}")
        if options is None:
            raise MalformedAnswer("letter answer without an option mapping")
        choice = dict(options)[letters.pop()]
        if found and found != {choice}:
            raise MalformedAnswer(f"option letter contradicts its statement in {text!r}")
        return choice
    if len(found) == 1:
        return found.pop()
    if found:
        raise MalformedAnswer(f"ambiguous statements in {text!r}")
    raise MalformedAnswer(f"no option letter or statement in {text!r}")


def parse_answer(
    text: str,
    representation: Union[Representation, str],
    *,
    options: Optional[Sequence[tuple[str, Category]]] = None,
    plan: Optional[FramePlan] = None,
    window: Optional[TimeSpan] = None,
) -> Union[Category, TimeSpan]:
    """Turn model output into a category (coarse) or a span (frame / second level).

    Frame indices are 0-based and map to the frame timestamps in ``plan``.
    Second-level spans are clipped to ``window`` when one is given. Anything
    that cannot be read, or that yields an empty span, raises MalformedAnswer.
    """
    rep = Representation(representation)
    if not isinstance(text, str):
        raise MalformedAnswer(f"answer is not text: {text!r}")
    if rep is Representation.COARSE:
        return _parse_coarse(text, options)
    if rep is Representation.FRAME:
        if plan is None:
            raise ValueError("frame-level parsing needs the frame plan")
        m = _FRAME_RE.search(text)
        if m is None:
            raise MalformedAnswer(f"no frame range in {text!r}")
        i, j = int(m.group(1)), int(m.group(2))
        n = plan.num_frames
        if not (0 <= i < n and 0 <= j < n):
            raise MalformedAnswer(f"frame index out of range 0..{n - 1}: {i}, {j}")
        if i >= j:
            raise MalformedAnswer(f"frame range is empty or reversed: {i} to {j}")
        return TimeSpan(plan.timestamps[i], plan.timestamps[j])
    m = _SECOND_RE.search(text)
    if m is None:
        raise MalformedAnswer(f"no second range in {text!r}")
    a, b = float(m.group(1)), float(m.group(2))
    if a >= b:
        raise MalformedAnswer(f"second range is empty or reversed: {a} to {b}")
    if window is not None:
        a, b = max(a, window.start_s), min(b, window.end_s)
        if a >= b:
            raise MalformedAnswer(f"second range falls outside window {window}")
    return TimeSpan(a, b)


def _fmt_seconds(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def render_answer(
    value: Union[Category, tuple[int, int], TimeSpan],
    representation: Union[Representation, str],
    *,
    options: Optional[Sequence[tuple[str, Category]]] = None,
) -> str:
    """Inverse of parse_answer: the text a well-behaved model would emit."""
    rep = Representation(representation)
    if rep is Representation.COARSE:
        order = [c for _, c in options] if options is not None else list(CATEGORIES)
        letter = LETTERS[order.index(value)]
        return f"({letter}) {default_bank().statement(value)}"
    if rep is Representation.FRAME:
        i, j = value
        return f"From frame {i} to frame {j}."
    return f"From second {_fmt_seconds(value.start_s)} to second {_fmt_seconds(value.end_s)}."
