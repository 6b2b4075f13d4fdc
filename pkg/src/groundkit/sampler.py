"""Random cropping of mined segments into training samples, plus prompt rendering."""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from groundkit.engine import DEFAULT_NUM_FRAMES, FramePlan, frame_plan
from groundkit.errors import ZeroLengthInput
from groundkit.miner import MinedSegment
from groundkit.prompts import (
    PromptBank,
    RenderedPrompt,
    captioning_prompt,
    default_bank,
    grounding_prompt,
    shuffled_order,
)
from groundkit.spans import CATEGORIES, Category, TimeSpan, categorize, require_positive

MAX_REJECTION_TRIES = 64


class CropMode(str, enum.Enum):
    UNIFORM = "uniform"
    BALANCED = "balanced"


@dataclass(frozen=True)
class CropSample:
    window: TimeSpan
    answer: Category
    record_ref: str
    option_order: tuple[Category, ...]
    seed: int


def derive_seed(global_seed: int, *parts: object) -> int:
    """Stable 63-bit seed from a global seed and identifying parts (record id, epoch, ...)."""
    h = hashlib.sha256(repr((int(global_seed),) + tuple(str(p) for p in parts)).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big") >> 1


def _corners(record: MinedSegment) -> tuple[float, float, float, float]:
    pos, neg = record.pos_span, record.neg_span
    require_positive(pos, neg)
    if not neg.contains(pos):
        raise ValueError(f"{record.segment_id}: positive span {pos} not inside negative span {neg}")
    return neg.start_s, pos.start_s, pos.end_s, neg.end_s


def feasible_categories(record: MinedSegment) -> frozenset[Category]:
    """Categories reachable by some crop with start in [neg_start, pos_start] and end in [pos_end, neg_end]."""
    a, p, q, b = _corners(record)
    pos = record.pos_span
    out = {Category.THROUGHOUT}  # the tightest crop, [pos_start, pos_end]
    # start + end is largest at (p, b) and smallest at (a, q)
    if categorize(pos, TimeSpan(p, b)) is Category.BEGINNING:
        out.add(Category.BEGINNING)
    if categorize(pos, TimeSpan(a, q)) is Category.END:
        out.add(Category.END)
    # Middle needs start + end strictly inside (2p, 2q) with crop length >= 2 * pos length.
    # For a fixed sum the widest crop has length min(sum - 2a, 2b - sum).
    two_len = 2 * (q - p)
    lo = max(a + q, 2 * a + two_len)
    hi = min(p + b, 2 * b - two_len)
    lower = max(lo, 2 * p)
    upper = min(hi, 2 * q)
    if lower < upper or (lo == hi and 2 * p < lo < 2 * q):
        out.add(Category.MIDDLE)
    return frozenset(out)


def _half_planes(cat: Category, p: float, q: float) -> list[tuple[float, float, float]]:
    """Constraints ``x * start + y * end <= z`` that carve ``cat`` out of the crop rectangle."""
    two_len = 2 * (q - p)
    if cat is Category.THROUGHOUT:
        return [(-1.0, 1.0, two_len)]
    short = (1.0, -1.0, -two_len)
    if cat is Category.BEGINNING:
        return [short, (-1.0, -1.0, -2 * q)]
    if cat is Category.END:
        return [short, (1.0, 1.0, 2 * p)]
    return [short, (-1.0, -1.0, -2 * p), (1.0, 1.0, 2 * q)]


def _clip(poly: list[tuple[float, float]], x: float, y: float, z: float) -> list[tuple[float, float]]:
    out = []
    for i, cur in enumerate(poly):
        prev = poly[i - 1]
        fc = x * cur[0] + y * cur[1] - z
        fp = x * prev[0] + y * prev[1] - z
        if (fc <= 0) != (fp <= 0):
            t = fp / (fp - fc)
            out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
        if fc <= 0:
            out.append(cur)
    return out


def category_region(cat: Category, a: float, p: float, q: float, b: float) -> list[tuple[float, float]]:
    """Convex polygon of (start, end) crops realising ``cat``; empty if none."""
    poly = [(a, q), (p, q), (p, b), (a, b)]
    for plane in _half_planes(cat, p, q):
        poly = _clip(poly, *plane)
        if not poly:
            break
    return poly


def _sample_polygon(poly: list[tuple[float, float]], rng: random.Random) -> tuple[float, float]:
    """Uniform point in a convex polygon (fan triangulation); a vertex average if it has no area."""
    (x0, y0) = poly[0]
    tris = []
    for (x1, y1), (x2, y2) in zip(poly[1:], poly[2:]):
        area = abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        tris.append((area, (x1, y1), (x2, y2)))
    total = sum(t[0] for t in tris)
    if total <= 0:
        return sum(v[0] for v in poly) / len(poly), sum(v[1] for v in poly) / len(poly)
    pick = rng.random() * total
    for area, (x1, y1), (x2, y2) in tris:
        pick -= area
        if pick <= 0:
            break
    u, v = rng.random(), rng.random()
    if u + v > 1:
        u, v = 1 - u, 1 - v
    return x0 + u * (x1 - x0) + v * (x2 - x0), y0 + u * (y1 - y0) + v * (y2 - y0)


def sample_crop(
    record: MinedSegment,
    seed: int,
    mode: CropMode | str = CropMode.UNIFORM,
) -> CropSample:
    """Draw one training window that contains the positive span and stays inside the negative span.

    Uniform mode draws start and end independently. Balanced mode first picks a
    target category uniformly among the feasible ones, then draws a crop
    uniformly from that category's region; a draw that rounding pushes off
    target is redrawn, and after 64 misses a uniform crop is used instead.
    """
    mode = CropMode(mode)
    a, p, q, b = _corners(record)
    rng = random.Random(seed)
    if a == p and q == b:
        window = record.neg_span
        return CropSample(window, Category.THROUGHOUT, record.segment_id, shuffled_order(rng), seed)

    window = None
    if mode is CropMode.BALANCED:
        feasible = [c for c in CATEGORIES if c in feasible_categories(record)]
        target = rng.choice(feasible)
        region = category_region(target, a, p, q, b)
        for _ in range(MAX_REJECTION_TRIES if region else 0):
            start, end = _sample_polygon(region, rng)
            # clamp rounding spill-over; the categorize check rejects anything off-target
            cand = TimeSpan(min(max(start, a), p), min(max(end, q), b))
            if categorize(record.pos_span, cand) is target:
                window = cand
                break
    if window is None:
        window = TimeSpan(rng.uniform(a, p), rng.uniform(q, b))
    answer = categorize(record.pos_span, window)
    return CropSample(window, answer, record.segment_id, shuffled_order(rng), seed)


def render_grounding_prompt(
    sample: CropSample,
    query: str,
    bank: Optional[PromptBank] = None,
    frames: Optional[FramePlan] = None,
    seed: int = 0,
) -> RenderedPrompt:
    """Multiple-choice grounding prompt for a crop; timestamps are relative to the crop start."""
    bank = bank or default_bank()
    frames = frames or frame_plan(sample.window, DEFAULT_NUM_FRAMES)
    return grounding_prompt(
        bank, query, sample.option_order, frames.relative(), random.Random(seed), answer=sample.answer
    )


def render_captioning_prompt(
    sample: CropSample,
    caption: str,
    bank: Optional[PromptBank] = None,
    frames: Optional[FramePlan] = None,
    seed: int = 0,
) -> RenderedPrompt:
    bank = bank or default_bank()
    frames = frames or frame_plan(sample.window, DEFAULT_NUM_FRAMES)
    return captioning_prompt(bank, caption, sample.answer, frames.relative(), random.Random(seed))


def emit_record(sample: CropSample, rendered: RenderedPrompt) -> dict:
    return {
        "segment_id": sample.record_ref,
        "window": sample.window.to_list(),
        "task": rendered.task,
        "prompt": rendered.prompt,
        "answer": rendered.answer,
        "loss_span": list(rendered.loss_span),
        "option_order": [c.value for c in sample.option_order],
        "seed": sample.seed,
    }


def generate_samples(
    records: Iterable[MinedSegment],
    global_seed: int,
    epochs: int = 1,
    mode: CropMode | str = CropMode.BALANCED,
    num_frames: int = DEFAULT_NUM_FRAMES,
    tasks: Sequence[str] = ("grounding", "captioning"),
    bank: Optional[PromptBank] = None,
) -> list[dict]:
    """One crop per record, epoch and task, seeded per record so order never matters."""
    bank = bank or default_bank()
    out = []
    for epoch in range(epochs):
        for rec in records:
            for task in tasks:
                seed = derive_seed(global_seed, rec.segment_id, epoch, task)
                try:
                    sample = sample_crop(rec, seed, mode)
                except ZeroLengthInput:
                    continue
                frames = frame_plan(sample.window, num_frames)
                if task == "grounding":
                    rendered = render_grounding_prompt(sample, rec.caption, bank, frames, seed)
                elif task == "captioning":
                    rendered = render_captioning_prompt(sample, rec.caption, bank, frames, seed)
                else:
                    raise ValueError(f"unknown task {task!r}")
                out.append(emit_record(sample, rendered))
    return out
