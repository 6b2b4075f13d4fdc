"""Synthetic grounding records and scene layouts for property runs."""

from __future__ import annotations

import random

from groundkit.spans import GroundingRecord, TimeSpan


def synthetic_records(
    n: int = 1000,
    seed: int = 0,
    max_ratio: float = 0.5,
    duration_range: tuple[float, float] = (20.0, 200.0),
) -> list[GroundingRecord]:
    """Records whose gt length is a uniform fraction in (0, max_ratio] of the video.

    Times are rounded to 2 decimals to match the record schema.
    """
    rng = random.Random(seed)
    out = []
    for i in range(n):
        duration = round(rng.uniform(*duration_range), 2)
        while True:
            ratio = max_ratio * (1.0 - rng.random())  # (0, max_ratio]
            length = round(ratio * duration, 2)
            start = round(rng.uniform(0.0, duration - length), 2)
            end = min(round(start + length, 2), duration)
            if end > start:
                break
        out.append(GroundingRecord(f"syn{i:05d}", duration, f"synthetic query {i}", TimeSpan(start, end)))
    return out
