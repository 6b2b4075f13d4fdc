"""Converters from public benchmark annotation formats to grounding-record JSONL.

Charades-STA ships sentence annotations as ``<video> <start> <end>##<sentence>``
lines; video durations come from the Charades ``Charades_v1_<split>.csv``
(column ``length``). ActivityNet-Captions ships one JSON object keyed by
video id with ``duration``, ``timestamps`` and ``sentences``.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterator, Optional

from groundkit.spans import GroundingRecord, TimeSpan

log = logging.getLogger(__name__)


def _clip(start: float, end: float, duration: float) -> Optional[TimeSpan]:
    start = min(max(0.0, start), duration)
    end = min(max(0.0, end), duration)
    if end <= start:
        return None
    return TimeSpan(start, end)


def read_charades_durations(csv_path: Path | str) -> dict[str, float]:
    with open(csv_path, newline="", encoding="utf-8") as f:
        return {row["id"]: float(row["length"]) for row in csv.DictReader(f)}


def charades_sta_records(
    annotations: Path | str,
    durations: dict[str, float],
) -> Iterator[GroundingRecord]:
    """Charades-STA sentence annotations; spans are clipped to the video length."""
    with open(annotations, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            head, sentence = line.split("##", 1)
            vid, start, end = head.split()
            if vid not in durations:
                log.warning("charades: no duration for %s, skipping", vid)
                continue
            duration = durations[vid]
            gt = _clip(float(start), float(end), duration)
            if gt is None:
                log.warning("charades: empty span on line %d, skipping", lineno + 1)
                continue
            yield GroundingRecord(f"{vid}_{lineno}", duration, sentence.strip(), gt)


def activitynet_records(annotations: Path | str) -> Iterator[GroundingRecord]:
    with open(annotations, encoding="utf-8") as f:
        data = json.load(f)
    for vid in data:
        item = data[vid]
        duration = float(item["duration"])
        for k, ((start, end), sentence) in enumerate(zip(item["timestamps"], item["sentences"])):
            gt = _clip(float(start), float(end), duration)
            if gt is None:
                log.warning("activitynet: empty span %s#%d, skipping", vid, k)
                continue
            yield GroundingRecord(f"{vid}_{k}", duration, sentence.strip(), gt)


def mean_gt_length(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("no records")
    return sum(r.gt_span.length for r in records) / len(records)
