"""JSONL reading and writing for records, scenes, predictions and samples."""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator

from groundkit.miner import MinedSegment, SceneRecord
from groundkit.spans import GroundingRecord


def iter_jsonl(path: Path | str) -> Iterator[dict]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(path: Path | str, rows: Iterable[dict]) -> int:
    n = 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(dumps(row))
            f.write("\n")
            n += 1
    return n


def read_records(path: Path | str) -> list[GroundingRecord]:
    return [GroundingRecord.from_json(obj) for obj in iter_jsonl(path)]


def write_records(path: Path | str, records: Iterable[GroundingRecord]) -> int:
    return write_jsonl(path, (r.to_json() for r in records))


def read_mined(path: Path | str) -> list[MinedSegment]:
    return [MinedSegment.from_json(obj) for obj in iter_jsonl(path)]


def read_scenes(path: Path | str) -> dict[str, list[SceneRecord]]:
    """Scenes grouped by video id, each list sorted by start time."""
    videos: dict[str, list[SceneRecord]] = defaultdict(list)
    for obj in iter_jsonl(path):
        scene = SceneRecord.from_json(obj)
        videos[scene.video_id].append(scene)
    for scenes in videos.values():
        scenes.sort(key=lambda s: s.span.start_s)
    return dict(videos)
