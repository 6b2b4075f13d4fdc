"""Corpus construction over precomputed scene embeddings.

Three stages, each operating on one video's scenes sorted by start time:
merge semantically similar neighbours, keep the better-captioned half of the
corpus, and mine a negative span around every surviving positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from groundkit.errors import DimensionMismatch, EmptyInput, IndexOutOfRange, MissingField, ZeroVector
from groundkit.spans import TimeSpan


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    span: TimeSpan
    embedding: tuple[float, ...]
    caption: Optional[str] = None
    caption_similarity: Optional[float] = None
    video_id: str = ""
    caption_embedding: Optional[tuple[float, ...]] = None

    def to_json(self) -> dict:
        out = {
            "video_id": self.video_id,
            "scene_id": self.scene_id,
            "span": self.span.to_list(),
            "embedding": list(self.embedding),
        }
        if self.caption is not None:
            out["caption"] = self.caption
        if self.caption_similarity is not None:
            out["caption_similarity"] = self.caption_similarity
        if self.caption_embedding is not None:
            out["caption_embedding"] = list(self.caption_embedding)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> SceneRecord:
        cap_emb = obj.get("caption_embedding")
        sim = obj.get("caption_similarity")
        return cls(
            scene_id=str(obj["scene_id"]),
            span=TimeSpan.from_seq(obj["span"]),
            embedding=tuple(float(x) for x in obj["embedding"]),
            caption=obj.get("caption"),
            caption_similarity=float(sim) if sim is not None else None,
            video_id=str(obj.get("video_id", "")),
            caption_embedding=tuple(float(x) for x in cap_emb) if cap_emb is not None else None,
        )


@dataclass(frozen=True)
class MinedSegment:
    segment_id: str
    pos_span: TimeSpan
    caption: str
    neg_span: TimeSpan
    video_end_s: float

    def to_json(self) -> dict:
        """Serialised in the grounding-record schema with pos/neg populated."""
        return {
            "id": self.segment_id,
            "duration": self.video_end_s,
            "query": self.caption,
            "gt": self.pos_span.to_list(),
            "pos": self.pos_span.to_list(),
            "neg": self.neg_span.to_list(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> MinedSegment:
        return cls(
            segment_id=str(obj["id"]),
            pos_span=TimeSpan.from_seq(obj["pos"]),
            caption=str(obj["query"]),
            neg_span=TimeSpan.from_seq(obj["neg"]),
            video_end_s=float(obj["duration"]),
        )


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _merge_group(group: list[SceneRecord]) -> SceneRecord:
    if len(group) == 1:
        return group[0]
    weights = np.array([s.span.length for s in group], dtype=float)
    embs = np.array([s.embedding for s in group], dtype=float)
    if weights.sum() <= 0:
        weights = np.ones(len(group))
    mean = (weights[:, None] * embs).sum(axis=0) / weights.sum()
    norm = np.linalg.norm(mean)
    if norm > 0:
        mean = mean / norm
    return SceneRecord(
        scene_id="+".join(s.scene_id for s in group),
        span=TimeSpan(group[0].span.start_s, group[-1].span.end_s),
        embedding=tuple(float(x) for x in mean),
        video_id=group[0].video_id,
    )


def merge_scenes(scenes: Sequence[SceneRecord], theta_merge: float) -> list[SceneRecord]:
    """Merge runs of adjacent scenes whose pairwise similarity exceeds ``theta_merge``.

    Similarities are measured between the original neighbours only; chains
    of similar pairs collapse into one scene. A merged scene spans the hull of
    its members and carries their duration-weighted mean embedding,
    re-normalised. Captions do not survive a merge (they belong to the
    un-merged scenes and must be regenerated upstream).
    """
    if not scenes:
        raise EmptyInput("no scenes to merge")
    groups = [[scenes[0]]]
    for prev, cur in zip(scenes, scenes[1:]):
        if cosine_similarity(prev.embedding, cur.embedding) > theta_merge:
            groups[-1].append(cur)
        else:
            groups.append([cur])
    return [_merge_group(g) for g in groups]


def caption_threshold(segments: Sequence[SceneRecord]) -> float:
    """The similarity of the ceil(n/2)-th best caption; keeping >= it keeps the top half."""
    if not segments:
        raise EmptyInput("no segments")
    sims = []
    for s in segments:
        if s.caption_similarity is None:
            raise MissingField(f"scene {s.scene_id} has no caption_similarity")
        sims.append(s.caption_similarity)
    sims.sort(reverse=True)
    return sims[math.ceil(len(sims) / 2) - 1]


def filter_captions(segments: Sequence[SceneRecord], threshold: Optional[float] = None) -> list[SceneRecord]:
    """Keep segments whose caption similarity is at least ``threshold``.

    Without an explicit threshold the median split of ``segments`` is used, so
    at least half survive (more when there are ties at the cut).
    """
    if threshold is None:
        threshold = caption_threshold(segments)
    kept = []
    for s in segments:
        if s.caption_similarity is None:
            raise MissingField(f"scene {s.scene_id} has no caption_similarity")
        if s.caption_similarity >= threshold:
            kept.append(s)
    return kept


def similar_mask(segments: Sequence[SceneRecord], positive_index: int, theta_sim: float) -> list[bool]:
    pos = segments[positive_index]
    probe = pos.caption_embedding if pos.caption_embedding is not None else pos.embedding
    return [
        i != positive_index and cosine_similarity(probe, s.embedding) > theta_sim
        for i, s in enumerate(segments)
    ]


def mine_negative_span(
    segments: Sequence[SceneRecord],
    positive_index: int,
    theta_sim: float,
    similar: Optional[Sequence[bool]] = None,
) -> MinedSegment:
    """Widest context around the positive span that contains no similar segment.

    ``similar`` may be passed precomputed (one flag per segment); otherwise it
    is derived from cosine similarity against ``theta_sim``. When the positive
    carries a caption embedding, that is what gets compared with the other
    scenes' visual embeddings.
    """
    if not 0 <= positive_index < len(segments):
        raise IndexOutOfRange(f"positive_index {positive_index} not in 0..{len(segments) - 1}")
    if similar is None:
        similar = similar_mask(segments, positive_index, theta_sim)
    pos = segments[positive_index]
    video_end = segments[-1].span.end_s
    neg_start = 0.0
    for i in range(positive_index - 1, -1, -1):
        if similar[i]:
            neg_start = segments[i].span.end_s
            break
    neg_end = video_end
    for i in range(positive_index + 1, len(segments)):
        if similar[i]:
            neg_end = segments[i].span.start_s
            break
    return MinedSegment(
        segment_id=f"{pos.video_id}/{pos.scene_id}" if pos.video_id else pos.scene_id,
        pos_span=pos.span,
        caption=pos.caption or "",
        neg_span=TimeSpan(neg_start, neg_end),
        video_end_s=video_end,
    )


@dataclass
class MineSummary:
    n_videos: int = 0
    n_scenes_in: int = 0
    n_scenes_merged: int = 0
    n_uncaptioned: int = 0
    n_captioned: int = 0
    n_kept: int = 0
    n_mined: int = 0
    caption_threshold: Optional[float] = None
    theta_merge: Optional[float] = None
    theta_sim: Optional[float] = None

    def to_json(self) -> dict:
        return dict(self.__dict__)


def mine_corpus(
    videos: dict[str, list[SceneRecord]],
    theta_sim: float,
    theta_merge: Optional[float] = None,
) -> tuple[list[MinedSegment], MineSummary]:
    """Run merge (optional), caption filtering and negative-span mining over a corpus.

    Filtering uses one corpus-wide median. Every scene of a video, kept or not,
    stays in play as context and as a potential blocker.
    """
    summary = MineSummary(theta_merge=theta_merge, theta_sim=theta_sim, n_videos=len(videos))
    prepared: dict[str, list[SceneRecord]] = {}
    for vid in sorted(videos):
        scenes = sorted(videos[vid], key=lambda s: s.span.start_s)
        summary.n_scenes_in += len(scenes)
        if theta_merge is not None:
            scenes = merge_scenes(scenes, theta_merge)
        summary.n_scenes_merged += len(scenes)
        prepared[vid] = [replace(s, video_id=s.video_id or vid) for s in scenes]

    candidates = [s for v in prepared.values() for s in v if s.caption and s.caption_similarity is not None]
    summary.n_captioned = len(candidates)
    summary.n_uncaptioned = summary.n_scenes_merged - len(candidates)
    if not candidates:
        return [], summary
    threshold = caption_threshold(candidates)
    summary.caption_threshold = threshold
    keep = {id(s) for s in filter_captions(candidates, threshold)}
    summary.n_kept = len(keep)

    mined = []
    for vid, scenes in prepared.items():
        for i, s in enumerate(scenes):
            if id(s) in keep:
                mined.append(mine_negative_span(scenes, i, theta_sim))
    summary.n_mined = len(mined)
    return mined, summary
