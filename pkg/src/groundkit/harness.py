"""Batch runners behind the CLI: ground, upperbound, baseline, eval, sweep, mine, sample."""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from groundkit.engine import DEFAULT_NUM_FRAMES, random_baseline, recursive_ground, upperbound_batch, window_update
from groundkit.errors import ConfigError, OracleFailure
from groundkit.miner import mine_corpus
from groundkit.oracles import NoisyOracle, RemoteOracle, RemoteOracleConfig, ScriptedOracle, TruthfulOracle
from groundkit.records import dumps, iter_jsonl, read_mined, read_records, read_scenes, write_jsonl
from groundkit.sampler import CropMode, derive_seed, generate_samples
from groundkit.spans import DEFAULT_THRESHOLDS, Category, GroundingRecord, MetricsReport, TimeSpan, aggregate_metrics, iou

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ORACLE = 4

ORACLES = ("truthful", "noisy", "scripted", "remote")
SWEEP_AXES = ("max_rounds", "num_frames", "epsilon")


@dataclass
class RunConfig:
    command: str = "ground"
    records: Optional[str] = None
    output: Optional[str] = None
    predictions: Optional[str] = None
    oracle: str = "truthful"
    epsilon: float = 0.0
    script: Optional[str] = None
    endpoint: Optional[str] = None
    timeout_ms: Optional[float] = None
    retries: Optional[int] = None
    prompt_template: str = "v1:0:0"
    max_rounds: int = 3
    num_frames: int = DEFAULT_NUM_FRAMES
    seed: int = 0
    workers: int = 1
    metrics_mode: str = "strict"
    inclusive: bool = False
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    timing: bool = True
    span_len: Optional[float] = None
    span_len_from: Optional[str] = None
    n_seeds: int = 5
    axis: Optional[str] = None
    values: tuple = ()
    scenes: Optional[str] = None
    theta_merge: Optional[float] = None
    theta_sim: Optional[float] = None
    epochs: int = 1
    crop_mode: str = "balanced"
    tasks: tuple[str, ...] = ("grounding", "captioning")

    @classmethod
    def from_mapping(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        clean = {}
        for key, value in data.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(value, list):
                value = tuple(value)
            clean[key] = value
        return cls(**clean)

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def validate(self) -> None:
        need: dict[str, tuple[str, ...]] = {
            "ground": ("records", "output"),
            "upperbound": ("records", "output"),
            "baseline": ("records", "output"),
            "eval": ("records", "predictions"),
            "sweep": ("records", "output", "axis"),
            "mine": ("scenes", "output", "theta_merge", "theta_sim"),
            "sample": ("records", "output"),
        }
        if self.command not in need:
            raise ConfigError(f"unknown command {self.command!r}")
        missing = [k for k in need[self.command] if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"{self.command}: missing required setting(s): {', '.join(missing)}")
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be >= 0")
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.metrics_mode not in ("strict", "formatted-only"):
            raise ConfigError(f"metrics_mode must be strict or formatted-only, got {self.metrics_mode!r}")
        if self.command in ("ground", "sweep"):
            if self.oracle not in ORACLES:
                raise ConfigError(f"oracle must be one of {ORACLES}, got {self.oracle!r}")
            if not 0.0 <= self.epsilon <= 1.0:
                raise ConfigError("epsilon must be in [0, 1]")
            if self.oracle == "scripted" and self.script is None:
                raise ConfigError("scripted oracle needs --script")
            if self.oracle == "remote":
                self.remote_config()
        if self.command == "sweep":
            if self.axis not in SWEEP_AXES:
                raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
            if not self.values:
                raise ConfigError("sweep needs a nonempty list of values")
        if self.command == "baseline":
            if self.span_len is None and self.span_len_from is None:
                raise ConfigError("baseline needs --span-len or --span-len-from")
            if self.n_seeds < 1:
                raise ConfigError("n_seeds must be >= 1")
        if self.command == "sample":
            CropMode(self.crop_mode)

    def remote_config(self) -> RemoteOracleConfig:
        return RemoteOracleConfig.from_env(
            endpoint=self.endpoint,
            timeout_ms=self.timeout_ms,
            retries=self.retries,
            prompt_template=self.prompt_template,
        )


@dataclass
class ExampleRow:
    id: str
    pred: Optional[TimeSpan]
    iou: float
    rounds_used: int
    wall_ms: Optional[float]
    trace: Optional[list] = None
    failure: Optional[str] = None

    def prediction_json(self, with_trace: bool = True) -> dict:
        out = {"id": self.id, "pred": self.pred.to_list() if self.pred is not None else None}
        if with_trace and self.trace is not None:
            out["trace"] = self.trace
        out["wall_ms"] = self.wall_ms
        if self.failure is not None:
            out["failure"] = self.failure
        return out

    def row_json(self) -> dict:
        return {
            "id": self.id,
            "pred": self.pred.to_list() if self.pred is not None else None,
            "iou": self.iou,
            "rounds_used": self.rounds_used,
            "wall_ms": self.wall_ms,
            "failure": self.failure,
        }


@dataclass
class RunReport:
    metrics: MetricsReport
    rows: list[ExampleRow]
    config: dict
    sweep: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def avg_wall_ms(self) -> Optional[float]:
        times = [r.wall_ms for r in self.rows if r.wall_ms is not None]
        return math.fsum(times) / len(times) if times else None

    @property
    def failure_rate(self) -> float:
        return self.metrics.n_failed / max(1, self.metrics.n_examples)

    def to_json(self) -> dict:
        out = {
            "config": self.config,
            "metrics": self.metrics.to_json(),
            "avg_wall_ms": self.avg_wall_ms,
            "rows": [r.row_json() for r in self.rows],
        }
        if self.sweep:
            out["sweep"] = self.sweep
        out.update(self.extra)
        return out


def recompute_metrics(report: RunReport, gts: dict[str, TimeSpan]) -> MetricsReport:
    """Metrics from the per-example rows alone (used to check report integrity)."""
    return aggregate_metrics(
        [(r.pred, gts[r.id]) for r in report.rows],
        thresholds=tuple(report.metrics.recall_at),
        mode=report.metrics.mode,
        inclusive=report.metrics.inclusive,
    )


# ---------------------------------------------------------------------------
# oracles per example


def load_script(path: Path | str) -> dict[str, list[Category]]:
    out = {}
    for obj in iter_jsonl(path):
        out[str(obj["id"])] = [Category.parse(step["choice"]) for step in obj.get("trace") or []]
    return out


OracleFactory = Callable[[GroundingRecord, int], object]


def make_oracle_factory(cfg: RunConfig) -> OracleFactory:
    """Returns ``factory(record, seed) -> oracle``; shares or isolates instances per the oracle's flag."""
    if cfg.oracle == "truthful":
        return lambda rec, seed: TruthfulOracle(rec.gt_span)
    if cfg.oracle == "noisy":
        eps = cfg.epsilon
        return lambda rec, seed: NoisyOracle(rec.gt_span, eps, derive_seed(seed, "noise"))
    if cfg.oracle == "scripted":
        script = load_script(cfg.script)

        def scripted(rec, seed):
            if rec.id not in script:
                raise OracleFailure("other", f"no scripted answers for {rec.id}")
            return ScriptedOracle(script[rec.id])

        return scripted
    remote_cfg = cfg.remote_config()
    shared = RemoteOracle(remote_cfg)
    if shared.concurrent_safe:
        return lambda rec, seed: shared
    local = threading.local()

    def per_worker(rec, seed):
        if not hasattr(local, "oracle"):
            local.oracle = RemoteOracle(remote_cfg)
        return local.oracle

    return per_worker


def _map(fn, items: Sequence, workers: int) -> list:
    """Order-preserving map; results never depend on the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# runners


def _ground_one(rec: GroundingRecord, cfg: RunConfig, factory: OracleFactory) -> ExampleRow:
    seed = derive_seed(cfg.seed, rec.id)
    t0 = time.perf_counter()
    try:
        oracle = factory(rec, seed)
        pred, trace = recursive_ground(oracle, rec, cfg.max_rounds, cfg.num_frames, seed)
        failure = None
    except OracleFailure as exc:
        pred, trace, failure = None, exc.trace, exc.kind
    wall = (time.perf_counter() - t0) * 1000.0 if cfg.timing else None
    return ExampleRow(
        id=rec.id,
        pred=pred,
        iou=iou(pred, rec.gt_span) if pred is not None else 0.0,
        rounds_used=len(trace.rounds) if trace is not None else 0,
        wall_ms=wall,
        trace=trace.to_json() if trace is not None else [],
        failure=failure,
    )


def _metrics(rows: list[ExampleRow], records: Sequence[GroundingRecord], cfg: RunConfig) -> MetricsReport:
    gts = {r.id: r.gt_span for r in records}
    return aggregate_metrics(
        [(row.pred, gts[row.id]) for row in rows],
        thresholds=cfg.thresholds,
        mode=cfg.metrics_mode,
        inclusive=cfg.inclusive,
    )


def run_ground(cfg: RunConfig, records: Optional[Sequence[GroundingRecord]] = None) -> RunReport:
    if records is None:
        records = read_records(cfg.records)
    factory = make_oracle_factory(cfg)
    rows = _map(lambda rec: _ground_one(rec, cfg, factory), list(records), cfg.workers)
    return RunReport(_metrics(rows, records, cfg), rows, cfg.to_json())


def run_upperbound(cfg: RunConfig, records: Optional[Sequence[GroundingRecord]] = None) -> RunReport:
    if records is None:
        records = read_records(cfg.records)
    t0 = time.perf_counter()
    results = upperbound_batch(records, cfg.max_rounds)
    elapsed = (time.perf_counter() - t0) * 1000.0
    rows = []
    for rec, res in zip(records, results):
        window = rec.video_span
        trace = []
        for c in res.choices:
            trace.append({"window": window.to_list(), "choice": c.value})
            window = window_update(window, c)
        rows.append(ExampleRow(rec.id, res.best_span, res.best_iou, len(res.choices), None, trace))
    report = RunReport(_metrics(rows, records, cfg), rows, cfg.to_json())
    report.extra["elapsed_ms"] = elapsed if cfg.timing else None
    return report


def resolve_span_len(cfg: RunConfig) -> float:
    if cfg.span_len is not None:
        return float(cfg.span_len)
    train = read_records(cfg.span_len_from)
    return math.fsum(r.gt_span.length for r in train) / len(train)


def run_baseline(cfg: RunConfig, records: Optional[Sequence[GroundingRecord]] = None) -> RunReport:
    """Random spans of a fixed length, averaged over ``n_seeds`` seeds.

    The headline metrics are the per-seed metrics averaged; rows hold the
    first seed's predictions.
    """
    if records is None:
        records = read_records(cfg.records)
    span_len = resolve_span_len(cfg)
    per_seed = []
    first_rows: list[ExampleRow] = []
    for k in range(cfg.n_seeds):
        rows = []
        for rec in records:
            pred = random_baseline(rec, span_len, derive_seed(cfg.seed + k, rec.id))
            rows.append(ExampleRow(rec.id, pred, iou(pred, rec.gt_span), 0, None))
        per_seed.append(_metrics(rows, records, cfg))
        if k == 0:
            first_rows = rows
    mean = MetricsReport(
        mIoU=math.fsum(m.mIoU for m in per_seed) / len(per_seed),
        recall_at={t: math.fsum(m.recall_at[t] for m in per_seed) / len(per_seed) for t in per_seed[0].recall_at},
        n_examples=per_seed[0].n_examples,
        n_failed=0,
        mode=cfg.metrics_mode,
        inclusive=cfg.inclusive,
    )
    report = RunReport(mean, first_rows, cfg.to_json())
    report.extra["span_len"] = span_len
    report.extra["per_seed"] = [m.to_json() for m in per_seed]
    return report


def run_eval(cfg: RunConfig) -> RunReport:
    records = read_records(cfg.records)
    by_id = {r.id: r for r in records}
    rows = []
    seen = set()
    for obj in iter_jsonl(cfg.predictions):
        rid = str(obj["id"])
        if rid not in by_id:
            raise ConfigError(f"prediction for unknown record {rid!r}")
        seen.add(rid)
        pred = None
        if obj.get("pred") is not None:
            try:
                pred = TimeSpan.from_seq(obj["pred"])
                if pred.length <= 0:
                    pred = None
            except (ValueError, TypeError):
                pred = None
        rows.append(
            ExampleRow(
                rid,
                pred,
                iou(pred, by_id[rid].gt_span) if pred is not None else 0.0,
                len(obj.get("trace") or []),
                obj.get("wall_ms"),
                failure=None if pred is not None else (obj.get("failure") or "malformed"),
            )
        )
    for rec in records:
        if rec.id not in seen:
            rows.append(ExampleRow(rec.id, None, 0.0, 0, None, failure="missing"))
    return RunReport(_metrics(rows, records, cfg), rows, cfg.to_json())


def run_sweep(cfg: RunConfig, records: Optional[Sequence[GroundingRecord]] = None) -> tuple[RunReport, list[RunReport]]:
    """One grounding run per axis value with shared seeds."""
    if records is None:
        records = read_records(cfg.records)
    table = []
    runs = []
    for value in cfg.values:
        if cfg.axis == "epsilon":
            sub = replace(cfg, command="ground", epsilon=float(value), oracle="noisy" if cfg.oracle == "truthful" else cfg.oracle)
        else:
            sub = replace(cfg, command="ground", **{cfg.axis: int(value)})
        rep = run_ground(sub, records)
        runs.append(rep)
        m = rep.metrics
        row = {cfg.axis: value, "mIoU": m.mIoU}
        for t, r in m.recall_at.items():
            row[f"R@{t:g}"] = r
        row["n_failed"] = m.n_failed
        row["avg_wall_ms"] = rep.avg_wall_ms
        table.append(row)
    head = runs[0]
    summary = RunReport(head.metrics, head.rows, cfg.to_json(), sweep=table)
    return summary, runs


# ---------------------------------------------------------------------------
# writing outputs


def write_report(path: Path | str, report: RunReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_predictions(path: Path | str, report: RunReport) -> int:
    return write_jsonl(path, (r.prediction_json() for r in report.rows))


def write_sweep_csv(path: Path | str, table: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(table[0]))
        writer.writeheader()
        writer.writerows(table)


def run_mine(cfg: RunConfig) -> dict:
    videos = read_scenes(cfg.scenes)
    mined, summary = mine_corpus(videos, theta_sim=cfg.theta_sim, theta_merge=cfg.theta_merge)
    out = Path(cfg.output)
    write_jsonl(out / "mined.jsonl", (m.to_json() for m in mined))
    (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=2) + "\n", encoding="utf-8")
    return summary.to_json()


def run_sample(cfg: RunConfig) -> dict:
    mined = read_mined(cfg.records)
    samples = generate_samples(
        mined,
        global_seed=cfg.seed,
        epochs=cfg.epochs,
        mode=cfg.crop_mode,
        num_frames=cfg.num_frames,
        tasks=cfg.tasks,
    )
    out = Path(cfg.output)
    write_jsonl(out / "samples.jsonl", samples)
    counts: dict[str, int] = {}
    for s in samples:
        if s["task"] == "grounding":
            key = s["answer"].split(") ", 1)[-1]
            counts[key] = counts.get(key, 0) + 1
    summary = {"n_records": len(mined), "n_samples": len(samples), "grounding_answer_counts": counts}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary


__all__ = [
    "EXIT_CONFIG",
    "EXIT_IO",
    "EXIT_OK",
    "EXIT_ORACLE",
    "RunConfig",
    "RunReport",
    "dumps",
    "make_oracle_factory",
    "recompute_metrics",
    "run_baseline",
    "run_eval",
    "run_ground",
    "run_mine",
    "run_sample",
    "run_sweep",
    "run_upperbound",
    "write_predictions",
    "write_report",
    "write_sweep_csv",
]
