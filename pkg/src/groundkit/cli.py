"""Command line entry point: ``groundkit <command> [--config file.yaml] [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from groundkit import convert, harness
from groundkit.errors import ConfigError, GroundkitError
from groundkit.harness import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_ORACLE, RunConfig
from groundkit.records import write_records
from groundkit.synthetic import synthetic_records

log = logging.getLogger("groundkit")

RUN_COMMANDS = ("mine", "sample", "ground", "upperbound", "baseline", "eval", "sweep")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _values(text: str) -> tuple:
    out = []
    for x in text.split(","):
        x = x.strip()
        if x:
            out.append(int(x) if x.lstrip("-").isdigit() else float(x))
    return tuple(out)


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only flags actually given override the config file
    p.add_argument("--config", type=Path, help="YAML/JSON config file; flags override its values")
    p.add_argument("--records", help="grounding-record JSONL (mined JSONL for 'sample')")
    p.add_argument("--output", "-o", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--metrics-mode", choices=("strict", "formatted-only"))
    p.add_argument("--inclusive", action="store_true", default=None, help="count IoU >= t instead of > t")
    p.add_argument("--thresholds", type=_floats, help="comma-separated IoU thresholds")
    p.add_argument("--no-timing", dest="timing", action="store_false", default=None,
                   help="write wall_ms as null (byte-reproducible outputs)")


def _add_grounding(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--num-frames", type=int)
    p.add_argument("--oracle", choices=harness.ORACLES)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--script", help="prediction JSONL with traces to replay (scripted oracle)")
    p.add_argument("--endpoint", help="remote oracle URL (or GROUNDKIT_ENDPOINT)")
    p.add_argument("--timeout-ms", type=float)
    p.add_argument("--retries", type=int)
    p.add_argument("--prompt-template")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundkit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground", help="recursive grounding with a choice oracle")
    _add_common(p)
    _add_grounding(p)

    p = sub.add_parser("upperbound", help="best reachable IoU over all answer sequences")
    _add_common(p)
    p.add_argument("--max-rounds", type=int)

    p = sub.add_parser("baseline", help="random spans of a fixed length")
    _add_common(p)
    p.add_argument("--span-len", type=float)
    p.add_argument("--span-len-from", help="records whose mean gt length sets the span length")
    p.add_argument("--n-seeds", type=int)

    p = sub.add_parser("eval", help="score a prediction JSONL against records")
    _add_common(p)
    p.add_argument("--predictions")

    p = sub.add_parser("sweep", help="grounding runs over max_rounds, num_frames or epsilon")
    _add_common(p)
    _add_grounding(p)
    p.add_argument("--axis", choices=harness.SWEEP_AXES)
    p.add_argument("--values", type=_values, help="comma-separated axis values")

    p = sub.add_parser("mine", help="merge scenes, filter captions, mine negative spans")
    _add_common(p)
    p.add_argument("--scenes", help="scenes JSONL")
    p.add_argument("--theta-merge", type=float)
    p.add_argument("--theta-sim", type=float)

    p = sub.add_parser("sample", help="random crops and prompts from mined segments")
    _add_common(p)
    p.add_argument("--num-frames", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--crop-mode", choices=("uniform", "balanced"))
    p.add_argument("--tasks", type=lambda s: tuple(x.strip() for x in s.split(",")))

    p = sub.add_parser("convert", help="benchmark annotations to grounding-record JSONL")
    p.add_argument("format", choices=("charades", "activitynet"))
    p.add_argument("--annotations", required=True)
    p.add_argument("--durations", help="Charades_v1_<split>.csv (charades only)")
    p.add_argument("--output", "-o", required=True, help="output JSONL path")

    p = sub.add_parser("synth", help="write a synthetic record set")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True, help="output JSONL path")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config is not None:
        try:
            loaded = yaml.safe_load(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad config {args.config}: {exc}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        data.update(loaded or {})
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose") or value is None:
            continue
        data[key] = value
    data["command"] = args.command
    cfg = RunConfig.from_mapping(data)
    cfg.validate()
    return cfg


def _print_metrics(label: str, report: harness.RunReport) -> None:
    m = report.metrics
    recall = " ".join(f"R@{t:g}={100 * r:.1f}" for t, r in m.recall_at.items())
    print(f"{label}: n={m.n_examples} failed={m.n_failed} mIoU={100 * m.mIoU:.1f} {recall}")


def _run(cfg: RunConfig) -> int:
    out = Path(cfg.output) if cfg.output else None
    if cfg.command == "mine":
        summary = harness.run_mine(cfg)
        print(f"mine: {summary['n_mined']} segments, caption threshold {summary['caption_threshold']}")
        return EXIT_OK
    if cfg.command == "sample":
        summary = harness.run_sample(cfg)
        print(f"sample: {summary['n_samples']} samples from {summary['n_records']} records")
        return EXIT_OK
    if cfg.command == "sweep":
        summary, runs = harness.run_sweep(cfg)
        for value, rep in zip(cfg.values, runs):
            harness.write_predictions(out / f"predictions_{cfg.axis}={value}.jsonl", rep)
        harness.write_report(out / "report.json", summary)
        harness.write_sweep_csv(out / "sweep.csv", summary.sweep)
        for row in summary.sweep:
            print(", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        worst = max(r.failure_rate for r in runs)
        return EXIT_ORACLE if worst > 0.5 else EXIT_OK

    runner = {
        "ground": harness.run_ground,
        "upperbound": harness.run_upperbound,
        "baseline": harness.run_baseline,
        "eval": harness.run_eval,
    }[cfg.command]
    report = runner(cfg)
    if out is not None:
        if cfg.command != "eval":
            harness.write_predictions(out / "predictions.jsonl", report)
        harness.write_report(out / "report.json", report)
    _print_metrics(cfg.command, report)
    if report.avg_wall_ms is not None:
        print(f"average wall time per example: {report.avg_wall_ms:.2f} ms")
    if cfg.command == "ground" and report.failure_rate > 0.5:
        log.error("oracle failure rate %.1f%% exceeds 50%%", 100 * report.failure_rate)
        return EXIT_ORACLE
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "convert":
            if args.format == "charades":
                if not args.durations:
                    raise ConfigError("charades conversion needs --durations")
                recs = convert.charades_sta_records(args.annotations, convert.read_charades_durations(args.durations))
            else:
                recs = convert.activitynet_records(args.annotations)
            print(f"wrote {write_records(args.output, recs)} records to {args.output}")
            return EXIT_OK
        if args.command == "synth":
            print(f"wrote {write_records(args.output, synthetic_records(args.n, args.seed))} records")
            return EXIT_OK
        cfg = load_config(args)
        return _run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GroundkitError, ValueError, KeyError) as exc:
        # malformed input files surface here
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
