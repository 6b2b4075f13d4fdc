import csv
import json
import math

import pytest

from groundkit.cli import main
from groundkit.harness import RunConfig, recompute_metrics, run_ground, run_sweep, run_upperbound
from groundkit.miner import SceneRecord
from groundkit.records import read_records, write_jsonl, write_records
from groundkit.spans import GroundingRecord, TimeSpan
from groundkit.synthetic import synthetic_records


@pytest.fixture
def records_path(tmp_path):
    path = tmp_path / "records.jsonl"
    write_records(path, synthetic_records(200, seed=3))
    return path


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text("utf-8").splitlines()]


def test_ground_cli_writes_outputs(tmp_path, records_path, capsys):
    out = tmp_path / "run"
    assert main(["ground", "--records", str(records_path), "--output", str(out), "--max-rounds", "3"]) == 0
    preds = read_jsonl(out / "predictions.jsonl")
    report = json.loads((out / "report.json").read_text())
    assert len(preds) == 200 and set(preds[0]) >= {"id", "pred", "trace", "wall_ms"}
    assert all(len(p["trace"]) <= 3 for p in preds)
    assert set(report) >= {"config", "metrics", "avg_wall_ms", "rows"}
    assert report["avg_wall_ms"] is not None
    assert "mIoU=" in capsys.readouterr().out


def test_report_integrity(records_path):
    cfg = RunConfig(command="ground", records=str(records_path), output="x", oracle="noisy", epsilon=0.3)
    report = run_ground(cfg)
    gts = {r.id: r.gt_span for r in read_records(records_path)}
    assert recompute_metrics(report, gts) == report.metrics
    assert report.metrics.mIoU == pytest.approx(math.fsum(r.iou for r in report.rows) / len(report.rows))


def test_config_file_and_override(tmp_path, records_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(f"records: {records_path}\noutput: {tmp_path / 'a'}\nmax-rounds: 1\nno_such: 1\n")
    assert main(["ground", "--config", str(cfg_path)]) == 2
    cfg_path.write_text(f"records: {records_path}\noutput: {tmp_path / 'a'}\nmax_rounds: 1\n")
    assert main(["ground", "--config", str(cfg_path)]) == 0
    assert json.loads((tmp_path / "a/report.json").read_text())["config"]["max_rounds"] == 1
    assert main(["ground", "--config", str(cfg_path), "--max-rounds", "2", "--output", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b/report.json").read_text())["config"]["max_rounds"] == 2


def test_exit_codes(tmp_path, records_path):
    out = str(tmp_path / "o")
    assert main(["ground", "--output", out]) == 2
    assert main(["ground", "--records", str(records_path), "--output", out, "--epsilon", "1.5", "--oracle", "noisy"]) == 2
    assert main(["ground", "--records", str(tmp_path / "missing.jsonl"), "--output", out]) == 3
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x", "duration": 10, "query": "q", "gt": [5, 2]}\n')
    assert main(["ground", "--records", str(bad), "--output", out]) == 3
    # a script covering no record fails every example
    empty = tmp_path / "script.jsonl"
    empty.write_text("")
    assert main(["ground", "--records", str(records_path), "--output", out, "--oracle", "scripted",
                 "--script", str(empty)]) == 4


@pytest.mark.parametrize("oracle", ["truthful", "noisy"])
def test_worker_count_does_not_change_outputs(tmp_path, records_path, oracle):
    blobs = []
    for workers in (1, 4, 16):
        out = tmp_path / f"w{workers}"
        argv = ["ground", "--records", str(records_path), "--output", str(out), "--workers", str(workers),
                "--oracle", oracle, "--epsilon", "0.4", "--seed", "11", "--no-timing"]
        assert main(argv) == 0
        report = json.loads((out / "report.json").read_text())
        del report["config"]  # echoes the worker count and output path
        blobs.append(((out / "predictions.jsonl").read_bytes(), report))
    assert blobs[0] == blobs[1] == blobs[2]


def test_scripted_replay_reproduces_predictions(tmp_path, records_path):
    first = tmp_path / "first"
    assert main(["ground", "--records", str(records_path), "--output", str(first), "--oracle", "noisy",
                 "--epsilon", "0.5", "--no-timing"]) == 0
    second = tmp_path / "second"
    assert main(["ground", "--records", str(records_path), "--output", str(second), "--oracle", "scripted",
                 "--script", str(first / "predictions.jsonl"), "--no-timing"]) == 0
    a = [(p["id"], p["pred"]) for p in read_jsonl(first / "predictions.jsonl")]
    b = [(p["id"], p["pred"]) for p in read_jsonl(second / "predictions.jsonl")]
    assert a == b


def test_sweep_outputs_and_trends(tmp_path, records_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--records", str(records_path), "--output", str(out), "--axis", "max_rounds",
                 "--values", "0,1,2,3", "--no-timing"]) == 0
    with open(out / "sweep.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["max_rounds"] for r in rows] == ["0", "1", "2", "3"]
    assert (out / "predictions_max_rounds=2.jsonl").exists()

    recs = synthetic_records(300, seed=8)
    base = RunConfig(command="sweep", records="-", output="-", axis="epsilon", values=(0.0, 0.25, 0.5, 0.75, 1.0))
    _, runs = run_sweep(base, recs)
    means = [r.metrics.mIoU for r in runs]
    assert all(b <= a + 0.02 for a, b in zip(means, means[1:]))

    frames = RunConfig(command="sweep", records="-", output="-", axis="num_frames", values=(4, 12, 32), timing=False)
    _, runs = run_sweep(frames, recs)
    # a truthful oracle ignores the frames, so predictions cannot move
    preds = [[r.pred for r in run.rows] for run in runs]
    assert preds[0] == preds[1] == preds[2]


def test_truthful_rounds_monotone_on_synthetic():
    recs = synthetic_records(500, seed=2)
    cfg = RunConfig(command="ground", records="-", output="-", timing=False)
    one = run_ground(RunConfig(**{**cfg.__dict__, "max_rounds": 1}), recs)
    three = run_ground(RunConfig(**{**cfg.__dict__, "max_rounds": 3}), recs)
    ub = run_upperbound(RunConfig(command="upperbound", max_rounds=3, timing=False), recs)
    assert one.metrics.mIoU <= three.metrics.mIoU <= ub.metrics.mIoU


def test_upperbound_zero_rounds_is_gt_fraction():
    recs = [GroundingRecord("a", 100.0, "q", TimeSpan(10, 30)), GroundingRecord("b", 40.0, "q", TimeSpan(0, 10))]
    rep = run_upperbound(RunConfig(command="upperbound", max_rounds=0), recs)
    assert [r.iou for r in rep.rows] == pytest.approx([0.2, 0.25])
    assert rep.extra["elapsed_ms"] is not None


def test_upperbound_and_baseline_cli(tmp_path, records_path):
    out = tmp_path / "ub"
    assert main(["upperbound", "--records", str(records_path), "--output", str(out), "--max-rounds", "3"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["metrics"]["mIoU"] > 0.5 and "elapsed_ms" in report
    out = tmp_path / "bl"
    assert main(["baseline", "--records", str(records_path), "--output", str(out),
                 "--span-len-from", str(records_path), "--n-seeds", "3"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["per_seed"]) == 3
    mean = sum(m["mIoU"] for m in report["per_seed"]) / 3
    assert report["metrics"]["mIoU"] == pytest.approx(mean)
    assert main(["baseline", "--records", str(records_path), "--output", str(out)]) == 2


def test_eval_counts_missing_and_malformed(tmp_path):
    recs = [GroundingRecord(i, 10.0, "q", TimeSpan(0, 5)) for i in "abcd"]
    write_records(tmp_path / "r.jsonl", recs)
    write_jsonl(tmp_path / "p.jsonl", [
        {"id": "a", "pred": [0, 5]},
        {"id": "b", "pred": [3, 3]},
        {"id": "c", "pred": None, "failure": "timeout"},
    ])
    out = tmp_path / "e"
    argv = ["eval", "--records", str(tmp_path / "r.jsonl"), "--predictions", str(tmp_path / "p.jsonl"), "--output", str(out)]
    assert main(argv) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["metrics"]["n_failed"] == 3
    assert report["metrics"]["mIoU"] == pytest.approx(0.25)
    assert {r["id"]: r["failure"] for r in report["rows"]} == {"a": None, "b": "malformed", "c": "timeout", "d": "missing"}
    assert main(argv + ["--metrics-mode", "formatted-only"]) == 0
    assert json.loads((out / "report.json").read_text())["metrics"]["mIoU"] == 1.0


def test_mine_then_sample(tmp_path):
    rows = []
    for v in ("v1", "v2"):
        for i in range(6):
            emb = (1.0, 0.0) if i % 3 == 0 else (0.0, 1.0)
            rows.append(SceneRecord(f"s{i}", TimeSpan(10 * i, 10 * i + 10), emb, caption=f"{v} scene {i}",
                                    caption_similarity=i / 10, video_id=v).to_json())
    write_jsonl(tmp_path / "scenes.jsonl", rows)
    mined = tmp_path / "mined"
    assert main(["mine", "--scenes", str(tmp_path / "scenes.jsonl"), "--output", str(mined),
                 "--theta-merge", "1.0", "--theta-sim", "0.9"]) == 0
    segs = read_jsonl(mined / "mined.jsonl")
    assert segs and all(set(s) == {"id", "duration", "query", "gt", "pos", "neg"} for s in segs)
    out = tmp_path / "samples"
    assert main(["sample", "--records", str(mined / "mined.jsonl"), "--output", str(out), "--epochs", "3", "--seed", "1"]) == 0
    samples = read_jsonl(out / "samples.jsonl")
    assert len(samples) == len(segs) * 3 * 2
    summary = json.loads((out / "summary.json").read_text())
    assert sum(summary["grounding_answer_counts"].values()) == len(segs) * 3


def test_converters(tmp_path):
    (tmp_path / "durations.csv").write_text("id,subject,length\nAAA,x,30.5\nBBB,y,12.0\n")
    (tmp_path / "sta.txt").write_text(
        "AAA 1.2 8.4##a person opens a door.\nBBB 5.0 14.0##someone sits.\nCCC 0 1##unknown video.\nBBB 13 20##past the end.\n"
    )
    out = tmp_path / "charades.jsonl"
    assert main(["convert", "charades", "--annotations", str(tmp_path / "sta.txt"),
                 "--durations", str(tmp_path / "durations.csv"), "--output", str(out)]) == 0
    recs = read_records(out)
    assert [(r.id, r.gt_span.to_list()) for r in recs] == [("AAA_0", [1.2, 8.4]), ("BBB_1", [5.0, 12.0])]
    assert recs[0].query == "a person opens a door."
    assert main(["convert", "charades", "--annotations", str(tmp_path / "sta.txt"), "--output", str(out)]) == 2

    anet = {"v_x": {"duration": 50.0, "timestamps": [[0, 10], [45, 60]], "sentences": ["A man waves.", " He leaves. "]}}
    (tmp_path / "val.json").write_text(json.dumps(anet))
    out = tmp_path / "anet.jsonl"
    assert main(["convert", "activitynet", "--annotations", str(tmp_path / "val.json"), "--output", str(out)]) == 0
    recs = read_records(out)
    assert [(r.id, r.gt_span.to_list(), r.query) for r in recs] == [
        ("v_x_0", [0.0, 10.0], "A man waves."),
        ("v_x_1", [45.0, 50.0], "He leaves."),
    ]


def test_synth_cli(tmp_path):
    out = tmp_path / "syn.jsonl"
    assert main(["synth", "--n", "50", "--seed", "4", "--output", str(out)]) == 0
    recs = read_records(out)
    assert len(recs) == 50 and recs == list(synthetic_records(50, seed=4))
