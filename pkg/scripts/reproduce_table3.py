"""Model-free rows of the grounding comparison table: 3-round upperbound and random baseline.

Inputs are grounding-record JSONL files produced by ``groundkit convert``.
"""

import argparse

from groundkit.harness import RunConfig, run_baseline, run_upperbound
from groundkit.records import read_records

REPORTED = {
    ("charades", "upperbound"): (74.8, 100.0, 97.0, 69.2),
    ("activitynet", "upperbound"): (71.9, 91.5, 84.6, 68.4),
    ("charades", "random"): (20.1, 30.0, 18.8, 6.2),
}


def row(metrics):
    return (100 * metrics.mIoU,) + tuple(100 * metrics.recall_at[t] for t in (0.3, 0.5, 0.7))


def show(name, got, ref):
    cells = " ".join(f"{g:6.1f}" for g in got)
    diff = " ".join(f"{g - r:+5.1f}" for g, r in zip(got, ref))
    print(f"{name:28s} {cells}   diff vs reported: {diff}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--charades-test")
    ap.add_argument("--charades-train", help="sets the random-baseline span length")
    ap.add_argument("--activitynet-test")
    ap.add_argument("--max-rounds", type=int, default=3)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    print(f"{'':28s} {'mIoU':>6s} {'R@0.3':>6s} {'R@0.5':>6s} {'R@0.7':>6s}")
    for name, path in (("charades", args.charades_test), ("activitynet", args.activitynet_test)):
        if not path:
            continue
        records = read_records(path)
        ub = run_upperbound(RunConfig(command="upperbound", max_rounds=args.max_rounds), records)
        show(f"{name} upperbound", row(ub.metrics), REPORTED[(name, "upperbound")])
        if name == "charades" and args.charades_train:
            cfg = RunConfig(command="baseline", span_len_from=args.charades_train, n_seeds=args.seeds)
            bl = run_baseline(cfg, records)
            show(f"{name} random ({bl.extra['span_len']:.2f}s)", row(bl.metrics), REPORTED[(name, "random")])


if __name__ == "__main__":
    main()
