"""Oracle sweeps on synthetic records: rounds, answer noise, and the upperbound per depth."""

import argparse
from pathlib import Path

from groundkit.harness import RunConfig, run_sweep, run_upperbound, write_sweep_csv
from groundkit.records import read_records
from groundkit.synthetic import synthetic_records


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--records", help="grounding-record JSONL (default: 1000 synthetic records)")
    ap.add_argument("--output", type=Path, default=Path("runs/sweep_synthetic"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    records = read_records(args.records) if args.records else synthetic_records(1000, seed=0)

    rounds = RunConfig(command="sweep", axis="max_rounds", values=(0, 1, 2, 3, 4, 5), seed=args.seed, timing=False)
    summary, _ = run_sweep(rounds, records)
    for row in summary.sweep:
        ub = run_upperbound(RunConfig(command="upperbound", max_rounds=row["max_rounds"]), records)
        row["upperbound_mIoU"] = ub.metrics.mIoU
    write_sweep_csv(args.output / "rounds.csv", summary.sweep)

    noise = RunConfig(command="sweep", axis="epsilon", values=(0.0, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0),
                      seed=args.seed, timing=False)
    noisy, _ = run_sweep(noise, records)
    write_sweep_csv(args.output / "epsilon.csv", noisy.sweep)

    for name, table in (("rounds", summary.sweep), ("epsilon", noisy.sweep)):
        print(f"== {name}")
        for row in table:
            print("  " + "  ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()
                                    if v is not None))
    print(f"CSV written under {args.output}")


if __name__ == "__main__":
    main()
