"""Write the bundled synthetic record set (data/synthetic_1000.jsonl)."""

import argparse
from pathlib import Path

from groundkit.records import write_records
from groundkit.synthetic import synthetic_records


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output", type=Path, default=Path(__file__).parents[1] / "data" / "synthetic_1000.jsonl")
    args = ap.parse_args()
    n = write_records(args.output, synthetic_records(args.n, args.seed))
    print(f"wrote {n} records to {args.output}")


if __name__ == "__main__":
    main()
