"""End-to-end data construction on a toy corpus: scenes -> mined segments -> training prompts."""

import argparse
import json
import math
import random
from pathlib import Path

from groundkit.harness import RunConfig, run_mine, run_sample
from groundkit.miner import SceneRecord
from groundkit.records import write_jsonl
from groundkit.spans import TimeSpan


def toy_scenes(n_videos, seed):
    """Videos cut into scenes whose embeddings cycle through a few themes, so similar scenes recur."""
    rng = random.Random(seed)
    rows = []
    for v in range(n_videos):
        t = 0.0
        themes = rng.sample(range(8), 3)
        for i in range(rng.randint(5, 12)):
            length = round(rng.uniform(2, 20), 2)
            angle = themes[rng.randrange(3)] * math.pi / 8 + rng.gauss(0, 0.05)
            rows.append(SceneRecord(
                f"s{i}", TimeSpan(round(t, 2), round(t + length, 2)), (math.cos(angle), math.sin(angle)),
                caption=f"scene {i} of video {v}", caption_similarity=round(rng.random(), 3), video_id=f"v{v}",
            ).to_json())
            t += length
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", type=Path, default=Path("runs/toy_pipeline"))
    ap.add_argument("--videos", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    scenes = args.output / "scenes.jsonl"
    write_jsonl(scenes, toy_scenes(args.videos, args.seed))
    mined = run_mine(RunConfig(command="mine", scenes=str(scenes), output=str(args.output / "mined"),
                               theta_merge=0.995, theta_sim=0.9))
    print("mine:", json.dumps(mined))
    sampled = run_sample(RunConfig(command="sample", records=str(args.output / "mined" / "mined.jsonl"),
                                   output=str(args.output / "samples"), epochs=4, seed=args.seed))
    print("sample:", json.dumps(sampled))
    first = (args.output / "samples" / "samples.jsonl").read_text().splitlines()[0]
    print("first prompt:\n" + json.loads(first)["prompt"])


if __name__ == "__main__":
    main()
