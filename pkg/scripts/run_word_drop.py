#!/usr/bin/env python3
"""Word-drop robustness curves for trained translation checkpoints.

Evaluates each checkpoint under increasing word-drop probability and writes
one `p,bleu1,bleu2,bleu3,bleu4` CSV per model. Run run_translation.py first
to produce the checkpoints.
"""

import argparse
import os

from fuselab import checkpoint as ckpt_io
from fuselab import data, harness


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--run-dir", default="runs/translation",
                    help="directory holding *.bin checkpoints and test.tsv")
    ap.add_argument("--p-grid", default="0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    args = ap.parse_args()

    grid = [float(x) for x in args.p_grid.split(",")]
    test = data.read_dataset(os.path.join(args.run_dir, "test.tsv"))
    names = sorted(f for f in os.listdir(args.run_dir) if f.endswith(".bin"))
    if not names:
        raise SystemExit(f"no checkpoints in {args.run_dir}")
    for name in names:
        model, _, info = harness.model_from_checkpoint(
            ckpt_io.load_checkpoint(os.path.join(args.run_dir, name)))
        rows = harness.ablate(model, info, test, p_grid=grid)
        out = os.path.join(args.run_dir, name[:-4] + "_word_drop.csv")
        harness.write_ablation_csv(out, rows)
        print(name[:-4] + ":", " ".join(f"{p:.1f}:{b4:.1f}" for p, _, _, _, b4 in rows))
        print("wrote", out)


if __name__ == "__main__":
    main()
