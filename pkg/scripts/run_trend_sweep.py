#!/usr/bin/env python3
"""Quality/cost trade-off experiment: SDR, spectral distance, and RTF vs n_phi.

Drives the `gse` command line end to end.  Without --score-ckpt/--denoiser-ckpt
it first trains the full desk-scale recipe (a few minutes of CPU), then sweeps
the guided-step count and prints the per-n_phi median rows of the resulting
table.  Artifacts (checkpoints, sweep.csv, manifests) land under --out.
"""

import argparse
import csv
import sys
from pathlib import Path

from gse.cli import main as gse


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/trend", help="output directory")
    ap.add_argument("--score-ckpt", help="reuse an existing score checkpoint")
    ap.add_argument("--denoiser-ckpt", help="reuse an existing denoiser checkpoint")
    ap.add_argument("--n-phi-list", default="0,6,12,18,24,30")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--utterances", type=int, default=6, help="test utterances per cell")
    return ap.parse_args()


def train_if_needed(args, out: Path) -> tuple[str, str]:
    if args.score_ckpt and args.denoiser_ckpt:
        return args.score_ckpt, args.denoiser_ckpt
    recipes = {
        "score": ["--steps", "6000", "--hidden", "160", "--seed", "0"],
        "denoiser": ["--steps", "2500", "--hidden", "96", "--seed", "1"],
    }
    for role, extra in recipes.items():
        print(f"training {role} model ...", flush=True)
        rc = gse(["train", "--role", role, "--out", str(out / role),
                  "--utterances", "96", "--frame-size", "40", "--batch-size", "8",
                  "--probe-every", "500", *extra])
        if rc != 0:
            sys.exit(rc)
    return str(out / "score" / "score.npz"), str(out / "denoiser" / "denoiser.npz")


def main():
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    score_ckpt, denoiser_ckpt = train_if_needed(args, out)
    rc = gse(["sweep-nphi", "--out", str(out), "--score-ckpt", score_ckpt,
              "--denoiser-ckpt", denoiser_ckpt, "--n-phi-list", args.n_phi_list,
              "--seeds", args.seeds, "--utterances", str(args.utterances)])
    if rc != 0:
        sys.exit(rc)
    with open(out / "sweep.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["seed"] == "median"]
    print(f"\nmedians over seeds {args.seeds} ({args.utterances} utterances per cell):")
    print(f"{'n_phi':>6} {'SDR dB':>8} {'LSD dB':>8} {'fwd':>5} {'MMACs':>9} {'RTF':>7}")
    for r in rows:
        print(f"{r['n_phi']:>6} {float(r['sdr_db']):>8.2f} {float(r['lsd']):>8.2f} "
              f"{r['score_net_forwards']:>5} {int(r['mac_total']) / 1e6:>9.1f} "
              f"{float(r['rtf']):>7.3f}")


if __name__ == "__main__":
    main()
