#!/usr/bin/env python3
"""Run the whole pipeline end to end on both benchmark environments.

For each environment this generates a scripted-policy dataset, trains the
quantized-code model and the continuous-latent baseline, exports per-code
action fields for the quantized model, and runs the paired alignment-error
comparison. Exit status is the worst comparison outcome (0 ok, 3 gate
failed, 4 degenerate statistics); any earlier failure aborts immediately.
"""

import argparse
import sys
import time
from pathlib import Path

from tomfield import cli

FULL = {"highway": 300, "obstacle": 400}
QUICK = {"highway": 60, "obstacle": 60}


def step(args: list[str], allow: tuple = (0,)) -> int:
    print(f"\n$ tomfield {' '.join(args)}", flush=True)
    rc = cli.main(args)
    if rc not in allow:
        print(f"pipeline aborted: exit code {rc}", file=sys.stderr)
        sys.exit(rc)
    return rc


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="runs/pipeline",
                    help="output root (default: runs/pipeline)")
    ap.add_argument("--quick", action="store_true",
                    help="small datasets and short training; a smoke run, "
                         "not expected to clear the comparison gate")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    out = Path(args.outdir)
    sizes = QUICK if args.quick else FULL
    epochs = 25 if args.quick else 200
    seed = str(args.seed)
    started = time.monotonic()
    gates = {}

    for env in ("highway", "obstacle"):
        env_dir = out / env
        data = env_dir / "data.jsonl"
        env_dir.mkdir(parents=True, exist_ok=True)
        step(["gen-data", "--env", env, "--n", str(sizes[env]),
              "--seed", seed, "--out", str(data)])
        for model in ("fsq", "vae"):
            step(["train", "--data", str(data), "--model", model,
                  "--out", str(env_dir / model), "--epochs", str(epochs),
                  "--seed", seed])
        step(["field", "--checkpoint", str(env_dir / "fsq" / "checkpoint.json"),
              "--out", str(env_dir / "fields")])
        gates[env] = step(["compare", "--data", str(data),
                           "--fsq", str(env_dir / "fsq" / "checkpoint.json"),
                           "--vae", str(env_dir / "vae" / "checkpoint.json"),
                           "--seed", seed, "--out", str(env_dir / "comparison.csv")],
                          allow=(0, 3, 4))

    print(f"\ndone in {time.monotonic() - started:.1f}s")
    for env, rc in gates.items():
        verdict = {0: "quantized model better", 3: "gate failed",
                   4: "degenerate statistics"}[rc]
        print(f"{env}: {verdict} (exit {rc})")
    return max(gates.values())


if __name__ == "__main__":
    sys.exit(main())
