#!/usr/bin/env python3
"""The command-line pipeline, driven from Python.

Equivalent shell session::

    python -m eventface.cli simulate --config configs/desk.yaml --out run/events
    python -m eventface.cli encode   --config configs/desk.yaml --events run/events --out run/frames
    python -m eventface.cli train --stage 1 --config configs/desk.yaml --data run/frames --out run/stage1
    python -m eventface.cli train --stage 2 --config configs/desk.yaml --data run/frames --out run/stage2 \\
        --stage1-checkpoint run/stage1/checkpoint.efck
    python -m eventface.cli eval --config configs/desk.yaml --data run/frames \\
        --checkpoint run/stage2/checkpoint.efck --out run/eval
    python -m eventface.cli verify

Here a reduced configuration keeps it under a minute.
"""

import sys
import tempfile
from pathlib import Path

from eventface.cli import main

quick = ["--set", "num_ids=5", "--set", "sequences_per_id=6", "--set", "epochs_stage1=6",
         "--set", "epochs_stage2=2", "--set", "pretrain_ids=16", "--set", "pretrain_epochs=3"]

with tempfile.TemporaryDirectory() as tmp:
    run = Path(tmp)
    steps = [
        ["simulate", *quick, "--out", str(run / "events")],
        ["encode", *quick, "--events", str(run / "events"), "--out", str(run / "frames")],
        ["train", "--stage", "1", *quick, "--data", str(run / "frames"), "--out", str(run / "stage1")],
        ["train", "--stage", "2", *quick, "--data", str(run / "frames"), "--out", str(run / "stage2"),
         "--stage1-checkpoint", str(run / "stage1" / "checkpoint.efck")],
        ["eval", *quick, "--data", str(run / "frames"), "--checkpoint", str(run / "stage2" / "checkpoint.efck"),
         "--out", str(run / "eval")],
    ]
    for args in steps:
        print("$ eventface", args[0], flush=True)
        code = main(args)
        if code:
            sys.exit(code)
    for p in sorted(run.rglob("*")):
        if p.is_file() and "events/" not in str(p) and "frames/" not in str(p):
            print("  ", p.relative_to(run))

    # running a command again without --overwrite is refused (exit code 1)
    print("re-run without --overwrite ->", main(["simulate", *quick, "--out", str(run / "events")]))
    # stage 2 from a stage-2 checkpoint is a data error (exit code 2)
    print("stage order violation      ->", main(["train", "--stage", "2", *quick, "--data", str(run / "frames"),
                                               "--out", str(run / "bad"),
                                               "--stage1-checkpoint", str(run / "stage2" / "checkpoint.efck")]))
