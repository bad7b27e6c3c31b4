#!/usr/bin/env python3
"""Train, detect and evaluate one detector variant on the reference data.
Useful for cross-dataset runs: point --train-data and --test-data at
different dataset directories to train on one and test on the other."""

import argparse
import json
import sys
from pathlib import Path

from icfdet import cli
from icfdet.experiments import reference_run_config


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train-data", default="runs/data/reference")
    parser.add_argument("--test-data", default=None, help="defaults to --train-data")
    parser.add_argument("--variant", default="SquaresChnFtrs")
    parser.add_argument("--out", default="runs/baseline")
    parser.add_argument("--on-train", action="store_true", help="also evaluate on train")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = reference_run_config(args.train_data, out)
    cfg["variant"] = args.variant
    test_data = args.test_data or args.train_data
    cfg["test_dataset"] = f"{test_data}/test.json"
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(cfg, indent=1))
    for cmd in (["train"], ["detect"], ["eval"]):
        rc = cli.main(cmd + ["--config", str(cfg_path)])
        if rc != 0:
            return rc
    if args.on_train:
        for cmd in (["detect", "--on-train"], ["eval", "--on-train"]):
            rc = cli.main(cmd + ["--config", str(cfg_path)])
            if rc != 0:
                return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
