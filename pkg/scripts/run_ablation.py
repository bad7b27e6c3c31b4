#!/usr/bin/env python3
"""Train and evaluate the feature-ablation ladder (VJLike through
SquaresChnFtrs+DCT) on the reference synthetic dataset."""

import argparse
import json
import sys
from pathlib import Path

from icfdet import cli
from icfdet.experiments import reference_run_config


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", default="runs/data/reference", help="dataset directory")
    parser.add_argument("--out", default="runs/ablation", help="output directory")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = reference_run_config(args.data, out)
    cfg_path = out / "config.json"
    cfg_path.write_text(json.dumps(cfg, indent=1))
    return cli.main(["ablate", "--config", str(cfg_path)])


if __name__ == "__main__":
    sys.exit(main())
