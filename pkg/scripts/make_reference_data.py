#!/usr/bin/env python3
"""Generate the two fixed synthetic datasets used by the experiments:
the single-frame reference set and the temporal set with context files."""

import argparse
from pathlib import Path

from icfdet.synth import generate, reference_config, reference_temporal_config


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/data", help="output root directory")
    args = parser.parse_args()
    root = Path(args.out)
    out = generate(reference_config(), root / "reference")
    print(f"reference:          {out.train_manifest}  {out.test_manifest}")
    out_t = generate(reference_temporal_config(), root / "reference_temporal")
    print(f"reference_temporal: {out_t.train_manifest}  {out_t.test_manifest}")
    print(f"context files:      {out_t.context_train}  {out_t.context_test}")


if __name__ == "__main__":
    main()
