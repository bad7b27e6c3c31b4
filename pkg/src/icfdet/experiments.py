"""Pinned configurations for the reference desk-scale experiments.

Scripts and the acceptance suite share these so every run of an experiment
is the same experiment: the reduced tree count / shrink-2 training setup,
the pyramid matched to the synthetic target heights, and the fusion knobs.
"""

REFERENCE_TRAIN = {
    "n_trees": 256,
    "shrink": 2,
    "bootstrap_rounds": 1,
    "initial_negatives_per_positive": 1.5,
    "negatives_per_round": 500,
}

REFERENCE_PYRAMID = {
    "scales_per_octave": 8,
    "min_height": 112,
    "max_height": 192,
}

REFERENCE_FUSION = {"weight": 3.0, "overlap": 0.5}

REFERENCE_SEED = 7
TEMPORAL_SEED = 11


def reference_run_config(data_dir, out_dir) -> dict:
    """CLI config for runs on the single-frame reference dataset."""
    return {
        "train_dataset": f"{data_dir}/train.json",
        "test_dataset": f"{data_dir}/test.json",
        "variant": "SquaresChnFtrs",
        "seed": REFERENCE_SEED,
        "out_dir": str(out_dir),
        "train": dict(REFERENCE_TRAIN),
        "pyramid": dict(REFERENCE_PYRAMID),
    }


def temporal_run_config(data_dir, out_dir) -> dict:
    """CLI config for runs on the temporal reference dataset."""
    return {
        "train_dataset": f"{data_dir}/train.json",
        "test_dataset": f"{data_dir}/test.json",
        "context": f"{data_dir}/context_test.txt",
        "seed": TEMPORAL_SEED,
        "out_dir": str(out_dir),
        "train": dict(REFERENCE_TRAIN),
        "pyramid": dict(REFERENCE_PYRAMID),
        "fusion": dict(REFERENCE_FUSION),
    }
