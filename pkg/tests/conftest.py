import pytest

from icfdet import synth
from icfdet.detect import PyramidConfig
from icfdet.train import bootstrap_train
from icfdet.variants import parse_variant, train_config_for

TINY_SYNTH = synth.SynthConfig(
    seed=5,
    n_train_images=6,
    n_test_images=3,
    image_w=224,
    image_h=192,
    targets_min=1,
    targets_max=1,
    target_h_min=120,
    target_h_max=160,
    distractors_min=1,
    distractors_max=2,
)

TINY_PYRAMID = PyramidConfig(scales_per_octave=4, min_height=120, max_height=168)


def tiny_train_config(**overrides):
    base = dict(
        n_trees=24,
        shrink=2,
        bootstrap_rounds=1,
        initial_negatives_per_positive=2.0,
        negatives_per_round=40,
    )
    base.update(overrides)
    return train_config_for(parse_variant("SquaresChnFtrs"), seed=5, **base)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_synth")
    return synth.generate(TINY_SYNTH, out)


@pytest.fixture(scope="session")
def tiny_model(tiny_dataset):
    cfg = tiny_train_config()
    model, history = bootstrap_train(tiny_dataset.train_index, cfg, TINY_PYRAMID)
    return model, history, cfg
