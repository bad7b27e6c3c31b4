"""Boosted integral-channel-features detector toolkit."""

from .boost import BoostedForest, TrainConfig, WeakTree, best_stump, train_forest
from .boxes import Annotation, BoundingBox, Detection, iou
from .channels import ChannelStack, FrameTriplet, IntegralChannelStack
from .detect import PyramidConfig
from .errors import IcfdetError
from .evaluation import EvalCurve, log_avg_miss_rate, pr_auc, sweep_curve
from .featpool import FeaturePool, PoolingRegion, generate_pool
from .synth import SynthConfig
from .train import bootstrap_train
from .variants import parse_variant, train_config_for

__version__ = "0.1.0"
