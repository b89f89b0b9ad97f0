"""Compositional interaction learning on long-tail data, at desk scale.

The package decomposes interaction labels into verbs and objects, stitches
new interaction samples in feature space inside each minibatch, trains a
multi-branch classifier on real plus composited samples, and evaluates with
IoU-matched per-class average precision, including zero-shot splits.
"""

from .composer import ComposeConfig, CompositedInstance, compose_batch
from .evaluator import (
    Detection,
    EvalReport,
    GroundTruth,
    ThresholdConfig,
    detections_from_model,
    evaluate,
    ground_truths_from_instances,
    iou,
)
from .label_algebra import (
    HoiLabelSpace,
    build_space,
    compose,
    decompose,
    is_feasible,
    load_space,
    save_space,
)
from .network import (
    LossWeights,
    ModelParams,
    NetworkConfig,
    Scores,
    backward,
    branch_scores,
    forward_spatial_human,
    forward_verb_object,
    fuse_scores,
    init_params,
    load_params,
    loss_total,
    save_params,
)
from .spatial import Box2D, SpatialMap, encode_spatial_map
from .synthdata import (
    DatasetConfig,
    Instance,
    class_counts,
    generate,
    load_dataset,
    save_dataset,
)
from .trainer import TrainConfig, make_minibatch, sgd_step, train
from .zeroshot import ZeroShotSplit, apply_split, load_split, make_split, save_split

__version__ = "0.1.0"
