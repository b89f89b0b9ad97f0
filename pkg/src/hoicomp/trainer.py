"""Minibatch construction, SGD with momentum, and the training loop.

Minibatches are drawn as image pairs so between-image composition always has
material. All randomness flows through named streams derived from one seed
(batching, composition, weight init), which keeps ablations byte-for-byte
comparable: turning composition off, or setting its loss weight to zero,
leaves every other stream untouched and the two runs coincide step for step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .composer import ComposeConfig, compose_batch
from .errors import (
    DivergedTraining,
    InvalidConfig,
    NonFiniteGradient,
    NonFiniteLoss,
    NonFiniteUpdate,
)
from .label_algebra import HoiLabelSpace
from .network import (
    CompBatch,
    LossWeights,
    ModelParams,
    NetworkConfig,
    RealBatch,
    init_params,
    inverse_log_weights,
    loss_and_grads,
)
from .synthdata import Instance, class_counts


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings for one run."""

    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    iterations: int = 1000
    interactions_per_minibatch: int = 5
    compose: ComposeConfig = field(default_factory=ComposeConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    eval_every: int = 0

    def validate(self):
        if self.lr <= 0:
            raise InvalidConfig("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise InvalidConfig("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidConfig("weight_decay must be >= 0")
        if self.iterations < 0:
            raise InvalidConfig("iterations must be >= 0")
        if self.interactions_per_minibatch < 1:
            raise InvalidConfig("interactions_per_minibatch must be >= 1")
        self.compose.validate()
        self.loss_weights.validate()


def group_by_image(train: list[Instance]) -> list[np.ndarray]:
    """Instance indices per image, ordered by image id."""
    by_image: dict[int, list[int]] = {}
    for idx, inst in enumerate(train):
        by_image.setdefault(inst.image_id, []).append(idx)
    return [np.array(by_image[k], dtype=np.int64) for k in sorted(by_image)]


def _interleave(a: np.ndarray, b: np.ndarray) -> list[int]:
    out = []
    for k in range(max(len(a), len(b))):
        if k < len(a):
            out.append(int(a[k]))
        if k < len(b):
            out.append(int(b[k]))
    return out


def make_minibatch(
    train: list[Instance],
    cfg: TrainConfig,
    rng: np.random.Generator,
    groups: list[np.ndarray] | None = None,
) -> list[Instance]:
    """Draw ``interactions_per_minibatch`` instances as image pairs.

    Each draw picks two distinct images (when the dataset has at least two)
    and interleaves their instances, so any batch of size >= 2 spans two
    images and between-image composition has partners.
    """
    if not train:
        raise InvalidConfig("training set is empty")
    if groups is None:
        groups = group_by_image(train)
    k = cfg.interactions_per_minibatch
    chosen: list[int] = []
    while len(chosen) < k:
        if len(groups) >= 2:
            ia, ib = rng.choice(len(groups), size=2, replace=False)
            merged = _interleave(
                rng.permutation(groups[int(ia)]), rng.permutation(groups[int(ib)])
            )
        else:
            merged = [int(i) for i in rng.permutation(groups[0])]
        chosen.extend(merged)
    return [train[i] for i in chosen[:k]]


def init_momentum(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.blocks().items()}


def sgd_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: dict[str, np.ndarray],
    cfg: TrainConfig,
):
    """One SGD step with momentum and decoupled-from-nothing weight decay:
    v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
    Updates arrays in place and returns (params, state)."""
    for name, param in params.blocks().items():
        v = state[name]
        v *= cfg.momentum
        v += grads[name]
        if cfg.weight_decay:
            v += cfg.weight_decay * param
        param -= cfg.lr * v
        if not np.all(np.isfinite(param)):
            raise NonFiniteUpdate(f"parameter block {name} became non-finite")
    return params, state


def _resolve_class_weights(lw: LossWeights, counts: np.ndarray) -> LossWeights:
    if lw.class_weights is not None:
        return lw
    return replace(lw, class_weights=inverse_log_weights(counts))


def train(
    train_set: list[Instance],
    space: HoiLabelSpace,
    cfg: TrainConfig,
    net_cfg: NetworkConfig | None = None,
    test_set: list[Instance] | None = None,
    eval_fn=None,
):
    """Run the full loop and return (params, metrics log).

    The log holds one dict per iteration with the three loss components;
    when ``eval_every`` > 0 and an ``eval_fn(params) -> dict`` is supplied,
    its entries (e.g. mAP_full, mAP_rare) are merged into the record every
    ``eval_every`` iterations. Composition is skipped entirely when its mode
    is off or its loss weight is zero; both disable it identically.
    """
    cfg.validate()
    if not train_set:
        raise InvalidConfig("training set is empty")
    counts = class_counts(train_set, space)
    lw = _resolve_class_weights(cfg.loss_weights, counts)
    lw.validate(num_hois=space.num_hois)

    if net_cfg is None:
        net_cfg = NetworkConfig(
            num_hois=space.num_hois, feature_dim=len(train_set[0].human_feat)
        )
    params = init_params(net_cfg, rngmod.stream(cfg.seed, "init"))
    state = init_momentum(params)
    batch_rng = rngmod.stream(cfg.seed, "batch")
    comp_rng = rngmod.stream(cfg.seed, "compose")
    groups = group_by_image(train_set)

    use_comp = cfg.compose.mode != "off" and lw.lambda2 != 0.0
    log: list[dict] = []
    for it in range(cfg.iterations):
        batch = make_minibatch(train_set, cfg, batch_rng, groups=groups)
        comp = compose_batch(batch, space, cfg.compose, comp_rng) if use_comp else []
        real = RealBatch.from_instances(batch)
        try:
            total, comps, grads = loss_and_grads(real, CompBatch.from_composited(comp), params, lw)
            sgd_step(params, grads, state, cfg)
        except (NonFiniteLoss, NonFiniteGradient, NonFiniteUpdate) as exc:
            raise DivergedTraining(str(exc), iteration=it) from exc
        entry = {"iter": it, "L_sp": comps["L_sp"], "L_vo": comps["L_vo"], "L_comp": comps["L_comp"]}
        if cfg.eval_every > 0 and eval_fn is not None and (it + 1) % cfg.eval_every == 0:
            entry.update(eval_fn(params))
        log.append(entry)
    return params, log


# ---- metrics log file: one record per line, key=value pairs ----


def format_metric_value(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def format_metrics_log(log: list[dict]) -> str:
    lines = []
    for entry in log:
        lines.append(" ".join(f"{k}={format_metric_value(v)}" for k, v in entry.items()))
    return "\n".join(lines) + ("\n" if log else "")


def write_metrics_log(log: list[dict], path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_metrics_log(log))


def read_metrics_log(path) -> list[dict]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            entry = {}
            for token in line.split():
                key, val = token.split("=", 1)
                entry[key] = int(val) if key == "iter" else float(val)
            entries.append(entry)
    return entries
