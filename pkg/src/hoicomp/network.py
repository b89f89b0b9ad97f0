"""Multi-branch interaction classifier with hand-rolled gradients.

Three branches share parameters in two places. A single feature stream (one
rectified hidden layer) is applied to BOTH the human feature and the verb
feature; its weight block exists once, so gradients accumulate from both
paths. The verb-object head classifies the concatenated verb/object stream
outputs, and the composition branch reuses that exact head on composited
samples, so composited and real features with identical values produce
identical logits.

Targets are multi-label, so every loss term is per-class sigmoid binary
cross entropy, class-reweighted, summed over classes and averaged over
instances. The total is ``L_sp + lambda1 * L_vo + lambda2 * L_comp``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .composer import CompositedInstance
from .errors import (
    DimensionMismatch,
    NonFiniteGradient,
    NonFiniteInput,
    NonFiniteLoss,
    OutOfRange,
)
from .spatial import GRID_SIZE, SpatialMap, spatial_vector
from .synthdata import Instance

BRANCH_MODES = ("both", "vo_only", "sp_only")

BLOCK_NAMES = (
    "shared_w", "shared_b",
    "obj_w", "obj_b",
    "sp_w1", "sp_b1", "sp_w2", "sp_b2",
    "vo_w1", "vo_b1", "vo_w2", "vo_b2", "vo_w3", "vo_b3",
)


@dataclass(frozen=True)
class NetworkConfig:
    """Layer widths. The 1024-wide heads of a full-scale run stay available
    through ``vo_hidden``; defaults are sized for fast desk runs."""

    num_hois: int
    feature_dim: int = 32
    hidden: int = 64
    vo_hidden: int = 128
    sp_hidden: int = 64
    spatial_dim: int = 2 * GRID_SIZE * GRID_SIZE


@dataclass
class ModelParams:
    """All learnable blocks. ``shared_w``/``shared_b`` is physically one
    block used by both the human path and the verb path."""

    shared_w: np.ndarray
    shared_b: np.ndarray
    obj_w: np.ndarray
    obj_b: np.ndarray
    sp_w1: np.ndarray
    sp_b1: np.ndarray
    sp_w2: np.ndarray
    sp_b2: np.ndarray
    vo_w1: np.ndarray
    vo_b1: np.ndarray
    vo_w2: np.ndarray
    vo_b2: np.ndarray
    vo_w3: np.ndarray
    vo_b3: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BLOCK_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.blocks().items()})

    @property
    def hidden(self) -> int:
        return self.shared_w.shape[1]

    @property
    def num_hois(self) -> int:
        return self.vo_w3.shape[1]

    @property
    def spatial_dim(self) -> int:
        return self.sp_w1.shape[0] - self.hidden


def _fan_in_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape)


def _bias_uniform(rng: np.random.Generator, fan_in: int, size: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=size)


def init_params(cfg: NetworkConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform init scaled by fan-in, weights and biases alike."""
    d, h, q, p, s, c = (
        cfg.feature_dim, cfg.hidden, cfg.vo_hidden, cfg.sp_hidden,
        cfg.spatial_dim, cfg.num_hois,
    )
    return ModelParams(
        shared_w=_fan_in_uniform(rng, (d, h)), shared_b=_bias_uniform(rng, d, h),
        obj_w=_fan_in_uniform(rng, (d, h)), obj_b=_bias_uniform(rng, d, h),
        sp_w1=_fan_in_uniform(rng, (h + s, p)), sp_b1=_bias_uniform(rng, h + s, p),
        sp_w2=_fan_in_uniform(rng, (p, c)), sp_b2=_bias_uniform(rng, p, c),
        vo_w1=_fan_in_uniform(rng, (2 * h, q)), vo_b1=_bias_uniform(rng, 2 * h, q),
        vo_w2=_fan_in_uniform(rng, (q, q)), vo_b2=_bias_uniform(rng, q, q),
        vo_w3=_fan_in_uniform(rng, (q, c)), vo_b3=_bias_uniform(rng, q, c),
    )


def zero_like_params(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.blocks().items()}


@dataclass(frozen=True)
class LossWeights:
    """Loss mixing factors plus per-class reweighting vector (mean 1)."""

    lambda1: float = 2.0
    lambda2: float = 0.5
    class_weights: np.ndarray | None = None

    def validate(self, num_hois=None):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise OutOfRange("lambda weights must be non-negative")
        if self.class_weights is not None:
            w = np.asarray(self.class_weights)
            if num_hois is not None and w.shape != (num_hois,):
                raise DimensionMismatch(f"class_weights shape {w.shape}, expected ({num_hois},)")
            if not np.all(w > 0):
                raise OutOfRange("class_weights must be strictly positive")

    def resolved_weights(self, num_hois: int) -> np.ndarray:
        if self.class_weights is None:
            return np.ones(num_hois)
        return np.asarray(self.class_weights, dtype=np.float64)


def inverse_log_weights(counts, eps: float = 1.0) -> np.ndarray:
    """Inverse-log-frequency class weights, normalized to mean 1.

    Zero counts are clipped to 1 so the weight stays finite (matters for
    unseen classes after a zero-shot split).
    """
    counts = np.maximum(np.asarray(counts, dtype=np.float64), 1.0)
    w = 1.0 / np.log(eps + counts)
    return w / w.mean()


@dataclass(frozen=True)
class Scores:
    """Per-class branch probabilities for one human-object pair."""

    s_sp: np.ndarray
    s_verb_obj: np.ndarray


# ---- batch containers ----


@dataclass(frozen=True)
class RealBatch:
    """Columnar view of a minibatch of real instances."""

    human_feat: np.ndarray   # (n, D)
    verb_feat: np.ndarray    # (n, D)
    object_feat: np.ndarray  # (n, D)
    spatial: np.ndarray      # (n, S)
    label: np.ndarray        # (n, C) float

    def __len__(self) -> int:
        return self.human_feat.shape[0]

    @classmethod
    def from_instances(cls, batch: list[Instance]) -> "RealBatch":
        return cls(
            human_feat=np.stack([b.human_feat for b in batch]).astype(np.float64),
            verb_feat=np.stack([b.verb_feat for b in batch]).astype(np.float64),
            object_feat=np.stack([b.object_feat for b in batch]).astype(np.float64),
            spatial=np.stack(
                [spatial_vector(b.human_box, b.object_box) for b in batch]
            ),
            label=np.stack([b.label for b in batch]).astype(np.float64),
        )


@dataclass(frozen=True)
class CompBatch:
    """Columnar view of composited samples (verb/object features only)."""

    verb_feat: np.ndarray
    object_feat: np.ndarray
    label: np.ndarray

    def __len__(self) -> int:
        return self.verb_feat.shape[0]

    @classmethod
    def from_composited(cls, comp: list[CompositedInstance]) -> "CompBatch":
        if not comp:
            return cls(*(np.zeros((0, 0)),) * 3)
        return cls(
            verb_feat=np.stack([c.verb_feat for c in comp]).astype(np.float64),
            object_feat=np.stack([c.object_feat for c in comp]).astype(np.float64),
            label=np.stack([c.label for c in comp]).astype(np.float64),
        )


# ---- forward passes ----


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_2d(x, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatch(f"{what} has shape {x.shape}, expected (*, {dim})")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"{what} contains non-finite values")
    return x, single


def _spatial_input(smap):
    if isinstance(smap, SpatialMap):
        return smap.as_vector()
    return smap


def _vo_forward(verb_x: np.ndarray, obj_x: np.ndarray, p: ModelParams):
    sv_pre = verb_x @ p.shared_w + p.shared_b
    sv = np.maximum(sv_pre, 0.0)
    so_pre = obj_x @ p.obj_w + p.obj_b
    so = np.maximum(so_pre, 0.0)
    z = np.concatenate([sv, so], axis=1)
    h1_pre = z @ p.vo_w1 + p.vo_b1
    h1 = np.maximum(h1_pre, 0.0)
    h2_pre = h1 @ p.vo_w2 + p.vo_b2
    h2 = np.maximum(h2_pre, 0.0)
    logits = h2 @ p.vo_w3 + p.vo_b3
    cache = (verb_x, obj_x, sv_pre, so_pre, z, h1_pre, h1, h2_pre, h2)
    return logits, cache


def spatial_input_scale(params: ModelParams) -> float:
    """Scale applied to the flattened spatial map before the spatial head.

    The binary map has far more active inputs than the human stream; scaling
    it by sqrt(hidden / spatial_dim) balances the two sources' contribution
    to the head's pre-activations.
    """
    return float(np.sqrt(params.hidden / params.spatial_dim))


def _sp_forward(human_x: np.ndarray, smap_x: np.ndarray, p: ModelParams):
    sh_pre = human_x @ p.shared_w + p.shared_b
    sh = np.maximum(sh_pre, 0.0)
    z = np.concatenate([sh, spatial_input_scale(p) * smap_x], axis=1)
    h_pre = z @ p.sp_w1 + p.sp_b1
    h = np.maximum(h_pre, 0.0)
    logits = h @ p.sp_w2 + p.sp_b2
    cache = (human_x, sh_pre, z, h_pre, h)
    return logits, cache


def forward_verb_object(verb_feat, object_feat, params: ModelParams) -> np.ndarray:
    """Logits of the verb-object head; accepts one vector or a batch."""
    d = params.shared_w.shape[0]
    verb_x, single = _as_2d(verb_feat, d, "verb feature")
    obj_x, _ = _as_2d(object_feat, d, "object feature")
    logits, _ = _vo_forward(verb_x, obj_x, params)
    return logits[0] if single else logits


def forward_spatial_human(human_feat, smap, params: ModelParams) -> np.ndarray:
    """Logits of the spatial-human head; ``smap`` may be a SpatialMap or a flat vector."""
    d = params.shared_w.shape[0]
    s = params.spatial_dim
    human_x, single = _as_2d(human_feat, d, "human feature")
    smap_x, _ = _as_2d(_spatial_input(smap), s, "spatial map")
    if smap_x.shape[0] == 1 and human_x.shape[0] > 1:
        smap_x = np.broadcast_to(smap_x, (human_x.shape[0], s))
    logits, _ = _sp_forward(human_x, smap_x, params)
    return logits[0] if single else logits


# ---- loss and gradients ----


def _weighted_bce(logits: np.ndarray, targets: np.ndarray, w: np.ndarray) -> float:
    # stable elementwise BCE with logits
    per = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return float((per * w).sum(axis=1).mean())


def _bce_grad(logits, targets, w, coef: float) -> np.ndarray:
    return coef * w * (sigmoid(logits) - targets) / logits.shape[0]


def _vo_backward(g_out: np.ndarray, cache, p: ModelParams, grads: dict):
    verb_x, obj_x, sv_pre, so_pre, z, h1_pre, h1, h2_pre, h2 = cache
    h = p.hidden
    grads["vo_w3"] += h2.T @ g_out
    grads["vo_b3"] += g_out.sum(axis=0)
    g2 = (g_out @ p.vo_w3.T) * (h2_pre > 0)
    grads["vo_w2"] += h1.T @ g2
    grads["vo_b2"] += g2.sum(axis=0)
    g1 = (g2 @ p.vo_w2.T) * (h1_pre > 0)
    grads["vo_w1"] += z.T @ g1
    grads["vo_b1"] += g1.sum(axis=0)
    gz = g1 @ p.vo_w1.T
    g_sv = gz[:, :h] * (sv_pre > 0)
    g_so = gz[:, h:] * (so_pre > 0)
    grads["shared_w"] += verb_x.T @ g_sv
    grads["shared_b"] += g_sv.sum(axis=0)
    grads["obj_w"] += obj_x.T @ g_so
    grads["obj_b"] += g_so.sum(axis=0)


def _sp_backward(g_out: np.ndarray, cache, p: ModelParams, grads: dict):
    human_x, sh_pre, z, h_pre, h_act = cache
    h = p.hidden
    grads["sp_w2"] += h_act.T @ g_out
    grads["sp_b2"] += g_out.sum(axis=0)
    g1 = (g_out @ p.sp_w2.T) * (h_pre > 0)
    grads["sp_w1"] += z.T @ g1
    grads["sp_b1"] += g1.sum(axis=0)
    gz = g1 @ p.sp_w1.T
    g_sh = gz[:, :h] * (sh_pre > 0)
    grads["shared_w"] += human_x.T @ g_sh
    grads["shared_b"] += g_sh.sum(axis=0)


def _coerce_real(real) -> RealBatch:
    if isinstance(real, RealBatch):
        return real
    return RealBatch.from_instances(list(real))


def _coerce_comp(comp) -> CompBatch:
    if comp is None:
        return CompBatch.from_composited([])
    if isinstance(comp, CompBatch):
        return comp
    return CompBatch.from_composited(list(comp))


def loss_and_grads(real, comp, params: ModelParams, lw: LossWeights):
    """Joint forward/backward over one minibatch.

    Returns:
        (total_loss, components, grads) where components maps
        L_sp / L_vo / L_comp to floats and grads maps block names to arrays.
    """
    real = _coerce_real(real)
    comp = _coerce_comp(comp)
    if len(real) == 0:
        raise NonFiniteLoss("real batch is empty")
    c = params.num_hois
    lw.validate(num_hois=c)
    w = lw.resolved_weights(c)

    vo_logits, vo_cache = _vo_forward(real.verb_feat, real.object_feat, params)
    sp_logits, sp_cache = _sp_forward(real.human_feat, real.spatial, params)
    loss_sp = _weighted_bce(sp_logits, real.label, w)
    loss_vo = _weighted_bce(vo_logits, real.label, w)

    if len(comp):
        comp_logits, comp_cache = _vo_forward(comp.verb_feat, comp.object_feat, params)
        loss_comp = _weighted_bce(comp_logits, comp.label, w)
    else:
        loss_comp = 0.0

    total = loss_sp + lw.lambda1 * loss_vo + lw.lambda2 * loss_comp
    if not np.isfinite(total):
        raise NonFiniteLoss(f"loss is {total}")

    grads = zero_like_params(params)
    _sp_backward(_bce_grad(sp_logits, real.label, w, 1.0), sp_cache, params, grads)
    _vo_backward(_bce_grad(vo_logits, real.label, w, lw.lambda1), vo_cache, params, grads)
    if len(comp):
        _vo_backward(
            _bce_grad(comp_logits, comp.label, w, lw.lambda2), comp_cache, params, grads
        )
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient block {name} is non-finite")

    components = {"L_sp": loss_sp, "L_vo": loss_vo, "L_comp": loss_comp}
    return total, components, grads


def loss_total(real, comp, params: ModelParams, lw: LossWeights) -> float:
    """Scalar training loss; see ``loss_and_grads`` for the pieces."""
    real = _coerce_real(real)
    comp = _coerce_comp(comp)
    if len(real) == 0:
        raise NonFiniteLoss("real batch is empty")
    c = params.num_hois
    lw.validate(num_hois=c)
    w = lw.resolved_weights(c)
    vo_logits, _ = _vo_forward(real.verb_feat, real.object_feat, params)
    sp_logits, _ = _sp_forward(real.human_feat, real.spatial, params)
    total = _weighted_bce(sp_logits, real.label, w) + lw.lambda1 * _weighted_bce(
        vo_logits, real.label, w
    )
    if len(comp):
        comp_logits, _ = _vo_forward(comp.verb_feat, comp.object_feat, params)
        total += lw.lambda2 * _weighted_bce(comp_logits, comp.label, w)
    if not np.isfinite(total):
        raise NonFiniteLoss(f"loss is {total}")
    return float(total)


def backward(real, comp, params: ModelParams, lw: LossWeights) -> dict[str, np.ndarray]:
    """Analytic gradients of ``loss_total`` for every parameter block."""
    _, _, grads = loss_and_grads(real, comp, params, lw)
    return grads


# ---- inference-time scoring ----


def branch_scores(params: ModelParams, human_feat, verb_feat, object_feat, smap) -> Scores:
    """Per-class sigmoid probabilities of both branches for one pair."""
    return Scores(
        s_sp=sigmoid(forward_spatial_human(human_feat, smap, params)),
        s_verb_obj=sigmoid(forward_verb_object(verb_feat, object_feat, params)),
    )


def fuse_scores(s_h: float, s_o: float, scores: Scores, branch_mode: str = "both") -> np.ndarray:
    """Final per-class score: product of detector confidences and branch scores.

    Ablation modes replace one branch's factor with 1: ``vo_only`` ignores
    the spatial-human branch, ``sp_only`` ignores the verb-object branch.
    """
    if branch_mode not in BRANCH_MODES:
        raise OutOfRange(f"branch_mode must be one of {BRANCH_MODES}")
    for name, val in (("s_h", s_h), ("s_o", s_o)):
        if not 0.0 <= val <= 1.0:
            raise OutOfRange(f"{name}={val} outside [0, 1]")
    s_sp = np.asarray(scores.s_sp, dtype=np.float64)
    s_vo = np.asarray(scores.s_verb_obj, dtype=np.float64)
    for name, arr in (("s_sp", s_sp), ("s_verb_obj", s_vo)):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise OutOfRange(f"{name} outside [0, 1]")
    if branch_mode == "vo_only":
        s_sp = np.ones_like(s_sp)
    elif branch_mode == "sp_only":
        s_vo = np.ones_like(s_vo)
    return s_h * s_o * s_vo * s_sp


# ---- checkpoint file ----
# Versioned text header (block names, shapes, optional meta) followed by the
# raw little-endian float64 bytes of every block in header order. Round-trips
# exactly and is byte-stable across reruns.

CHECKPOINT_MAGIC = "HOICOMP-CKPT"
CHECKPOINT_VERSION = 1
_DATA_MARKER = b"\n[data]\n"


def save_params(params: ModelParams, path, meta: dict | None = None):
    """Write a versioned checkpoint; round-trips exactly."""
    header = {
        "version": CHECKPOINT_VERSION,
        "blocks": [[name, list(arr.shape)] for name, arr in params.blocks().items()],
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC.encode() + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(_DATA_MARKER)
        for arr in params.blocks().values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, _, rest = blob.partition(b"\n")
    if magic.decode(errors="replace") != CHECKPOINT_MAGIC:
        raise DimensionMismatch(f"not a checkpoint file: {path}")
    header_bytes, sep, data = rest.partition(_DATA_MARKER)
    if not sep:
        raise DimensionMismatch("checkpoint missing data section")
    header = json.loads(header_bytes.decode())
    if header.get("version") != CHECKPOINT_VERSION:
        raise DimensionMismatch(f"unsupported checkpoint version {header.get('version')}")
    blocks = {}
    offset = 0
    for name, shape in header["blocks"]:
        n = int(np.prod(shape)) if shape else 1
        raw = data[offset : offset + 8 * n]
        if len(raw) != 8 * n:
            raise DimensionMismatch(f"checkpoint truncated in block {name}")
        blocks[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * n
    return ModelParams(**blocks), header.get("meta", {})
