"""Compose new interaction samples inside a minibatch.

Every ordered pair of distinct instances donates the verb feature of one and
the object feature of the other; the pair's label is recomposed through the
label space and infeasible combinations (no matching class) are dropped.
Within-image and between-image pairs run through the same path and differ
only in a provenance flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, InvalidConfig
from .label_algebra import HoiLabelSpace, decompose
from .synthdata import Instance

MODES = ("within", "between", "both", "off")


@dataclass(frozen=True)
class ComposeConfig:
    """Composition settings for one training run.

    ``unseen_ids`` lists classes excluded from training labels; when
    ``unseen_allowed`` is false those bits are zeroed out of composed labels
    (candidates left all-zero are dropped), and when true they are kept,
    which is what makes zero-shot training work.
    """

    mode: str = "both"
    interactions_per_minibatch: int = 5
    balance: bool = True
    unseen_allowed: bool = False
    unseen_ids: frozenset = frozenset()

    def validate(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.interactions_per_minibatch < 1:
            raise InvalidConfig("interactions_per_minibatch must be >= 1")


@dataclass(frozen=True)
class CompositedInstance:
    """A stitched sample: verb feature from one instance, object feature from another."""

    verb_feat: np.ndarray
    object_feat: np.ndarray
    label: np.ndarray
    provenance: tuple  # (verb source index, object source index, "within"|"between")


def compose_batch(
    batch: list[Instance],
    space: HoiLabelSpace,
    cfg: ComposeConfig,
    rng: np.random.Generator,
) -> list[CompositedInstance]:
    """Enumerate, label, filter, and optionally balance composited samples.

    Candidates are all ordered (verb source i, object source j) pairs with
    i != j permitted by ``cfg.mode`` (within: same image, between: different
    images, both: all). Each candidate's label is the recomposition of
    instance j's object with instance i's verbs; infeasible candidates are
    removed. With ``balance``, at most one composited sample per real
    interaction in the batch survives, chosen uniformly without replacement.
    """
    cfg.validate()
    if len(batch) == 0:
        raise EmptyBatch("compose_batch needs at least one instance")
    if cfg.mode == "off":
        return []

    labels = np.stack([inst.label for inst in batch])
    _, l_v = decompose(labels, space)
    # class hits per instance for its verbs / its object
    verb_hits = (l_v.astype(np.int64) @ space.verb_hoi.astype(np.int64)) > 0
    obj_by_hoi = space.objects_by_hoi()
    object_hits = np.stack([obj_by_hoi == inst.object_id for inst in batch])

    n = len(batch)
    unseen = sorted(cfg.unseen_ids)
    candidates = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            same_image = batch[i].image_id == batch[j].image_id
            if cfg.mode == "within" and not same_image:
                continue
            if cfg.mode == "between" and same_image:
                continue
            label = (verb_hits[i] & object_hits[j]).astype(np.uint8)
            if not cfg.unseen_allowed and unseen:
                label[unseen] = 0
            if not label.any():
                continue
            candidates.append(
                CompositedInstance(
                    verb_feat=batch[i].verb_feat,
                    object_feat=batch[j].object_feat,
                    label=label,
                    provenance=(i, j, "within" if same_image else "between"),
                )
            )

    if cfg.balance and len(candidates) > n:
        keep = np.sort(rng.choice(len(candidates), size=n, replace=False))
        candidates = [candidates[int(k)] for k in keep]
    return candidates
