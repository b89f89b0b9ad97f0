"""Unseen-class splits under the verb/object coverage constraint.

A split moves ``n_unseen`` interaction classes out of the training label set
while guaranteeing that every verb and every object still occurs in some
remaining (seen) class. Candidates are scanned greedily by training-instance
count, rarest first or most frequent first; a candidate joins the unseen set
only if removing it keeps coverage, otherwise it is skipped. The greedy scan
is deterministic given the counts and the tie-break seed, and the resulting
split can be exported/imported as a small text file so runs stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np

from . import rng as rngmod
from .errors import InfeasibleSplit, InvalidConfig, ParseError
from .label_algebra import HoiLabelSpace
from .synthdata import Instance

STRATEGIES = ("rare_first", "nonrare_first")


@dataclass
class ZeroShotSplit:
    unseen: frozenset
    seen: frozenset
    strategy: str
    seed: int = 0
    removed_instance_count: int = 0


def make_split(
    counts,
    space: HoiLabelSpace,
    n_unseen: int,
    strategy: str,
    tie_break_seed: int = 0,
) -> ZeroShotSplit:
    """Select ``n_unseen`` classes greedily while preserving coverage.

    Ordering is by ascending count (rare_first) or descending count
    (nonrare_first); ties are broken by a seeded shuffle. A class is skipped
    when moving it to unseen would leave one of its verbs or its object with
    no remaining class.

    Raises:
        InfeasibleSplit: the scan cannot reach ``n_unseen``; the message
            names a blocking verb or object.
    """
    counts = np.asarray(counts)
    num_hois = space.num_hois
    if counts.shape != (num_hois,):
        raise InvalidConfig(f"counts has shape {counts.shape}, expected ({num_hois},)")
    if strategy not in STRATEGIES:
        raise InvalidConfig(f"strategy must be one of {STRATEGIES}")
    if not 0 <= n_unseen < num_hois:
        raise InvalidConfig("n_unseen must satisfy 0 <= n_unseen < num_hois")

    perm = rngmod.stream(tie_break_seed, "split-ties").permutation(num_hois)
    sign = 1 if strategy == "rare_first" else -1
    order = sorted(range(num_hois), key=lambda c: (sign * int(counts[c]), int(perm[c]), c))

    verb_cover = space.verb_hoi.sum(axis=1).astype(np.int64)
    object_cover = space.object_hoi.sum(axis=1).astype(np.int64)
    obj_by_hoi = space.objects_by_hoi()

    unseen: list[int] = []
    first_blocker = None
    for c in order:
        if len(unseen) == n_unseen:
            break
        verbs = space.verbs_of(c)
        obj = int(obj_by_hoi[c])
        blocked_verb = next((v for v in verbs if verb_cover[v] <= 1), None)
        if blocked_verb is not None:
            if first_blocker is None:
                first_blocker = f"verb {space.verb_names[blocked_verb]!r} (class {c})"
            continue
        if object_cover[obj] <= 1:
            if first_blocker is None:
                first_blocker = f"object {space.object_names[obj]!r} (class {c})"
            continue
        unseen.append(c)
        for v in verbs:
            verb_cover[v] -= 1
        object_cover[obj] -= 1

    if len(unseen) < n_unseen:
        detail = f"; first blocked candidate: {first_blocker}" if first_blocker else ""
        raise InfeasibleSplit(
            f"only {len(unseen)} of {n_unseen} unseen classes selectable under coverage{detail}"
        )
    unseen_set = frozenset(unseen)
    return ZeroShotSplit(
        unseen=unseen_set,
        seen=frozenset(range(num_hois)) - unseen_set,
        strategy=strategy,
        seed=tie_break_seed,
    )


def apply_split(train: list[Instance], split: ZeroShotSplit) -> list[Instance]:
    """Strip unseen label bits from the training set.

    Instances whose labels are entirely unseen are dropped; mixed-label
    instances keep their seen bits. The number of dropped instances is
    recorded on the split.
    """
    unseen = sorted(split.unseen)
    kept: list[Instance] = []
    removed = 0
    for inst in train:
        if not unseen:
            kept.append(inst)
            continue
        label = inst.label.copy()
        label[unseen] = 0
        if not label.any():
            removed += 1
            continue
        if label.sum() == inst.label.sum():
            kept.append(inst)
        else:
            kept.append(dc_replace(inst, label=label))
    split.removed_instance_count = removed
    return kept


# ---- reporting partitions ----


def frequency_partition(counts, rare_threshold: int = 10) -> dict[str, frozenset]:
    """Rare/non-rare class sets: rare means fewer than ``rare_threshold``
    training instances."""
    counts = np.asarray(counts)
    rare = frozenset(int(c) for c in np.flatnonzero(counts < rare_threshold))
    nonrare = frozenset(range(len(counts))) - rare
    return {"rare": rare, "nonrare": nonrare}


def zeroshot_partition(split: ZeroShotSplit) -> dict[str, frozenset]:
    return {"unseen": split.unseen, "seen": split.seen}


# ---- split file: strategy/seed header then one unseen id per line ----


def format_split(split: ZeroShotSplit) -> str:
    lines = [f"strategy\t{split.strategy}", f"seed\t{split.seed}", "[unseen]"]
    lines.extend(str(c) for c in sorted(split.unseen))
    return "\n".join(lines) + "\n"


def save_split(split: ZeroShotSplit, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_split(split))


def load_split(path, space: HoiLabelSpace) -> ZeroShotSplit:
    strategy = None
    seed = 0
    unseen: set[int] = set()
    in_ids = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line == "[unseen]":
                in_ids = True
                continue
            if in_ids:
                try:
                    c = int(line)
                except ValueError:
                    raise ParseError(f"bad class id {line!r}", line=lineno) from None
                if not 0 <= c < space.num_hois:
                    raise ParseError(f"class id {c} outside label space", line=lineno)
                unseen.add(c)
            else:
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("bad header line", line=lineno)
                if parts[0] == "strategy":
                    strategy = parts[1]
                elif parts[0] == "seed":
                    seed = int(parts[1])
    if strategy not in STRATEGIES:
        raise ParseError(f"missing or unknown strategy {strategy!r}")
    unseen_set = frozenset(unseen)
    return ZeroShotSplit(
        unseen=unseen_set,
        seen=frozenset(range(space.num_hois)) - unseen_set,
        strategy=strategy,
        seed=seed,
    )
