import numpy as np
import pytest

from hoicomp.label_algebra import build_space
from hoicomp.spatial import Box2D
from hoicomp.synthdata import Instance, random_hoi_defs

# toy space used across modules:
#   class 0 = ride-horse, class 1 = feed-horse, class 2 = ride-bicycle
TOY_DEFS = (((0,), 0), ((1,), 0), ((0,), 1))
TOY_VERBS = ("ride", "feed")
TOY_OBJECTS = ("horse", "bicycle")


@pytest.fixture
def toy_space():
    return build_space(TOY_DEFS, verb_names=TOY_VERBS, object_names=TOY_OBJECTS)


def draw_space(rng, max_verbs=10, max_objects=8, max_hois=40):
    """Random valid label space within the given bounds; returns (space, defs)."""
    while True:
        nv = int(rng.integers(1, max_verbs + 1))
        no = int(rng.integers(1, max_objects + 1))
        lo = max(nv, no)
        hi = min(max_hois, nv * no)
        if lo <= hi:
            break
    nh = int(rng.integers(lo, hi + 1))
    defs = random_hoi_defs(nv, no, nh, rng)
    return build_space(defs), defs


def make_instance(
    space,
    hoi_ids,
    image_id=0,
    rng=None,
    dim=4,
    human_box=None,
    object_box=None,
    human_score=0.9,
    object_score=0.8,
):
    """Instance with the given active classes and random features."""
    rng = rng or np.random.default_rng(0)
    label = np.zeros(space.num_hois, dtype=np.uint8)
    for c in hoi_ids:
        label[c] = 1
    object_id = space.object_of(hoi_ids[0])
    return Instance(
        image_id=image_id,
        human_box=human_box or Box2D(10, 10, 110, 210),
        object_box=object_box or Box2D(120, 40, 260, 180),
        human_score=human_score,
        object_score=object_score,
        human_feat=rng.standard_normal(dim),
        verb_feat=rng.standard_normal(dim),
        object_feat=rng.standard_normal(dim),
        label=label,
        object_id=object_id,
    )
