import numpy as np
import pytest

from hoicomp.composer import ComposeConfig, compose_batch
from hoicomp.errors import EmptyBatch, InvalidConfig
from hoicomp.synthdata import random_hoi_defs
from hoicomp.label_algebra import build_space

from conftest import TOY_DEFS, draw_space, make_instance


def brute_candidates(batch, defs, mode, unseen=frozenset(), unseen_allowed=False):
    """Set-logic oracle over raw definitions: all ordered pairs i != j."""
    out = []
    for i, verb_src in enumerate(batch):
        verbs = set()
        for c in np.flatnonzero(verb_src.label):
            verbs.update(defs[c][0])
        for j, obj_src in enumerate(batch):
            if i == j:
                continue
            same = verb_src.image_id == obj_src.image_id
            if mode == "within" and not same:
                continue
            if mode == "between" and same:
                continue
            classes = {
                c
                for c in range(len(defs))
                if defs[c][1] == obj_src.object_id and set(defs[c][0]) & verbs
            }
            if not unseen_allowed:
                classes -= set(unseen)
            if classes:
                out.append((i, j, frozenset(classes)))
    return out


def as_triples(composed):
    return [
        (c.provenance[0], c.provenance[1], frozenset(int(k) for k in np.flatnonzero(c.label)))
        for c in composed
    ]


class TestComposeBatch:
    def test_new_concept_between_images(self, toy_space):
        rng = np.random.default_rng(0)
        batch = [
            make_instance(toy_space, [1], image_id=1, rng=rng),  # feed-horse
            make_instance(toy_space, [2], image_id=2, rng=rng),  # ride-bicycle
        ]
        cfg = ComposeConfig(mode="between", balance=False)
        out = compose_batch(batch, toy_space, cfg, np.random.default_rng(0))
        assert len(out) == 1
        comp = out[0]
        assert comp.provenance == (1, 0, "between")  # ride verbs onto the horse
        assert np.flatnonzero(comp.label).tolist() == [0]  # ride-horse
        np.testing.assert_array_equal(comp.verb_feat, batch[1].verb_feat)
        np.testing.assert_array_equal(comp.object_feat, batch[0].object_feat)

    def test_mode_off(self, toy_space):
        batch = [make_instance(toy_space, [0])]
        assert compose_batch(batch, toy_space, ComposeConfig(mode="off"), np.random.default_rng(0)) == []

    def test_empty_batch(self, toy_space):
        with pytest.raises(EmptyBatch):
            compose_batch([], toy_space, ComposeConfig(), np.random.default_rng(0))

    def test_bad_config(self, toy_space):
        batch = [make_instance(toy_space, [0])]
        with pytest.raises(InvalidConfig):
            compose_batch(batch, toy_space, ComposeConfig(mode="sideways"), np.random.default_rng(0))
        with pytest.raises(InvalidConfig):
            compose_batch(
                batch, toy_space, ComposeConfig(interactions_per_minibatch=0), np.random.default_rng(0)
            )

    def _random_batch(self, rng, space, defs, size=8):
        batch = []
        for k in range(size):
            c = int(rng.integers(space.num_hois))
            batch.append(
                make_instance(space, [c], image_id=int(rng.integers(4)), rng=rng)
            )
        return batch

    def test_random_against_bruteforce(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            space, defs = draw_space(rng, max_verbs=6, max_objects=5, max_hois=12)
            batch = self._random_batch(rng, space, defs)
            for mode in ("within", "between", "both"):
                cfg = ComposeConfig(mode=mode, balance=False)
                got = as_triples(compose_batch(batch, space, cfg, np.random.default_rng(0)))
                want = brute_candidates(batch, defs, mode)
                assert got == want

    def test_within_between_partition_both(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            space, defs = draw_space(rng, max_verbs=6, max_objects=5, max_hois=12)
            batch = self._random_batch(rng, space, defs)
            outs = {
                mode: as_triples(
                    compose_batch(batch, space, ComposeConfig(mode=mode, balance=False), np.random.default_rng(0))
                )
                for mode in ("within", "between", "both")
            }
            assert sorted(outs["within"] + outs["between"]) == sorted(outs["both"])
            assert not set(outs["within"]) & set(outs["between"])

    def test_balance_caps_at_real_count(self):
        rng = np.random.default_rng(3)
        space = build_space(TOY_DEFS)
        batch = [
            make_instance(space, [int(rng.integers(3))], image_id=int(rng.integers(3)), rng=rng)
            for _ in range(6)
        ]
        balanced = compose_batch(space=space, batch=batch, cfg=ComposeConfig(mode="both", balance=True), rng=np.random.default_rng(5))
        unbalanced = compose_batch(batch, space, ComposeConfig(mode="both", balance=False), np.random.default_rng(5))
        assert len(balanced) == min(len(unbalanced), len(batch))
        assert set(as_triples(balanced)) <= set(as_triples(unbalanced))

    def test_deterministic(self, toy_space):
        rng = np.random.default_rng(1)
        batch = [
            make_instance(toy_space, [int(rng.integers(3))], image_id=int(rng.integers(2)), rng=rng)
            for _ in range(7)
        ]
        cfg = ComposeConfig(mode="both", balance=True)
        a = as_triples(compose_batch(batch, toy_space, cfg, np.random.default_rng(42)))
        b = as_triples(compose_batch(batch, toy_space, cfg, np.random.default_rng(42)))
        assert a == b

    def test_no_self_pairs(self, toy_space):
        rng = np.random.default_rng(2)
        batch = [make_instance(toy_space, [0], image_id=0, rng=rng) for _ in range(4)]
        out = compose_batch(batch, toy_space, ComposeConfig(mode="both", balance=False), np.random.default_rng(0))
        assert all(c.provenance[0] != c.provenance[1] for c in out)

    def test_every_label_feasible(self):
        rng = np.random.default_rng(13)
        space, defs = draw_space(rng, max_verbs=6, max_objects=5, max_hois=12)
        batch = self._random_batch(rng, space, defs)
        out = compose_batch(batch, space, ComposeConfig(mode="both", balance=False), np.random.default_rng(0))
        assert all(c.label.any() for c in out)


class TestUnseenHandling:
    def test_unseen_bits_zeroed_when_disallowed(self, toy_space):
        rng = np.random.default_rng(0)
        batch = [
            make_instance(toy_space, [1], image_id=1, rng=rng),  # feed-horse
            make_instance(toy_space, [2], image_id=2, rng=rng),  # ride-bicycle
        ]
        # ride-horse (class 0) is unseen: the only composition dies entirely
        cfg = ComposeConfig(mode="between", balance=False, unseen_allowed=False,
                            unseen_ids=frozenset({0}))
        assert compose_batch(batch, toy_space, cfg, np.random.default_rng(0)) == []

    def test_unseen_bits_kept_when_allowed(self, toy_space):
        rng = np.random.default_rng(0)
        batch = [
            make_instance(toy_space, [1], image_id=1, rng=rng),
            make_instance(toy_space, [2], image_id=2, rng=rng),
        ]
        cfg = ComposeConfig(mode="between", balance=False, unseen_allowed=True,
                            unseen_ids=frozenset({0}))
        out = compose_batch(batch, toy_space, cfg, np.random.default_rng(0))
        assert len(out) == 1
        assert np.flatnonzero(out[0].label).tolist() == [0]

    def test_seen_bits_survive_partial_zeroing(self):
        # two classes share the object; only one is unseen
        defs = (((0,), 0), ((1,), 0))
        space = build_space(defs)
        rng = np.random.default_rng(4)
        batch = [
            make_instance(space, [0, 1], image_id=0, rng=rng),
            make_instance(space, [0], image_id=1, rng=rng),
        ]
        cfg = ComposeConfig(mode="both", balance=False, unseen_allowed=False,
                            unseen_ids=frozenset({0}))
        out = compose_batch(batch, space, cfg, np.random.default_rng(0))
        # verb source 0 carries both verbs; composition onto object 0 keeps class 1 only
        labels = {(c.provenance[0], c.provenance[1]): np.flatnonzero(c.label).tolist() for c in out}
        assert labels[(0, 1)] == [1]
