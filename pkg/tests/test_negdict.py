import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

import cladlab as cl
from cladlab.errors import ContractViolation
from cladlab.negdict import FeatureEntry, NegativeDictionary

DOG, FISH = 3, 5


def _vec(value, dim=4):
    return np.full(dim, float(value), dtype=np.float32)


class NaiveReference:
    """Plain-list reimplementation of the documented dictionary contract."""

    def __init__(self, num_classes, capacity):
        self.capacity = capacity
        self.stores = [[] for _ in range(num_classes)]
        self.step = 0

    def enqueue(self, value, fg, bg):
        self.stores[bg] = (self.stores[bg] + [(self.step, fg, bg, value)])[-self.capacity :]
        self.step += 1

    def draw(self, anchor_fg, mode, rng=None):
        if mode == "keyed":
            return list(self.stores[anchor_fg])
        pooled = [entry for store in self.stores for entry in store]
        count = min(self.capacity, len(pooled))
        if count == 0:
            return []
        picks = rng.choice(len(pooled), size=count, replace=False)
        return [pooled[i] for i in picks]

    def snapshot(self):
        return [[(step, fg, bg) for step, fg, bg, _ in store] for store in self.stores]


def test_entry_rejects_coupled_labels():
    with pytest.raises(ContractViolation):
        FeatureEntry(_vec(1.0), fg_label=2, bg_label=2, step=0)


def test_entry_rejects_non_finite():
    with pytest.raises(ContractViolation):
        FeatureEntry(np.array([1.0, np.nan], dtype=np.float32), 0, 1, 0)


def test_enqueue_keys_on_background_label():
    d = NegativeDictionary(num_classes=9, capacity=4)
    d.enqueue(_vec(1), fg_label=DOG, bg_label=FISH)
    sizes = d.store_sizes()
    assert sizes[FISH] == 1 and sum(sizes) == 1


def test_fifo_eviction_order():
    capacity = 5
    d = NegativeDictionary(num_classes=2, capacity=capacity)
    for i in range(capacity + 1):
        d.enqueue(_vec(i), fg_label=0, bg_label=1)
    drawn = d.draw(1, "keyed")
    assert [e.step for e in drawn] == list(range(1, capacity + 1))
    assert all(e.embedding[0] == e.step for e in drawn)


def test_interleaved_enqueues_preserve_per_store_order():
    d = NegativeDictionary(num_classes=3, capacity=8)
    ref = NaiveReference(3, 8)
    rng = np.random.default_rng(5)
    for i in range(40):
        bg = int(rng.integers(0, 3))
        fg = (bg + 1 + int(rng.integers(0, 2))) % 3
        d.enqueue(_vec(i), fg, bg)
        ref.enqueue(float(i), fg, bg)
    assert d.snapshot() == ref.snapshot()


def test_draw_from_empty_dictionary():
    d = NegativeDictionary(num_classes=4, capacity=2)
    assert d.draw(0, "keyed") == []
    assert d.draw(0, "trivial", rng=np.random.default_rng(0)) == []


def test_keyed_draw_matches_anchor_background_class():
    d = NegativeDictionary(num_classes=9, capacity=8)
    rng = np.random.default_rng(0)
    for i in range(60):
        bg = int(rng.integers(0, 9))
        fg = (bg + 1 + int(rng.integers(0, 8))) % 9
        d.enqueue(_vec(i), fg, bg)
    drawn = d.draw(DOG, "keyed")
    assert drawn, "store should be occupied"
    for entry in drawn:
        assert entry.bg_label == DOG
        assert entry.fg_label != DOG


def test_entries_are_reused_until_evicted():
    d = NegativeDictionary(num_classes=2, capacity=4)
    d.enqueue(_vec(7), 0, 1)
    first = d.draw(1, "keyed")
    second = d.draw(1, "keyed")
    assert first == second  # same snapshot entries, no consumption


def test_draw_snapshots_survive_eviction():
    d = NegativeDictionary(num_classes=2, capacity=1)
    d.enqueue(_vec(1), 0, 1)
    kept = d.draw(1, "keyed")[0]
    d.enqueue(_vec(2), 0, 1)  # evicts the first entry
    assert kept.embedding[0] == 1.0
    with pytest.raises(ValueError):
        kept.embedding[0] = 9.0  # snapshots are immutable


def test_trivial_draw_is_roughly_uniform_over_occupied_stores():
    d = NegativeDictionary(num_classes=4, capacity=16)
    for i in range(16):
        for bg in range(1, 4):
            d.enqueue(_vec(i), 0 if bg else 1, bg)
    counts = np.zeros(4)
    rng = np.random.default_rng(11)
    draws = 400
    for _ in range(draws):
        for entry in d.draw(0, "trivial", rng=rng):
            counts[entry.bg_label] += 1
    assert counts[0] == 0  # store 0 never filled
    occupied = counts[1:]
    assert occupied.sum() == draws * 16
    relative = occupied / occupied.sum()
    assert np.abs(relative - 1 / 3).max() < 0.02, relative


def test_trivial_draw_requires_rng():
    d = NegativeDictionary(num_classes=2, capacity=2)
    d.enqueue(_vec(0), 0, 1)
    with pytest.raises(ContractViolation):
        d.draw(0, "trivial")


def test_model_based_random_ops_match_reference():
    # moderate volume here; the full 1e5-op run lives in the acceptance suite
    run_model_comparison(num_ops=5000, seed=123)


def run_model_comparison(num_ops: int, seed: int, num_classes: int = 5, capacity: int = 7):
    d = NegativeDictionary(num_classes, capacity)
    ref = NaiveReference(num_classes, capacity)
    rng = np.random.default_rng(seed)
    for op_index in range(num_ops):
        if rng.random() < 0.65:
            bg = int(rng.integers(0, num_classes))
            fg = (bg + 1 + int(rng.integers(0, num_classes - 1))) % num_classes
            value = float(op_index)
            d.enqueue(_vec(value), fg, bg)
            ref.enqueue(value, fg, bg)
        else:
            anchor = int(rng.integers(0, num_classes))
            mode = "keyed" if rng.random() < 0.5 else "trivial"
            draw_seed = int(rng.integers(0, 2**31))
            got = d.draw(anchor, mode, rng=np.random.default_rng(draw_seed))
            expected = ref.draw(anchor, mode, rng=np.random.default_rng(draw_seed))
            assert [(e.step, e.fg_label, e.bg_label) for e in got] == [
                (step, fg, bg) for step, fg, bg, _ in expected
            ]
            assert [float(e.embedding[0]) for e in got] == [v for _, _, _, v in expected]
        assert max(d.store_sizes()) <= capacity
    assert d.snapshot() == ref.snapshot()


class DictionaryMachine(RuleBasedStateMachine):
    """Hypothesis-driven interleavings against the naive reference."""

    def __init__(self):
        super().__init__()
        self.d = NegativeDictionary(num_classes=4, capacity=3)
        self.ref = NaiveReference(4, 3)
        self.counter = 0

    @rule(bg=st.integers(0, 3), offset=st.integers(1, 3))
    def enqueue(self, bg, offset):
        fg = (bg + offset) % 4
        if fg == bg:
            return
        self.d.enqueue(_vec(self.counter), fg, bg)
        self.ref.enqueue(float(self.counter), fg, bg)
        self.counter += 1

    @rule(anchor=st.integers(0, 3))
    def draw_keyed(self, anchor):
        got = self.d.draw(anchor, "keyed")
        expected = self.ref.draw(anchor, "keyed")
        assert [(e.step, e.fg_label, e.bg_label) for e in got] == [
            (step, fg, bg) for step, fg, bg, _ in expected
        ]

    @rule(anchor=st.integers(0, 3), seed=st.integers(0, 2**20))
    def draw_trivial(self, anchor, seed):
        got = self.d.draw(anchor, "trivial", rng=np.random.default_rng(seed))
        expected = self.ref.draw(anchor, "trivial", rng=np.random.default_rng(seed))
        assert [(e.step, e.fg_label, e.bg_label) for e in got] == [
            (step, fg, bg) for step, fg, bg, _ in expected
        ]

    @invariant()
    def stores_match_and_respect_capacity(self):
        assert self.d.snapshot() == self.ref.snapshot()
        for store_index, store in enumerate(self.d.snapshot()):
            assert len(store) <= 3
            for _, fg, bg in store:
                assert bg == store_index and fg != store_index


TestDictionaryMachine = DictionaryMachine.TestCase
TestDictionaryMachine.settings = settings(max_examples=60, stateful_step_count=40, deadline=None)
