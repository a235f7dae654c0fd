"""Negative-sample dictionary: per-background-class FIFO stores of embeddings.

Entries come from generated positive samples, whose foreground and
background classes are decoupled, and are stored under their *background*
label.  An anchor of foreground class k draws the whole store keyed k, so
every negative shares the anchor's background class while carrying a
different foreground.  Old entries are evicted strictly oldest-first once a
store reaches capacity; surviving entries are reused across batches.
"""

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class FeatureEntry:
    """A stored embedding with its labels and insertion step."""

    embedding: np.ndarray
    fg_label: int
    bg_label: int
    step: int

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embedding, dtype=np.float32)
        if emb.ndim != 1:
            raise ContractViolation("embedding must be a 1-D vector")
        if not np.isfinite(emb).all():
            raise ContractViolation("embedding must be finite")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)
        if self.fg_label == self.bg_label:
            raise ContractViolation(
                f"entry labels must be decoupled, got fg == bg == {self.fg_label}"
            )


class NegativeDictionary:
    """C FIFO stores of :class:`FeatureEntry`, capacity N each, keyed by bg label."""

    def __init__(self, num_classes: int, capacity: int):
        if num_classes < 2 or capacity < 1:
            raise ContractViolation("need num_classes >= 2 and capacity >= 1")
        self.num_classes = num_classes
        self.capacity = capacity
        self._stores: list[deque[FeatureEntry]] = [deque() for _ in range(num_classes)]
        self._step = 0

    def __len__(self) -> int:
        return sum(len(store) for store in self._stores)

    def store_sizes(self) -> list[int]:
        return [len(store) for store in self._stores]

    def occupancy(self) -> float:
        """Filled fraction of total capacity, in [0, 1]."""
        return len(self) / (self.num_classes * self.capacity)

    def next_step(self) -> int:
        """The step value the next enqueued entry will receive."""
        return self._step

    def enqueue(self, embedding: np.ndarray, fg_label: int, bg_label: int) -> FeatureEntry:
        """Append an entry to the store keyed by its background label.

        The foreground label plays no part in placement.  If the store is
        full its oldest entry is dropped first.  Returns the stored entry.
        """
        if not 0 <= bg_label < self.num_classes:
            raise ContractViolation(f"bg_label {bg_label} out of range")
        entry = FeatureEntry(
            embedding=np.array(embedding, dtype=np.float32, copy=True),
            fg_label=fg_label,
            bg_label=bg_label,
            step=self._step,
        )
        self._step += 1
        store = self._stores[bg_label]
        if len(store) >= self.capacity:
            store.popleft()
        store.append(entry)
        return entry

    def draw(
        self,
        anchor_fg_class: int,
        mode: str = "keyed",
        rng: np.random.Generator | None = None,
    ) -> list[FeatureEntry]:
        """Return negative entries for an anchor.

        keyed: all current entries of the store keyed by the anchor's
        foreground class (possibly none during warmup).  trivial: up to
        ``capacity`` entries drawn uniformly without replacement from all
        stores pooled in (store index, age) order, ignoring the key; this
        is the ablation baseline and requires ``rng``.

        Returned entries are immutable snapshots; they stay valid after
        later enqueues evict them from the dictionary.
        """
        if not 0 <= anchor_fg_class < self.num_classes:
            raise ContractViolation(f"anchor class {anchor_fg_class} out of range")
        if mode == "keyed":
            drawn = list(self._stores[anchor_fg_class])
            if __debug__:
                for entry in drawn:
                    assert entry.bg_label == anchor_fg_class
                    assert entry.fg_label != anchor_fg_class
            return drawn
        if mode == "trivial":
            if rng is None:
                raise ContractViolation("trivial draw needs an rng")
            pooled = [entry for store in self._stores for entry in store]
            count = min(self.capacity, len(pooled))
            if count == 0:
                return []
            picks = rng.choice(len(pooled), size=count, replace=False)
            return [pooled[i] for i in picks]
        raise ContractViolation(f"unknown draw mode {mode!r}")

    def snapshot(self) -> list[list[tuple[int, int, int]]]:
        """Per-store (step, fg_label, bg_label) tuples, oldest first."""
        return [[(e.step, e.fg_label, e.bg_label) for e in store] for store in self._stores]

    def dump_debug_json(self, path: str | Path) -> None:
        """Write store contents (labels and steps, not embeddings) for inspection."""
        payload = {
            "num_classes": self.num_classes,
            "capacity": self.capacity,
            "stores": [
                [{"step": e.step, "fg_label": e.fg_label, "bg_label": e.bg_label} for e in store]
                for store in self._stores
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")
