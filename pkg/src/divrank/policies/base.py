"""Common contract for single-slot bandit policies.

A slot policy owns its per-round state (counters, weights, active regions)
and exposes four operations: ``select`` an arm given the documents already
placed above it, ``update`` with the 0/1 reward for the arm it just selected,
and ``snapshot``/``restore`` so a round can be erased as if it never happened.

Snapshots are undo-log markers: every mutation pushes its inverse, so
restoring is exact and O(#mutations since the marker) instead of a full state
copy. Restored policies behave bit-identically to ones that never saw the
round, given the same RNG stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class HorizonConfig:
    """Time horizon plus the exploration flavour of index policies.

    The confidence radius attached to n samples is sqrt(F / (1 + n)) with
    F = 4 ln(horizon); optimistic mode replaces F by 1, damping exploration.
    """

    horizon: float
    optimistic: bool = False
    radius_coeff: float = 2.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @property
    def radius_factor(self) -> float:
        return 1.0 if self.optimistic else 4.0 * math.log(self.horizon)

    def with_optimism(self, optimistic: bool) -> "HorizonConfig":
        return HorizonConfig(self.horizon, optimistic, self.radius_coeff)


def conf_radius(n_samples: int, cfg: HorizonConfig) -> float:
    """High-probability deviation bound after n samples of an arm."""
    if n_samples < 0:
        raise ValueError("sample count cannot be negative")
    return math.sqrt(cfg.radius_factor / (1.0 + n_samples))


class SlotPolicy:
    """Base class wiring the undo-log; subclasses implement the four hooks."""

    def __init__(self):
        self._undo: list[tuple] = []
        self._last = None  # (internal key, leaf) of the pending selection

    # -- contract -----------------------------------------------------------

    def select(self, upper_docs: tuple[int, ...] = ()) -> int:
        raise NotImplementedError

    def update(self, doc: int, reward: int) -> None:
        raise NotImplementedError

    def active_count(self) -> int:
        raise NotImplementedError

    def snapshot(self):
        return len(self._undo)

    def restore(self, token) -> None:
        while len(self._undo) > token:
            self._apply_undo(self._undo.pop())

    def commit(self) -> None:
        """Drop undo history; earlier snapshots become unusable."""
        self._undo.clear()

    # -- helpers for subclasses ----------------------------------------------

    def _check_reward(self, reward) -> int:
        if reward not in (0, 1):
            raise ValueError(f"rewards are exactly 0 or 1, got {reward!r}")
        return int(reward)

    def _take_last(self, doc: int):
        """Consume the pending selection, enforcing select/update pairing."""
        if self._last is None:
            raise RuntimeError("update() without a pending select()")
        key, leaf = self._last
        if leaf != doc:
            raise ValueError(f"update for {doc}, but last selection was {leaf}")
        self._undo.append(("last", self._last))
        self._last = None
        return key

    def _set_last(self, key, leaf: int) -> None:
        self._undo.append(("last", self._last))
        self._last = (key, leaf)

    def _apply_undo(self, entry) -> None:
        if entry[0] == "last":
            self._last = entry[1]
        else:
            raise AssertionError(f"unknown undo entry {entry[0]!r}")
