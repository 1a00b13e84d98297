"""Index and exponential-weight policies over a fixed finite arm set."""

from __future__ import annotations

import logging
import math

import numpy as np

from .. import _kernels
from .base import HorizonConfig, SlotPolicy, conf_radius

log = logging.getLogger(__name__)

_WEIGHT_CEIL = 1e250
_WEIGHT_FLOOR = 1e-250


class UCB1Policy(SlotPolicy):
    """Pick the arm maximizing mean + radius_coeff * conf_radius.

    Unplayed arms contribute a zero mean term, so their index is the bare
    n=0 radius; ties go to the lowest arm position.
    """

    def __init__(self, arms, cfg: HorizonConfig):
        super().__init__()
        self.arm_ids = np.asarray(list(arms), dtype=np.int64)
        if self.arm_ids.size == 0:
            raise ValueError("arm set must be non-empty")
        self.cfg = cfg
        k = self.arm_ids.size
        self.n = np.zeros(k)
        self.r = np.zeros(k)
        self._zero = np.zeros(k)
        self._pos_ids = np.arange(k, dtype=np.int64)
        self._arm_pos = {int(a): i for i, a in enumerate(self.arm_ids)}

    def select(self, upper_docs=()):
        pos = _kernels.select_max_index(
            self.n, self.r, self._zero, self.n.size, self.cfg.radius_factor,
            self.cfg.radius_coeff, self._pos_ids, self._zero, False)
        leaf = int(self.arm_ids[pos])
        self._set_last(pos, leaf)
        return leaf

    def update(self, doc, reward):
        reward = self._check_reward(reward)
        pos = self._take_last(doc)
        self._undo.append(("nr", pos, self.n[pos], self.r[pos]))
        self.n[pos] += 1.0
        self.r[pos] += reward

    def index_of(self, arm) -> float:
        pos = self._arm_pos[int(arm)]
        mean = self.r[pos] / self.n[pos] if self.n[pos] > 0 else 0.0
        return mean + self.cfg.radius_coeff * conf_radius(int(self.n[pos]), self.cfg)

    def active_count(self):
        return int(self.arm_ids.size)

    def _apply_undo(self, entry):
        if entry[0] == "nr":
            _, pos, n, r = entry
            self.n[pos] = n
            self.r[pos] = r
        else:
            super()._apply_undo(entry)


def default_exp3_gamma(n_arms: int, horizon: int) -> float:
    if n_arms <= 1:
        return 1.0
    return min(1.0, math.sqrt(n_arms * math.log(n_arms) / ((math.e - 1.0) * horizon)))


class EXP3Policy(SlotPolicy):
    """Exponential weights with gamma-mixing to the uniform distribution.

    Probabilities are p_i = (1-gamma) w_i / sum(w) + gamma / K; the played
    arm's weight is multiplied by exp(gamma * (reward/p) / K). Weights are
    rescaled (with a floor) when they threaten to overflow.
    """

    def __init__(self, arms, cfg: HorizonConfig, rng, gamma: float | None = None):
        super().__init__()
        self.arm_ids = np.asarray(list(arms), dtype=np.int64)
        if self.arm_ids.size == 0:
            raise ValueError("arm set must be non-empty")
        k = self.arm_ids.size
        self.gamma = default_exp3_gamma(k, cfg.horizon) if gamma is None else float(gamma)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0,1], got {self.gamma}")
        self.cfg = cfg
        self.rng = rng
        self.w = np.ones(k)
        self._p = np.empty(k)
        self._arm_pos = {int(a): i for i, a in enumerate(self.arm_ids)}

    def probabilities(self) -> np.ndarray:
        _kernels.exp3_probs(self.w, self.w.size, self.gamma, self._p)
        return self._p.copy()

    def select(self, upper_docs=()):
        k = self.w.size
        _kernels.exp3_probs(self.w, k, self.gamma, self._p)
        pos = int(_kernels.weighted_choice(self._p, k, self.rng.random()))
        self._set_last((pos, float(self._p[pos])), int(self.arm_ids[pos]))
        return int(self.arm_ids[pos])

    def update(self, doc, reward):
        reward = self._check_reward(reward)
        pos, p = self._take_last(doc)
        if reward:
            self._undo.append(("w", pos, self.w[pos]))
            self.w[pos] *= math.exp(self.gamma * (reward / p) / self.w.size)
            if self.w[pos] > _WEIGHT_CEIL:
                self._undo.append(("wall", self.w.copy()))
                scale = self.w.max()
                np.divide(self.w, scale, out=self.w)
                np.clip(self.w, _WEIGHT_FLOOR, None, out=self.w)
                log.warning("exp3 weights rescaled by %.3g to avoid overflow", scale)

    def active_count(self):
        return int(self.arm_ids.size)

    def _apply_undo(self, entry):
        if entry[0] == "w":
            self.w[entry[1]] = entry[2]
        elif entry[0] == "wall":
            self.w[:] = entry[1]
        else:
            super()._apply_undo(entry)


class DoublingPolicy(SlotPolicy):
    """Anytime wrapper: phase i runs a fresh inner policy for 2**i rounds.

    The factory receives the phase length as the horizon; all phase state is
    discarded at the boundary.
    """

    def __init__(self, factory):
        super().__init__()
        self.factory = factory
        self.phase = 0
        self.remaining = 1
        self.inner = factory(1)

    def select(self, upper_docs=()):
        leaf = self.inner.select(upper_docs)
        self._set_last(None, leaf)
        return leaf

    def update(self, doc, reward):
        self._take_last(doc)
        self.inner.update(doc, reward)
        self._undo.append(("tick", self.remaining))
        self.remaining -= 1
        if self.remaining == 0:
            self._undo.append(("phase", self.phase, self.inner))
            self.phase += 1
            self.remaining = 2 ** self.phase
            self.inner = self.factory(2 ** self.phase)

    def snapshot(self):
        return (len(self._undo), self.inner, self.inner.snapshot())

    def restore(self, token):
        marker, inner, inner_token = token
        while len(self._undo) > marker:
            self._apply_undo(self._undo.pop())
        assert self.inner is inner
        inner.restore(inner_token)

    def active_count(self):
        return self.inner.active_count()

    def _apply_undo(self, entry):
        if entry[0] == "tick":
            self.remaining = entry[1]
        elif entry[0] == "phase":
            _, self.phase, self.inner = entry
        else:
            super()._apply_undo(entry)
