"""k-slot ranked meta-policies: slate composition, click routing, rollback.

One independent slot policy per rank. Slots select sequentially, each seeing
the documents chosen above it this round. After the user's scan: the clicked
slot earns 1, every skipped slot above earns 0, and every slot below is
restored to its pre-round state, as if the round never reached it. A no-click
round pays 0 everywhere.
"""

from __future__ import annotations

from .inference import greedy_ranking
from .policies.base import HorizonConfig, SlotPolicy
from .policies.contextual import ContextualZoomingPolicy
from .policies.core import DoublingPolicy, EXP3Policy, UCB1Policy
from .policies.zooming import GridPolicy, ZoomingPolicy
from .tree import DocTree


def simulate_click(pi, slate) -> int | None:
    """1-based slot of the first relevant document, or None (abandonment).

    ``pi`` is either a relevance array over node ids or a callable leaf->bit.
    A duplicate of a skipped document is necessarily skipped again.
    """
    probe = pi if callable(pi) else pi.__getitem__
    for j, x in enumerate(slate):
        if probe(int(x)):
            return j + 1
    return None


class RankedPolicy:
    """Interface: compose a slate, then route the observed click outcome."""

    def compose_slate(self) -> list[int]:
        raise NotImplementedError

    def route_payoffs(self, outcome: int | None) -> None:
        raise NotImplementedError

    def active_count(self) -> int:
        return 0


class SlotRanked(RankedPolicy):
    """k slot policies glued together with context flow and rollback."""

    def __init__(self, slots: list[SlotPolicy], tree: DocTree | None = None,
                 dedup: bool = False):
        if not slots:
            raise ValueError("need at least one slot")
        self.slots = slots
        self.tree = tree
        self.dedup = dedup
        self._snaps = None
        self._slate: list[int] | None = None

    @property
    def k(self) -> int:
        return len(self.slots)

    def compose_slate(self) -> list[int]:
        self._snaps = [p.snapshot() for p in self.slots]
        docs: list[int] = []
        for policy in self.slots:
            x = policy.select(tuple(docs))
            if self.dedup and x in docs:
                x = self._resample(policy, docs, x)
            docs.append(x)
        self._slate = docs
        return list(docs)

    def _resample(self, policy, docs, x):
        # draw again inside the chosen region; give up after a few tries so a
        # region containing only shown documents still produces a slate
        for _ in range(8):
            if x not in docs:
                break
            key, _ = policy._last
            if not hasattr(policy, "tree") or not hasattr(policy, "node"):
                break
            x = policy.tree.sample_leaf(int(policy.node[key]), policy.leaf_rng)
            policy._last = (key, x)
        return x

    def route_payoffs(self, outcome: int | None) -> None:
        if self._snaps is None or self._slate is None:
            raise RuntimeError("route_payoffs() before compose_slate()")
        slate, snaps = self._slate, self._snaps
        if outcome is None:
            for policy, doc in zip(self.slots, slate):
                policy.update(doc, 0)
        else:
            if not 1 <= outcome <= self.k:
                raise ValueError(f"clicked slot {outcome} out of range")
            for j in range(outcome - 1):
                self.slots[j].update(slate[j], 0)
            self.slots[outcome - 1].update(slate[outcome - 1], 1)
            for j in range(outcome, self.k):
                self.slots[j].restore(snaps[j])
        for policy in self.slots:
            policy.commit()
        self._snaps = None
        self._slate = None

    def active_count(self) -> int:
        return sum(p.active_count() for p in self.slots)


class RandomRanker(RankedPolicy):
    """Uniformly random slate of k distinct documents."""

    def __init__(self, tree: DocTree, k: int, rng):
        if k > tree.n_leaves:
            raise ValueError("more slots than documents")
        self.leaves = tree.leaf_ids
        self.k = k
        self.rng = rng

    def compose_slate(self):
        picks = self.rng.choice(self.leaves.size, size=self.k, replace=False)
        return [int(self.leaves[i]) for i in picks]

    def route_payoffs(self, outcome):
        pass


class FixedSlateRanker(RankedPolicy):
    """Plays one precomputed slate forever (the informed greedy baseline)."""

    def __init__(self, slate):
        self.slate = [int(x) for x in slate]

    def compose_slate(self):
        return list(self.slate)

    def route_payoffs(self, outcome):
        pass


# ---------------------------------------------------------------------------
# registries
# ---------------------------------------------------------------------------

SLOT_POLICY_NAMES = (
    "ucb1", "ucb1+", "exp3",
    "gridUCB1", "gridUCB1+", "gridEXP3",
    "zooming", "zooming+", "MCZooming", "MCZooming+",
    "contextualZooming", "contextualZooming+",
)

_RANKED_TO_SLOT = {
    "rankedUCB1": "ucb1",
    "rankedUCB1+": "ucb1+",
    "rankedEXP3": "exp3",
    "rankedGridUCB1": "gridUCB1",
    "rankedGridUCB1+": "gridUCB1+",
    "rankedGridEXP3": "gridEXP3",
    "rankedZooming": "zooming",
    "rankedZooming+": "zooming+",
    "rankedMCZooming": "MCZooming",
    "rankedMCZooming+": "MCZooming+",
    "rankedContextualZooming": "contextualZooming",
    "rankedContextualZooming+": "contextualZooming+",
}

RANKED_POLICY_NAMES = ("random", "greedyOracle", *_RANKED_TO_SLOT)


def _split_optimism(name: str) -> tuple[str, bool]:
    return (name[:-1], True) if name.endswith("+") else (name, False)


def make_slot_policy(name: str, tree: DocTree, cfg: HorizonConfig, select_rng,
                     leaf_rng, context_size: int = 0) -> SlotPolicy:
    """Build one slot policy from its registry name.

    ``context_size`` is the number of upper slots whose picks this policy will
    see; only contextual policies use it. A "~anytime" suffix wraps the policy
    in the doubling scheme.
    """
    if name.endswith("~anytime"):
        base = name[:-len("~anytime")]

        def factory(horizon):
            sub = HorizonConfig(horizon, cfg.optimistic, cfg.radius_coeff)
            return make_slot_policy(base, tree, sub, select_rng, leaf_rng, context_size)

        return DoublingPolicy(factory)

    stem, plus = _split_optimism(name)
    sub = cfg.with_optimism(plus or cfg.optimistic)
    if stem == "ucb1":
        return UCB1Policy(tree.leaf_ids, sub)
    if stem == "exp3":
        return EXP3Policy(tree.leaf_ids, sub, select_rng)
    if stem == "gridUCB1":
        return GridPolicy(tree, "ucb1+" if plus else "ucb1", cfg, select_rng, leaf_rng)
    if stem == "gridEXP3":
        return GridPolicy(tree, "exp3", cfg, select_rng, leaf_rng)
    if stem == "zooming":
        return ZoomingPolicy(tree, sub, leaf_rng, use_cap=False)
    if stem == "MCZooming":
        return ZoomingPolicy(tree, sub, leaf_rng, use_cap=True)
    if stem == "contextualZooming":
        if context_size < 1:
            return ZoomingPolicy(tree, sub, leaf_rng, use_cap=False)
        # the index cap is left off here: leaf-level rectangle widths exceed
        # any document distance, so a capped index would stop ordering by
        # observed payoff entirely (see ContextualZoomingPolicy.use_cap)
        return ContextualZoomingPolicy(tree, context_size, sub, leaf_rng, use_cap=False)
    raise KeyError(f"unknown slot policy {name!r}")


def make_ranked(name: str, tree: DocTree, k: int, cfg: HorizonConfig, streams,
                dist=None, dedup: bool = False) -> RankedPolicy:
    """Assemble a k-slot policy from its registry name.

    ``streams`` supplies per-slot RNG pairs via ``streams.slot(i)`` ->
    (select_rng, leaf_rng) and a baseline stream via ``streams.baseline``.
    Baselines need ``dist``: the true user distribution.
    """
    if k < 1:
        raise ValueError("need at least one slot")
    if name == "random":
        return RandomRanker(tree, k, streams.baseline)
    if name == "greedyOracle":
        if dist is None:
            raise KeyError("greedyOracle needs the true user distribution")
        return FixedSlateRanker(greedy_ranking(dist, k))
    base, anytime = (name[:-len("~anytime")], True) if name.endswith("~anytime") \
        else (name, False)
    if base not in _RANKED_TO_SLOT:
        raise KeyError(f"unknown ranked policy {name!r}")
    slot_name = _RANKED_TO_SLOT[base] + ("~anytime" if anytime else "")
    slots = []
    for i in range(k):
        select_rng, leaf_rng = streams.slot(i)
        slots.append(make_slot_policy(slot_name, tree, cfg, select_rng, leaf_rng,
                                      context_size=i))
    return SlotRanked(slots, tree=tree, dedup=dedup)
