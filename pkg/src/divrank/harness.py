"""Experiment configuration, scenario builders, simulation loop, CSV output.

Every run is fully determined by the config plus the master seed: the seed is
split per (algorithm, seed index) and then per slot and purpose (selection,
leaf sampling, user draws), so identical configs produce byte-identical CSV
files and rolled-back slots never perturb other slots' randomness.
"""

from __future__ import annotations

import io
import zlib
from dataclasses import dataclass, fields, replace

import numpy as np

from .inference import SlateEvaluator
from .policies.base import HorizonConfig
from .ranked import RANKED_POLICY_NAMES, make_ranked, simulate_click
from .tree import DocTree, build_balanced_tree
from .user_model import (MixtureUser, TreeNetwork, build_peaked_mean, crp_peak_values,
                         crp_tables, discussion3_instance, extend_mean_average,
                         parent_child_lipschitz_violations)

SCENARIOS = ("two-peak", "crp", "discussion3", "small-two-peak", "custom")

CSV_HEADER = ("run_id,algorithm,seed,round,clicked_slot,cum_clicks,"
              "empirical_perf,exact_perf,active_count")


@dataclass
class ExperimentConfig:
    scenario: str = "two-peak"
    docs_log2: int = 10
    epsilon: float = 0.837
    mu0: float = 0.05
    peak_value: float = 0.5
    n_peaks: int = 2
    crp_n: int = 20
    crp_theta: float = 2.0
    slots: int = 5
    rounds: int = 100_000
    algos: tuple[str, ...] = ("rankedZooming+",)
    seeds: int = 3
    master_seed: int = 0
    scenario_seed: int | None = None
    cadence: int = 0  # 0 = auto: about 2000 recorded rounds per run
    out: str | None = None
    dedup: bool = False
    scenario_file: str | None = None

    def validation_errors(self) -> list[str]:
        errs = []
        if self.scenario not in SCENARIOS:
            errs.append(f"unknown scenario {self.scenario!r}")
        if self.rounds < 1:
            errs.append("rounds must be >= 1")
        if self.slots < 1:
            errs.append("slots must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            errs.append("epsilon must lie in (0,1)")
        if self.scenario in ("two-peak", "crp") and self.docs_log2 < 1:
            errs.append("docs_log2 must be >= 1")
        if self.mu0 <= 0:
            errs.append("mu0 must be positive")
        if self.seeds < 1:
            errs.append("seeds must be >= 1")
        if self.cadence < 0:
            errs.append("cadence cannot be negative")
        if self.scenario == "custom" and not self.scenario_file:
            errs.append("custom scenario needs scenario_file")
        for a in self.algos:
            base = a[:-len("~anytime")] if a.endswith("~anytime") else a
            if base not in RANKED_POLICY_NAMES:
                errs.append(f"unknown algorithm {a!r}")
        return errs

    def effective_cadence(self) -> int:
        if self.cadence:
            return self.cadence
        return max(1, self.rounds // 2000)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def _scenario_rng(cfg: ExperimentConfig):
    seed = cfg.master_seed if cfg.scenario_seed is None else cfg.scenario_seed
    return np.random.default_rng(np.random.SeedSequence((int(seed), 0x5CE7A810)))


def _pick_peak_leaves(tree: DocTree, count: int, rng) -> list[int]:
    picks = rng.choice(tree.n_leaves, size=count, replace=False)
    return [int(tree.leaf_ids[i]) for i in picks]


def _network_from_peaks(tree: DocTree, peaks, mu0: float) -> TreeNetwork:
    leaf_mu = build_peaked_mean(tree, peaks, mu0)
    means = extend_mean_average(tree, leaf_mu)
    bad = parent_child_lipschitz_violations(tree, means)
    if bad:
        p, v, gap, w = bad[0]
        raise ValueError(
            f"averaged means break the edge Lipschitz bound at {p}->{v}: "
            f"gap {gap:.6g} > weight {w:.6g} ({len(bad)} edges total)")
    return TreeNetwork.from_means(tree, means)


def scenario_two_peak(cfg: ExperimentConfig):
    rng = _scenario_rng(cfg)
    tree = build_balanced_tree(2, cfg.docs_log2, cfg.epsilon)
    leaves = _pick_peak_leaves(tree, cfg.n_peaks, rng)
    peaks = [(y, cfg.peak_value) for y in leaves]
    net = _network_from_peaks(tree, peaks, cfg.mu0)
    return tree, net, {"peaks": leaves}


def scenario_crp(cfg: ExperimentConfig):
    rng = _scenario_rng(cfg)
    tree = build_balanced_tree(2, cfg.docs_log2, cfg.epsilon)
    counts = crp_tables(cfg.crp_n, cfg.crp_theta, rng)
    values = crp_peak_values(counts, cfg.crp_n, cfg.mu0)
    leaves = _pick_peak_leaves(tree, len(counts), rng)
    total = sum(counts)
    comps = []
    for y, v, k in zip(leaves, values, counts):
        net = _network_from_peaks(tree, [(y, v)], cfg.mu0)
        comps.append((k / total, net))
    dist = comps[0][1] if len(comps) == 1 else MixtureUser(comps)
    return tree, dist, {"peaks": leaves, "tables": counts, "values": values}


def scenario_small_two_peak(cfg: ExperimentConfig):
    rng = _scenario_rng(cfg)
    tree = build_balanced_tree(2, 7, cfg.epsilon)
    leaves = _pick_peak_leaves(tree, 2, rng)
    comps = [(0.5, _network_from_peaks(tree, [(y, cfg.peak_value)], cfg.mu0))
             for y in leaves]
    return tree, MixtureUser(comps), {"peaks": leaves}


def scenario_discussion3(cfg: ExperimentConfig):
    dist = discussion3_instance()
    return dist.tree, dist, {}


def build_scenario(cfg: ExperimentConfig):
    """(tree, user distribution, metadata) for a validated config."""
    errs = cfg.validation_errors()
    if errs:
        raise ValueError("invalid config: " + "; ".join(errs))
    if cfg.scenario == "two-peak":
        return scenario_two_peak(cfg)
    if cfg.scenario == "crp":
        return scenario_crp(cfg)
    if cfg.scenario == "small-two-peak":
        return scenario_small_two_peak(cfg)
    if cfg.scenario == "discussion3":
        return scenario_discussion3(cfg)
    if cfg.scenario == "custom":
        sub = load_config_file(cfg.scenario_file, replace(cfg, scenario_file=None,
                                                          scenario="two-peak"))
        if sub.scenario == "custom":
            raise ValueError("custom scenario files cannot nest")
        return build_scenario(sub)
    raise AssertionError(cfg.scenario)


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------


class RunStreams:
    """Named RNG streams for one (algorithm, seed) run."""

    def __init__(self, master_seed: int, algo: str, seed_index: int, k: int):
        root = np.random.SeedSequence(
            (int(master_seed), zlib.crc32(algo.encode()), int(seed_index)))
        kids = root.spawn(2 + 2 * k)
        self.user = np.random.default_rng(kids[0])
        self.baseline = np.random.default_rng(kids[1])
        self._slots = [(np.random.default_rng(kids[2 + 2 * i]),
                        np.random.default_rng(kids[3 + 2 * i])) for i in range(k)]

    def slot(self, i: int):
        return self._slots[i]


# ---------------------------------------------------------------------------
# simulation loop
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    algorithm: str
    seed: int
    rounds: np.ndarray
    clicked: np.ndarray        # 0 = no click, else 1-based slot
    cum_clicks: np.ndarray
    empirical: np.ndarray      # cum_clicks / round
    exact: np.ndarray          # exact click probability of that round's slate
    active: np.ndarray

    @property
    def run_id(self) -> str:
        return f"{self.algorithm}-s{self.seed}"


def run_single(cfg: ExperimentConfig, tree, dist, algo: str, seed_index: int,
               evaluator: SlateEvaluator | None = None) -> RunResult:
    streams = RunStreams(cfg.master_seed, algo, seed_index, cfg.slots)
    policy = make_ranked(algo, tree, cfg.slots,
                         HorizonConfig(cfg.rounds), streams,
                         dist=dist, dedup=cfg.dedup)
    evaluator = evaluator or SlateEvaluator(dist)
    cadence = cfg.effective_cadence()
    n_rec = cfg.rounds // cadence + (1 if cfg.rounds % cadence else 0)
    rec_round = np.empty(n_rec, dtype=np.int64)
    rec_click = np.empty(n_rec, dtype=np.int16)
    rec_cum = np.empty(n_rec, dtype=np.int64)
    rec_emp = np.empty(n_rec, dtype=np.float64)
    rec_exact = np.empty(n_rec, dtype=np.float64)
    rec_active = np.empty(n_rec, dtype=np.int64)

    cum = 0
    row = 0
    for t in range(1, cfg.rounds + 1):
        user = dist.lazy_user(streams.user)
        slate = policy.compose_slate()
        outcome = simulate_click(user, slate)
        policy.route_payoffs(outcome)
        if outcome is not None:
            cum += 1
        if t % cadence == 0 or t == cfg.rounds:
            rec_round[row] = t
            rec_click[row] = 0 if outcome is None else outcome
            rec_cum[row] = cum
            rec_emp[row] = cum / t
            rec_exact[row] = evaluator(slate)
            rec_active[row] = policy.active_count()
            row += 1
    return RunResult(algo, seed_index, rec_round[:row], rec_click[:row],
                     rec_cum[:row], rec_emp[:row], rec_exact[:row],
                     rec_active[:row])


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[RunResult]:
    """All (algorithm, seed) runs of a config, in deterministic order."""
    errs = cfg.validation_errors()
    if errs:
        raise ValueError("invalid config: " + "; ".join(errs))
    tree, dist, _meta = build_scenario(cfg)
    evaluator = SlateEvaluator(dist)
    results = []
    for algo in cfg.algos:
        for s in range(cfg.seeds):
            if progress:
                progress(f"{algo} seed {s}")
            results.append(run_single(cfg, tree, dist, algo, s, evaluator))
    return results


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_csv(results: list[RunResult], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for res in results:
        rid = res.run_id
        for i in range(res.rounds.size):
            fh.write(f"{rid},{res.algorithm},{res.seed},{res.rounds[i]},"
                     f"{res.clicked[i]},{res.cum_clicks[i]},"
                     f"{float(res.empirical[i])!r},{float(res.exact[i])!r},"
                     f"{res.active[i]}\n")


def emit_csv(results: list[RunResult], path: str) -> None:
    buf = io.StringIO()
    write_csv(results, buf)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write results to {path!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# plain-text config files (key = value, # comments); flags override file
# ---------------------------------------------------------------------------

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_value(name: str, raw: str):
    spec = {f.name: f for f in fields(ExperimentConfig)}[name]
    raw = raw.strip()
    if name == "algos":
        return tuple(a.strip() for a in raw.split(",") if a.strip())
    if name in ("scenario", "out", "scenario_file"):
        return raw
    if name == "scenario_seed":
        return None if raw.lower() in ("", "none") else int(raw)
    if name == "dedup":
        return _BOOL[raw.lower()]
    if spec.type in ("int", "int | None"):
        return int(raw)
    if spec.type == "float":
        return float(raw)
    return raw


def load_config_file(path: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    names = {f.name for f in fields(ExperimentConfig)}
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in names:
                raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
            cfg = replace(cfg, **{key: _parse_value(key, raw)})
    return cfg
