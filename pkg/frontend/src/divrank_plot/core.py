"""Load simulator CSVs and aggregate them into drawable performance curves.

The input schema is the simulator's run log: one row per recorded round of one
(algorithm, seed) run. Curves are per-algorithm: seeds are aligned on the
round column and averaged, with a min-max band across seeds. Reading is
strictly read-only and rendering the same file twice produces the same
figure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

EXPECTED_COLUMNS = ("run_id", "algorithm", "seed", "round", "clicked_slot",
                    "cum_clicks", "empirical_perf", "exact_perf", "active_count")

METRICS = ("empirical_perf", "exact_perf")

BASELINE_STYLES = {
    "random": {"color": "0.45", "linestyle": ":", "linewidth": 1.2},
    "greedyOracle": {"color": "black", "linestyle": "--", "linewidth": 1.2},
}


class SchemaError(ValueError):
    """The CSV does not carry the expected simulator columns."""


@dataclass
class Curve:
    algorithm: str
    rounds: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_seeds: int

    @property
    def is_baseline(self) -> bool:
        return self.algorithm in BASELINE_STYLES


def _validate_header(fieldnames) -> None:
    got = list(fieldnames or [])
    missing = [c for c in EXPECTED_COLUMNS if c not in got]
    if missing:
        extra = [c for c in got if c not in EXPECTED_COLUMNS]
        raise SchemaError(
            f"missing columns: {', '.join(missing)}"
            + (f"; unexpected columns: {', '.join(extra)}" if extra else "")
            + f"; expected header: {','.join(EXPECTED_COLUMNS)}")


def load_runs(path: str) -> dict[str, dict[str, list[tuple[int, float, float]]]]:
    """{algorithm: {run_id: [(round, empirical, exact), ...]}}."""
    runs: dict[str, dict[str, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _validate_header(reader.fieldnames)
        for ln, row in enumerate(reader, 2):
            try:
                algo = row["algorithm"]
                rec = (int(row["round"]), float(row["empirical_perf"]),
                       float(row["exact_perf"]))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"line {ln}: bad value in row ({exc})") from exc
            runs.setdefault(algo, {}).setdefault(row["run_id"], []).append(rec)
    if not runs:
        raise SchemaError("no data rows: the file is header-only")
    return runs


def _downsample(idx: np.ndarray, limit: int) -> np.ndarray:
    if idx.size <= limit:
        return idx
    pick = np.linspace(0, idx.size - 1, limit).round().astype(int)
    return idx[np.unique(pick)]


def build_curves(runs, metric: str, max_points: int = 2000) -> list[Curve]:
    """Seed-averaged curves with min-max bands, aligned on common rounds."""
    if metric not in METRICS:
        raise SchemaError(f"unknown metric {metric!r}; choose from {METRICS}")
    col = 1 if metric == "empirical_perf" else 2
    curves = []
    for algo in sorted(runs):
        per_seed = []
        common = None
        for rid, rows in sorted(runs[algo].items()):
            rows = sorted(rows)
            rounds = np.array([r[0] for r in rows])
            vals = np.array([r[col] for r in rows])
            per_seed.append((rounds, vals))
            common = rounds if common is None else np.intersect1d(common, rounds)
        if common is None or common.size == 0:
            continue
        aligned = []
        for rounds, vals in per_seed:
            pos = np.searchsorted(rounds, common)
            aligned.append(vals[pos])
        stack = np.vstack(aligned)
        keep = _downsample(np.arange(common.size), max_points)
        curves.append(Curve(algorithm=algo,
                            rounds=common[keep],
                            mean=stack.mean(axis=0)[keep],
                            lo=stack.min(axis=0)[keep],
                            hi=stack.max(axis=0)[keep],
                            n_seeds=stack.shape[0]))
    return curves


def render(csv_path: str, metric: str, out_path: str, max_points: int = 2000,
           title: str | None = None) -> list[Curve]:
    """Read a run CSV and write one figure; returns the plotted curves."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = build_curves(load_runs(csv_path), metric, max_points)
    fig, ax = plt.subplots(figsize=(9, 5.5))
    for curve in curves:
        style = BASELINE_STYLES.get(curve.algorithm, {})
        line, = ax.plot(curve.rounds, curve.mean, label=curve.algorithm, **style)
        if curve.n_seeds > 1 and not curve.is_baseline:
            ax.fill_between(curve.rounds, curve.lo, curve.hi,
                            color=line.get_color(), alpha=0.15, linewidth=0)
    ax.set_xlabel("round")
    ax.set_ylabel(metric)
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title(title or f"{metric} (mean over seeds, min-max band)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return curves
