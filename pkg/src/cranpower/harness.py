"""Experiment harness: seeded Monte-Carlo sweeps over rates, user densities
and strategies, with aggregation and plot-ready file emission.

Every (users_per_cell, realization) pair maps to one deterministic channel
draw shared by all strategies and rates, so comparisons are paired.  Rows
with zero feasible realizations are still emitted (with empty means), which
is how infeasible schemes show up as missing points in the figures.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import (ConfigurationError, SimulationParams, build_hex_topology,
                      draw_channel, drop_users)
from .data_sharing import MmOptions, run_algorithm1
from .compression import run_algorithm2
from .baselines import per_cell_comp, run_single_bs
from .solver import SolveStatus

STRATEGIES = ("data_sharing", "compression", "single_bs", "per_cell_comp")

_CONFIG_KEYS = {"params", "topology", "rates_mbps", "users_per_cell",
                "strategies", "n_realizations", "master_seed", "L_c",
                "opts", "output_dir"}
_OPTS_KEYS = {"conv_tol", "max_iter_data_sharing", "max_iter_compression",
              "eps_cluster", "eps_active"}
_TOPOLOGY_KEYS = {"num_cells", "rrh_per_cell", "inter_site_distance"}

AGGREGATE_COLUMNS = ["strategy", "rate_mbps", "users_per_cell", "n_feasible",
                     "mean_total_w", "mean_tx_w", "mean_activation_w",
                     "mean_backhaul_w", "mean_active_fraction", "mean_iters"]
RUN_COLUMNS = ["strategy", "rate_mbps", "users_per_cell", "realization", "seed",
               "status", "total_w", "tx_w", "activation_w", "backhaul_w",
               "sleep_w", "n_active_bs", "active_fraction", "iters", "converged"]


@dataclass
class ExperimentConfig:
    """Validated sweep description; defaults reproduce the reference setup."""

    params: SimulationParams = field(default_factory=SimulationParams)
    num_cells: int = 7
    rrh_per_cell: int = 4
    inter_site_distance: float = 0.8
    rates_mbps: tuple = (10, 20, 30, 40, 50, 60, 70)
    users_per_cell: tuple = (1, 2, 3)
    strategies: tuple = STRATEGIES
    n_realizations: int = 20
    master_seed: int = 1
    L_c: int = 14
    conv_tol: float = 1e-5
    max_iter_data_sharing: int = 100
    max_iter_compression: int = 150
    eps_cluster: float = 1e-8
    eps_active: float = 1e-6
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.n_realizations < 1:
            raise ConfigurationError("n_realizations must be >= 1")
        if not self.rates_mbps or any(r <= 0 for r in self.rates_mbps):
            raise ConfigurationError("rates must be strictly positive")
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ConfigurationError(f"unknown strategies: {sorted(unknown)}")
        if not self.users_per_cell or any(u < 1 for u in self.users_per_cell):
            raise ConfigurationError("users_per_cell entries must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kw: dict = {}
        if "params" in doc:
            try:
                kw["params"] = SimulationParams(**doc["params"])
            except TypeError as exc:
                raise ConfigurationError(f"bad params block: {exc}") from exc
        topo = doc.get("topology", {})
        if set(topo) - _TOPOLOGY_KEYS:
            raise ConfigurationError(f"unknown topology keys: {sorted(set(topo) - _TOPOLOGY_KEYS)}")
        kw.update({k: topo[k] for k in topo})
        opts = doc.get("opts", {})
        if set(opts) - _OPTS_KEYS:
            raise ConfigurationError(f"unknown opts keys: {sorted(set(opts) - _OPTS_KEYS)}")
        kw.update({k: opts[k] for k in opts})
        for key in ("rates_mbps", "users_per_cell", "strategies"):
            if key in doc:
                kw[key] = tuple(doc[key])
        for key in ("n_realizations", "master_seed", "L_c", "output_dir"):
            if key in doc:
                kw[key] = doc[key]
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def mm_options(self, strategy: str) -> MmOptions:
        max_iter = (self.max_iter_data_sharing if strategy == "data_sharing"
                    else self.max_iter_compression)
        return MmOptions(max_iter=max_iter, conv_tol=self.conv_tol, L_c=self.L_c,
                         eps_cluster=self.eps_cluster, eps_active=self.eps_active)


@dataclass
class AggregateRow:
    """One (strategy, rate, density) cell of the sweep, feasible-run means."""

    strategy: str
    rate_mbps: float
    users_per_cell: int
    n_feasible: int
    mean_total_w: float | None
    mean_tx_w: float | None
    mean_activation_w: float | None
    mean_backhaul_w: float | None
    mean_active_fraction: float | None
    mean_iters: float | None


@dataclass
class ExperimentResult:
    rows: list[AggregateRow]
    runs: list[dict]
    traces: dict[tuple, list[dict]]   # (strategy, rate, users, seed) -> rows


def realization_seed(master_seed: int, users_per_cell: int, realization: int) -> int:
    """Deterministic per-realization seed (shared by all strategies/rates)."""
    ss = np.random.SeedSequence([int(master_seed), int(users_per_cell),
                                 int(realization)])
    return int(ss.generate_state(1)[0])


def run_one(channel, strategy: str, rate: float, config: ExperimentConfig):
    """Run one strategy at one rate on a drawn channel realization."""
    targets = np.full(channel.n_users, float(rate))
    if strategy == "data_sharing":
        return run_algorithm1(channel, targets, config.params,
                              config.mm_options(strategy))
    if strategy == "compression":
        return run_algorithm2(channel, targets, config.params,
                              config.mm_options(strategy))
    if strategy == "single_bs":
        return run_single_bs(channel, targets, config.params)
    if strategy == "per_cell_comp":
        return per_cell_comp(channel, targets, config.params)
    raise ConfigurationError(f"unknown strategy {strategy}")


def _run_record(result, strategy: str, rate: float, users: int,
                realization: int, seed: int, n_bs: int) -> dict:
    feasible = result.status is SolveStatus.OPTIMAL and result.power is not None
    rec = {
        "strategy": strategy, "rate_mbps": float(rate), "users_per_cell": users,
        "realization": realization, "seed": seed, "status": result.status.value,
        "total_w": None, "tx_w": None, "activation_w": None, "backhaul_w": None,
        "sleep_w": None, "n_active_bs": None, "active_fraction": None,
        "iters": len(result.trace) if result.trace is not None else 0,
        "converged": bool(result.trace.converged) if result.trace is not None else False,
    }
    if feasible:
        pw = result.power
        n_active = int(np.count_nonzero(result.activity.active))
        rec.update(total_w=pw.total, tx_w=pw.transmit_w,
                   activation_w=pw.activation_w, backhaul_w=pw.backhaul_w,
                   sleep_w=pw.sleep_constant, n_active_bs=n_active,
                   active_fraction=n_active / n_bs)
    return rec


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Execute the configured sweep; never aborts on per-run infeasibility."""
    topo = build_hex_topology(config.num_cells, config.rrh_per_cell,
                              config.inter_site_distance)
    runs: list[dict] = []
    traces: dict[tuple, list[dict]] = {}
    for users in config.users_per_cell:
        for i in range(config.n_realizations):
            seed = realization_seed(config.master_seed, users, i)
            positions = drop_users(topo, users, seed)
            channel = draw_channel(topo, positions, config.params, seed)
            for rate in config.rates_mbps:
                for strategy in config.strategies:
                    result = run_one(channel, strategy, rate, config)
                    runs.append(_run_record(result, strategy, rate, users, i,
                                            seed, topo.n_bs))
                    if result.trace is not None and len(result.trace):
                        traces[(strategy, rate, users, seed)] = result.trace.csv_rows()
    rows = aggregate_runs(runs)
    return ExperimentResult(rows=rows, runs=runs, traces=traces)


def aggregate_runs(runs: list[dict]) -> list[AggregateRow]:
    """Group per-run records into feasible-only means per sweep cell."""
    cells: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for rec in runs:
        key = (rec["strategy"], rec["rate_mbps"], rec["users_per_cell"])
        if key not in cells:
            cells[key] = []
            order.append(key)
        cells[key].append(rec)
    rows = []
    for key in order:
        grp = cells[key]
        feas = [r for r in grp if r["total_w"] is not None]
        n = len(feas)

        def mean(col: str):
            return float(np.mean([r[col] for r in feas])) if n else None

        rows.append(AggregateRow(
            strategy=key[0], rate_mbps=key[1], users_per_cell=key[2],
            n_feasible=n, mean_total_w=mean("total_w"), mean_tx_w=mean("tx_w"),
            mean_activation_w=mean("activation_w"),
            mean_backhaul_w=mean("backhaul_w"),
            mean_active_fraction=mean("active_fraction"),
            mean_iters=mean("iters"),
        ))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def emit_outputs(result: ExperimentResult, output_dir) -> list[Path]:
    """Write aggregates.csv, runs.csv, per-run traces and figdata.json."""
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "traces").mkdir(exist_ok=True)
        written = []
        agg_rows = [vars(r) | {"rate_mbps": r.rate_mbps} for r in result.rows]
        p = out / "aggregates.csv"
        _write_csv(p, AGGREGATE_COLUMNS, agg_rows)
        written.append(p)
        p = out / "runs.csv"
        _write_csv(p, RUN_COLUMNS, result.runs)
        written.append(p)
        trace_cols = ["iter", "surrogate", "smoothed", "true_power", "n_active",
                      "max_cluster", "q_min", "q_max", "backhaul_total_mbps"]
        for (strategy, rate, users, seed), rows in sorted(result.traces.items()):
            name = f"{strategy}_{rate:g}_{seed}.csv"
            cols = trace_cols if rows and "q_min" in rows[0] else trace_cols[:6]
            p = out / "traces" / name
            _write_csv(p, cols, rows)
            written.append(p)
        p = out / "figdata.json"
        p.write_text(json.dumps(figure_data(result), indent=1, sort_keys=True))
        written.append(p)
        return written
    except OSError as exc:
        raise IOError(f"cannot write outputs under {output_dir}: {exc}") from exc


def figure_data(result: ExperimentResult) -> dict:
    """Plot-ready series keyed by the figure each one reproduces."""
    fig4: dict = {}
    fig5: dict = {}
    fig6: dict = {}
    for row in result.rows:
        u, s = str(row.users_per_cell), row.strategy
        for top in (fig4, fig5, fig6):
            top.setdefault(u, {}).setdefault(s, {"rates": []})
        fig4[u][s].setdefault("mean_total_w", [])
        fig5[u][s].setdefault("bs_power_w", [])
        fig5[u][s].setdefault("backhaul_power_w", [])
        fig6[u][s].setdefault("mean_active_fraction", [])
        for top in (fig4, fig5, fig6):
            top[u][s]["rates"].append(row.rate_mbps)
        fig4[u][s]["mean_total_w"].append(row.mean_total_w)
        if row.mean_total_w is None:
            fig5[u][s]["bs_power_w"].append(None)
            fig5[u][s]["backhaul_power_w"].append(None)
        else:
            fig5[u][s]["bs_power_w"].append(
                row.mean_total_w - row.mean_backhaul_w)
            fig5[u][s]["backhaul_power_w"].append(row.mean_backhaul_w)
        fig6[u][s]["mean_active_fraction"].append(row.mean_active_fraction)

    fig2: dict = {}
    fig3: dict = {}
    first_seed_of: dict[tuple, int] = {}
    for (strategy, rate, users, seed) in sorted(result.traces):
        first_seed_of.setdefault((strategy, rate, users), seed)
    for (strategy, rate, users), seed in first_seed_of.items():
        rows = result.traces[(strategy, rate, users, seed)]
        key = f"{strategy}_u{users}_r{rate:g}"
        fig2[key] = [r["n_active"] for r in rows]
        fig3[key] = [r["smoothed"] for r in rows]
    return {
        "fig2_active_bs_trajectory": fig2,
        "fig3_objective_trajectory": fig3,
        "fig4_total_power": fig4,
        "fig5_power_decomposition": fig5,
        "fig6_active_fraction": fig6,
    }
