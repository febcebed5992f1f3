"""Data-sharing strategy: reweighted-l1 total power minimization.

The nonconvex activation and backhaul indicator terms are replaced by
log-based surrogates and minimized by alternating between a weighted
transmit-power minimization and multiplicative weight updates.  With the
reweighting function

    f(x, tau) = 1 / ((x + tau) * ln(1 + 1/tau))

each iteration minimizes a convex quadratic majorizer that touches the
smoothed objective at the previous iterate, so the smoothed objective is
nonincreasing and the loop converges.  After convergence, serving clusters
are read off by thresholding and a final plain power minimization is run on
the pruned support so the reported beamformer is exactly feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import ChannelRealization, SimulationParams, candidate_mask
from .power import ACTIVITY_EPS_W, ActivityVector, PowerBreakdown, total_power
from .solver import (QosInstance, SolverSolution, SolveStatus,
                     WeightedPowerMinProblem)

#: beamformer energies below this count as "not serving" (matches tau2 scale)
CLUSTER_EPS_W = 1e-8


@dataclass
class MmOptions:
    """Knobs of the majorization-minimization loops."""

    max_iter: int | None = None     # per-algorithm default when None
    conv_tol: float = 1e-5          # relative smoothed-objective change
    L_c: int = 14                   # candidate cluster size
    eps_cluster: float = CLUSTER_EPS_W
    eps_active: float = ACTIVITY_EPS_W
    record_iterates: bool = False   # keep per-iteration variables (audits)


@dataclass
class DsWeights:
    """Reweighting state: BS activation weights and cluster weights."""

    mu: np.ndarray   # (L,)
    nu: np.ndarray   # (L, K)


@dataclass
class MmTrace:
    """Per-iteration convergence audit of one MM run."""

    surrogate_objective: list[float] = field(default_factory=list)
    smoothed_objective: list[float] = field(default_factory=list)
    true_total_power: list[float] = field(default_factory=list)
    n_active_bs: list[int] = field(default_factory=list)
    max_cluster_size: list[int] = field(default_factory=list)
    q_min: list[float] = field(default_factory=list)        # compression only
    q_max: list[float] = field(default_factory=list)        # compression only
    backhaul_total_mbps: list[float] = field(default_factory=list)
    iterates: list = field(default_factory=list)            # when recorded
    converged: bool = False

    def __len__(self) -> int:
        return len(self.smoothed_objective)

    @property
    def n_iterations(self) -> int:
        return len(self)

    def csv_rows(self) -> list[dict]:
        rows = []
        has_q = bool(self.q_min)
        for i in range(len(self)):
            row = {
                "iter": i + 1,
                "surrogate": self.surrogate_objective[i],
                "smoothed": self.smoothed_objective[i],
                "true_power": self.true_total_power[i],
                "n_active": self.n_active_bs[i],
                "max_cluster": self.max_cluster_size[i],
            }
            if has_q:
                row.update(q_min=self.q_min[i], q_max=self.q_max[i],
                           backhaul_total_mbps=self.backhaul_total_mbps[i])
            rows.append(row)
        return rows


@dataclass
class DsResult:
    """Outcome of the data-sharing optimization on one channel realization."""

    beamformers: np.ndarray
    clusters: list[np.ndarray]       # per-user serving BS indices
    activity: ActivityVector
    backhaul_rates: np.ndarray       # Mbps per BS
    power: PowerBreakdown
    trace: MmTrace
    status: SolveStatus


def rate_to_sinr_target(rate_mbps: float, params: SimulationParams) -> float:
    """Linear SINR target for a service rate, gamma = Gm * (2^(r/B) - 1)."""
    if rate_mbps < 0:
        raise ValueError("rate must be nonnegative")
    spectral = rate_mbps / params.bandwidth_mhz  # bits/s/Hz
    return params.gamma_m_linear * (2.0 ** spectral - 1.0)


def reweight(x: float, tau: float) -> float:
    """Reweighting function 1 / ((x + tau) * ln(1 + 1/tau))."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be nonnegative")
    return 1.0 / ((x + tau) * math.log1p(1.0 / tau))


def update_ds_weights(beamformers: np.ndarray,
                      params: SimulationParams) -> DsWeights:
    """Recompute activation and cluster weights from the current iterate."""
    p = np.abs(beamformers) ** 2
    mu = reweight(p.sum(axis=1), params.tau1)
    nu = reweight(p, params.tau2)
    return DsWeights(mu=mu, nu=nu)


def ds_surrogate_weights(weights: DsWeights, targets_mbps: np.ndarray,
                         params: SimulationParams) -> np.ndarray:
    """Per-entry quadratic weights alpha = eta + mu*P_delta + rho*nu*r."""
    r = np.asarray(targets_mbps, dtype=float)
    return (params.eta
            + weights.mu[:, None] * params.p_delta_w
            + params.rho_w_per_mbps * weights.nu * r[None, :])


def smoothed_ds_objective(beamformers: np.ndarray, params: SimulationParams,
                          targets_mbps: np.ndarray) -> float:
    """Log-smoothed total power surrogate that the MM loop descends on."""
    p = np.abs(beamformers) ** 2
    r = np.asarray(targets_mbps, dtype=float)
    row = p.sum(axis=1)
    act = np.log1p(row / params.tau1) / math.log1p(1.0 / params.tau1)
    bh = np.log1p(p / params.tau2) / math.log1p(1.0 / params.tau2)
    return float(np.sum(params.eta * row)
                 + params.p_delta_w * np.sum(act)
                 + params.rho_w_per_mbps * np.sum(bh * r[None, :]))


def ds_majorizer(beamformers: np.ndarray, anchor: np.ndarray,
                 params: SimulationParams, targets_mbps: np.ndarray) -> float:
    """Convex quadratic upper bound of the smoothed objective, tight at
    the anchor iterate (where it equals smoothed_ds_objective(anchor))."""
    p = np.abs(beamformers) ** 2
    pa = np.abs(anchor) ** 2
    r = np.asarray(targets_mbps, dtype=float)
    row, row_a = p.sum(axis=1), pa.sum(axis=1)
    x = 1.0 + row_a / params.tau1
    y = 1.0 + pa / params.tau2
    act = (np.log(x) + (1.0 + row / params.tau1) / x - 1.0) / math.log1p(1.0 / params.tau1)
    bh = (np.log(y) + (1.0 + p / params.tau2) / y - 1.0) / math.log1p(1.0 / params.tau2)
    return float(np.sum(params.eta * row)
                 + params.p_delta_w * np.sum(act)
                 + params.rho_w_per_mbps * np.sum(bh * r[None, :]))


def extract_clusters(beamformers: np.ndarray, eps_cluster: float = CLUSTER_EPS_W,
                     eps_active: float = ACTIVITY_EPS_W
                     ) -> tuple[list[np.ndarray], ActivityVector]:
    """Threshold per-entry powers into serving clusters and BS activity."""
    p = np.abs(beamformers) ** 2
    clusters = [np.flatnonzero(p[:, k] > eps_cluster) for k in range(p.shape[1])]
    activity = ActivityVector(active=p.sum(axis=1) > eps_active,
                              threshold_used=eps_active)
    return clusters, activity


def cluster_backhaul_rates(clusters: list[np.ndarray], targets_mbps: np.ndarray,
                           n_bs: int) -> np.ndarray:
    """Per-BS backhaul traffic: sum of served users' target rates."""
    rates = np.zeros(n_bs)
    for k, cl in enumerate(clusters):
        rates[cl] += targets_mbps[k]
    return rates


def _as_targets(targets, n_users: int) -> np.ndarray:
    t = np.asarray(targets, dtype=float)
    if t.ndim == 0:
        t = np.full(n_users, float(t))
    if t.shape != (n_users,):
        raise ValueError("targets must be scalar or one rate per user")
    return t


def _true_power(tx_w: np.ndarray, clusters: list[np.ndarray],
                targets: np.ndarray, params: SimulationParams,
                eps_active: float) -> PowerBreakdown:
    bh = cluster_backhaul_rates(clusters, targets, tx_w.shape[0])
    return total_power(tx_w, bh, params, eps_active)


def run_algorithm1(channel: ChannelRealization, targets, params: SimulationParams,
                   opts: MmOptions | None = None) -> DsResult:
    """Full data-sharing loop: init, reweighted descent, cluster extraction.

    The initial point is the plain weighted power minimization (weights =
    eta) over the candidate masks; each subsequent iteration re-solves with
    the reweighted quadratic coefficients.  A step that fails to descend on
    the current majorizer (possible only through solver round-off) is
    rejected and treated as converged.
    """
    opts = opts or MmOptions()
    max_iter = opts.max_iter if opts.max_iter is not None else 100
    L, K = channel.gains.shape
    targets = _as_targets(targets, K)
    gamma = np.array([rate_to_sinr_target(r, params) for r in targets])
    mask = candidate_mask(channel, min(opts.L_c, L))
    inst = QosInstance(
        gains=channel.gains,
        noise_power=channel.noise_power,
        sinr_targets=gamma,
        power_caps=np.full(L, params.p_max_w),
        allowed=mask,
    )
    problem = WeightedPowerMinProblem(inst)

    sol = problem.solve(np.full((L, K), params.eta))
    if sol.status is not SolveStatus.OPTIMAL:
        return _failed_ds_result(channel, sol.status)

    trace = MmTrace()
    w = sol.beamformers
    _append_ds_trace(trace, w, None, targets, params, opts)
    sleep_const = params.p_sleep_w * L

    status = SolveStatus.OPTIMAL
    for _ in range(1, max_iter):
        weights = update_ds_weights(w, params)
        alpha = ds_surrogate_weights(weights, targets, params)
        step = problem.solve(alpha)
        if step.status is not SolveStatus.OPTIMAL:
            status = step.status
            break
        w_new = step.beamformers
        maj_new = ds_majorizer(w_new, w, params, targets)
        if maj_new > smoothed_ds_objective(w, params, targets):
            trace.converged = True  # descent exhausted within solver accuracy
            break
        prev = trace.smoothed_objective[-1]
        w = w_new
        _append_ds_trace(trace, w, maj_new, targets, params, opts)
        cur = trace.smoothed_objective[-1]
        # relative change measured on the full smoothed network power: the
        # surrogate drops the constant sleep term, but convergence should not
        # depend on that arbitrary origin shift
        if abs(cur - prev) <= opts.conv_tol * (abs(prev) + sleep_const):
            trace.converged = True
            break

    return _finalize_ds(channel, inst, problem, w, targets, params, opts, trace, status)


def _append_ds_trace(trace: MmTrace, w: np.ndarray, surrogate: float | None,
                     targets: np.ndarray, params: SimulationParams,
                     opts: MmOptions) -> None:
    clusters, activity = extract_clusters(w, opts.eps_cluster, opts.eps_active)
    tx = (np.abs(w) ** 2).sum(axis=1)
    pw = _true_power(tx, clusters, targets, params, opts.eps_active)
    trace.surrogate_objective.append(
        surrogate if surrogate is not None
        else smoothed_ds_objective(w, params, targets))
    trace.smoothed_objective.append(smoothed_ds_objective(w, params, targets))
    trace.true_total_power.append(pw.total)
    trace.n_active_bs.append(activity.n_active)
    trace.max_cluster_size.append(max((len(c) for c in clusters), default=0))
    if opts.record_iterates:
        trace.iterates.append(w.copy())


def _finalize_ds(channel, inst, problem, w, targets, params, opts, trace,
                 status) -> DsResult:
    clusters, activity = extract_clusters(w, opts.eps_cluster, opts.eps_active)
    w_final = w
    if status is SolveStatus.OPTIMAL and all(len(c) > 0 for c in clusters):
        pruned = np.zeros_like(inst.allowed)
        for k, cl in enumerate(clusters):
            pruned[cl, k] = True
        polish_inst = QosInstance(
            gains=inst.gains, noise_power=inst.noise_power,
            sinr_targets=inst.sinr_targets, power_caps=inst.power_caps,
            allowed=pruned)
        polish = WeightedPowerMinProblem(polish_inst).solve(
            np.full(inst.shape, params.eta))
        if polish.status is SolveStatus.OPTIMAL:
            w_final = polish.beamformers
    tx = (np.abs(w_final) ** 2).sum(axis=1)
    activity = ActivityVector(active=tx > opts.eps_active,
                              threshold_used=opts.eps_active)
    backhaul = cluster_backhaul_rates(clusters, targets, inst.shape[0])
    power = total_power(tx, backhaul, params, opts.eps_active)
    return DsResult(
        beamformers=w_final,
        clusters=clusters,
        activity=activity,
        backhaul_rates=backhaul,
        power=power,
        trace=trace,
        status=status,
    )


def _failed_ds_result(channel: ChannelRealization, status: SolveStatus) -> DsResult:
    L, K = channel.gains.shape
    return DsResult(
        beamformers=np.zeros((L, K), dtype=complex),
        clusters=[np.array([], dtype=int) for _ in range(K)],
        activity=ActivityVector(active=np.zeros(L, dtype=bool),
                                threshold_used=ACTIVITY_EPS_W),
        backhaul_rates=np.zeros(L),
        power=None,
        trace=MmTrace(),
        status=status,
    )
