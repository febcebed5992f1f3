"""Reference schemes: Single BS Association and Per-Cell CoMP.

Single BS Association serves every user from its strongest not-yet-claimed
BS and runs classic fixed-point power control on the resulting interference
channel.  Per-Cell CoMP lets the in-cell RRHs beamform jointly for the
cell's users, with every BS in the network billed as active regardless of
load.  Both produce the same result/record shapes as the optimized
strategies so the sweep harness can treat all four uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ChannelRealization, SimulationParams, cell_of_point
from .power import ActivityVector, PowerBreakdown, total_power
from .solver import (QosInstance, SolverSolution, SolveStatus,
                     WeightedPowerMinProblem, compute_sinr)
from .data_sharing import (DsResult, MmTrace, cluster_backhaul_rates,
                           rate_to_sinr_target, _as_targets)

_FP_TOL = 1e-9
_FP_MAX_ITER = 10_000


@dataclass
class Association:
    """User-to-BS assignment with no BS serving two users."""

    bs_of_user: np.ndarray  # (K,) BS index per user

    def __post_init__(self) -> None:
        a = np.asarray(self.bs_of_user, dtype=int)
        if len(np.unique(a)) != a.shape[0]:
            raise ValueError("association must be injective")
        self.bs_of_user = a


def single_bs_assign(channel: ChannelRealization) -> Association:
    """Greedy strongest-BS assignment, strongest users first.

    Users are processed in descending order of their best channel gain
    (ties to the lower user index); each takes its strongest BS not already
    claimed by an earlier user.
    """
    mags = np.abs(channel.gains)
    L, K = mags.shape
    if K > L:
        raise ValueError("single BS association needs at least as many BSs as users")
    order = np.lexsort((np.arange(K), -mags.max(axis=0)))
    taken = np.zeros(L, dtype=bool)
    assign = np.full(K, -1, dtype=int)
    for k in order:
        free = np.flatnonzero(~taken)
        assign[k] = free[np.argmax(mags[free, k])]
        taken[assign[k]] = True
    return Association(bs_of_user=assign)


def single_bs_power_control(channel: ChannelRealization, assoc: Association,
                            targets, params: SimulationParams) -> SolverSolution:
    """Fixed-point transmit power control for a fixed single-BS association.

    Iterates p_k <- gamma_k * (interference_k + sigma^2) / |h_{a(k),k}|^2
    from p = 0; the iterates increase monotonically toward the fixed point
    when one exists, so any iterate exceeding the per-BS cap certifies
    infeasibility.  Divergence (spectral radius >= 1) shows up as failure to
    settle within the iteration budget.
    """
    K = channel.n_users
    targets = _as_targets(targets, K)
    gamma = np.array([rate_to_sinr_target(r, params) for r in targets])
    a = assoc.bs_of_user
    g2 = np.abs(channel.gains) ** 2
    own = g2[a, np.arange(K)]                 # |h_{a(k),k}|^2
    cross = g2[np.ix_(a, np.arange(K))].T     # cross[k, j] = |h_{a(j),k}|^2
    np.fill_diagonal(cross, 0.0)
    sigma2 = channel.noise_power

    p = np.zeros(K)
    status = SolveStatus.NUMERICAL_FAILURE
    for _ in range(_FP_MAX_ITER):
        p_new = gamma * (cross @ p + sigma2) / own
        if np.any(p_new > params.p_max_w):
            status = SolveStatus.INFEASIBLE
            break
        if np.all(np.abs(p_new - p) <= _FP_TOL * np.maximum(p_new, 1e-300)):
            p = p_new
            status = SolveStatus.OPTIMAL
            break
        p = p_new
    if status is not SolveStatus.OPTIMAL:
        return _failed_pc(channel, SolveStatus.INFEASIBLE)

    L = channel.n_bs
    w = np.zeros((L, K), dtype=complex)
    h_own = channel.gains[a, np.arange(K)]
    w[a, np.arange(K)] = np.sqrt(p) * h_own / np.abs(h_own)  # h_k^H w_k real >= 0
    return SolverSolution(
        beamformers=w,
        quant_noise=np.zeros(L),
        status=SolveStatus.OPTIMAL,
        objective=float(np.sum(p)),
        achieved_sinr=compute_sinr(channel.gains, w, None, channel.noise_power),
    )


def run_single_bs(channel: ChannelRealization, targets, params: SimulationParams,
                  bill_backhaul: bool = True) -> DsResult:
    """Single BS Association end to end, with data-sharing power billing."""
    K = channel.n_users
    targets = _as_targets(targets, K)
    assoc = single_bs_assign(channel)
    sol = single_bs_power_control(channel, assoc, targets, params)
    L = channel.n_bs
    if sol.status is not SolveStatus.OPTIMAL:
        return _failed_result(channel, sol.status)
    clusters = [np.array([assoc.bs_of_user[k]]) for k in range(K)]
    tx = (np.abs(sol.beamformers) ** 2).sum(axis=1)
    backhaul = cluster_backhaul_rates(clusters, targets, L) if bill_backhaul \
        else np.zeros(L)
    power = total_power(tx, backhaul, params)
    return DsResult(
        beamformers=sol.beamformers,
        clusters=clusters,
        activity=ActivityVector(active=tx > 0, threshold_used=0.0),
        backhaul_rates=backhaul,
        power=power,
        trace=MmTrace(converged=True),
        status=SolveStatus.OPTIMAL,
    )


def per_cell_comp(channel: ChannelRealization, targets,
                  params: SimulationParams) -> DsResult:
    """Per-Cell CoMP: each user served jointly by all RRHs of its own cell.

    Beamformers come from a plain transmit power minimization restricted to
    in-cell RRHs.  All BSs are billed active (the scheme never sleeps), and
    each in-cell RRH carries every in-cell user's message on its backhaul.
    """
    topo = channel.topology
    if topo is None:
        raise ValueError("per-cell CoMP needs the channel's topology")
    L, K = channel.gains.shape
    targets = _as_targets(targets, K)
    gamma = np.array([rate_to_sinr_target(r, params) for r in targets])
    cell_of_user = np.array([cell_of_point(topo, u) for u in channel.user_positions])
    mask = topo.cell_of_bs[:, None] == cell_of_user[None, :]
    inst = QosInstance(
        gains=channel.gains,
        noise_power=channel.noise_power,
        sinr_targets=gamma,
        power_caps=np.full(L, params.p_max_w),
        allowed=mask,
    )
    sol = WeightedPowerMinProblem(inst).solve(np.full((L, K), params.eta))
    if sol.status is not SolveStatus.OPTIMAL:
        return _failed_result(channel, sol.status)
    clusters = [np.flatnonzero(mask[:, k]) for k in range(K)]
    tx = (np.abs(sol.beamformers) ** 2).sum(axis=1)
    backhaul = cluster_backhaul_rates(clusters, targets, L)
    # scheme billing rule: every BS active, sleep never entered
    breakdown = PowerBreakdown(
        per_bs_transmit=params.eta * tx,
        per_bs_activation=np.full(L, params.p_delta_w),
        per_bs_backhaul=params.rho_w_per_mbps * backhaul,
        sleep_constant=params.p_sleep_w * L,
        total=float(params.eta * tx.sum() + L * params.p_active_w
                    + params.rho_w_per_mbps * backhaul.sum()),
    )
    return DsResult(
        beamformers=sol.beamformers,
        clusters=clusters,
        activity=ActivityVector(active=np.ones(L, dtype=bool), threshold_used=0.0),
        backhaul_rates=backhaul,
        power=breakdown,
        trace=MmTrace(converged=True),
        status=SolveStatus.OPTIMAL,
    )


def _failed_pc(channel: ChannelRealization, status: SolveStatus) -> SolverSolution:
    L, K = channel.gains.shape
    return SolverSolution(
        beamformers=np.zeros((L, K), dtype=complex),
        quant_noise=np.zeros(L),
        status=status,
        objective=np.inf,
        achieved_sinr=np.zeros(K),
    )


def _failed_result(channel: ChannelRealization, status: SolveStatus) -> DsResult:
    L, K = channel.gains.shape
    return DsResult(
        beamformers=np.zeros((L, K), dtype=complex),
        clusters=[np.array([], dtype=int) for _ in range(K)],
        activity=ActivityVector(active=np.zeros(L, dtype=bool), threshold_used=0.0),
        backhaul_rates=np.zeros(L),
        power=None,
        trace=MmTrace(),
        status=status,
    )
