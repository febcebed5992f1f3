"""Compression strategy: reweighted-l1 plus successive convex approximation.

The central processor precodes all user messages and ships quantized
beamformed signals over the backhaul, so each BS l carries a quantization
noise level q_l.  Backhaul traffic follows the rate-distortion expression
log2(1 + Gq * signal / q^2), which is a difference of concave terms; the
concave part is linearized at the previous iterate (tight there), while the
activation indicator uses the same log-based reweighting as data-sharing.
Each iteration then solves a convex quadratic-plus-log subproblem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import ChannelRealization, SimulationParams, candidate_mask
from .power import ACTIVITY_EPS_W, ActivityVector, PowerBreakdown, total_power
from .solver import (CompressionSubproblem, QosInstance, SolveStatus,
                     WeightedPowerMinProblem, compute_sinr)
from .data_sharing import (MmOptions, MmTrace, rate_to_sinr_target, reweight,
                           _as_targets)

#: quantization levels are floored here to keep initial traces finite
_Q_FLOOR = 1e-9


@dataclass
class CompWeights:
    """Reweighting and linearization state of the compression loop."""

    beta: np.ndarray   # (L,) activation weights
    lam: np.ndarray    # (L,) linearization points of the backhaul log


@dataclass
class CompResult:
    """Outcome of the compression optimization on one channel realization."""

    beamformers: np.ndarray
    quant_noise: np.ndarray          # (L,) q_l
    backhaul_rates: np.ndarray       # Mbps per BS
    activity: ActivityVector
    power: PowerBreakdown
    trace: MmTrace
    status: SolveStatus


def compression_backhaul_rate(beamformers: np.ndarray, q: np.ndarray,
                              params: SimulationParams) -> np.ndarray:
    """Per-BS backhaul traffic in Mbps, log2(1 + Gq * S_l / q_l^2) * B."""
    sig = (np.abs(beamformers) ** 2).sum(axis=1)
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) & (sig > 0)):
        raise ValueError("q must be positive wherever the BS carries signal")
    ratio = np.zeros_like(sig)
    nz = q > 0
    ratio[nz] = params.gamma_q_linear * sig[nz] / q[nz] ** 2
    return np.log2(1.0 + ratio) * params.bandwidth_mhz


def update_comp_weights(beamformers: np.ndarray, q: np.ndarray,
                        params: SimulationParams) -> CompWeights:
    """Reweighting beta_l = f(S_l + q_l^2, tau3) and tight linearization
    point lam_l = q_l^2 + Gq * S_l."""
    sig = (np.abs(beamformers) ** 2).sum(axis=1)
    q2 = np.asarray(q, dtype=float) ** 2
    beta = reweight(sig + q2, params.tau3)
    lam = q2 + params.gamma_q_linear * sig
    return CompWeights(beta=beta, lam=lam)


def comp_surrogate_coeffs(weights: CompWeights, params: SimulationParams
                          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadratic coefficients of the convex subproblem:
    phi = eta + beta*P_delta + rho*Gq/(lam ln2), psi likewise without Gq."""
    if np.any(weights.lam <= 0):
        raise ValueError("linearization points must be positive")
    L = weights.lam.shape[0]
    rho = np.full(L, params.rho_w_per_mbps * params.bandwidth_mhz)
    base = params.eta + weights.beta * params.p_delta_w
    phi = base + rho * params.gamma_q_linear / (weights.lam * math.log(2.0))
    psi = base + rho / (weights.lam * math.log(2.0))
    return phi, psi, rho


def smoothed_comp_objective(beamformers: np.ndarray, q: np.ndarray,
                            params: SimulationParams) -> float:
    """Log-smoothed total power surrogate for the compression strategy."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValueError("q must be strictly positive")
    sig = (np.abs(beamformers) ** 2).sum(axis=1)
    tot = sig + q ** 2
    rho = params.rho_w_per_mbps * params.bandwidth_mhz
    act = np.log1p(tot / params.tau3) / math.log1p(1.0 / params.tau3)
    bh = np.log2(1.0 + params.gamma_q_linear * sig / q ** 2)
    return float(np.sum(params.eta * tot)
                 + params.p_delta_w * np.sum(act)
                 + rho * np.sum(bh))


def comp_majorizer(beamformers: np.ndarray, q: np.ndarray,
                   anchor_w: np.ndarray, anchor_q: np.ndarray,
                   params: SimulationParams) -> float:
    """Convex upper bound of the smoothed objective, tight at the anchor."""
    q = np.asarray(q, dtype=float)
    qa = np.asarray(anchor_q, dtype=float)
    sig = (np.abs(beamformers) ** 2).sum(axis=1)
    sig_a = (np.abs(anchor_w) ** 2).sum(axis=1)
    tot, tot_a = sig + q ** 2, sig_a + qa ** 2
    z = 1.0 + tot_a / params.tau3
    lam = qa ** 2 + params.gamma_q_linear * sig_a
    if np.any(lam <= 0):
        raise ValueError("anchor must have positive per-BS power")
    rho = params.rho_w_per_mbps * params.bandwidth_mhz
    act = (np.log(z) + (1.0 + tot / params.tau3) / z - 1.0) / math.log1p(1.0 / params.tau3)
    ln2 = math.log(2.0)
    bh = (np.log2(lam) + (q ** 2 + params.gamma_q_linear * sig) / (lam * ln2)
          - 1.0 / ln2 - 2.0 * np.log2(q))
    return float(np.sum(params.eta * tot)
                 + params.p_delta_w * np.sum(act)
                 + rho * np.sum(bh))


def _initial_point(inst: QosInstance, params: SimulationParams
                   ) -> tuple[np.ndarray, np.ndarray, SolveStatus]:
    """Feasible starting point for the compression problem.

    Runs the plain weighted power minimization (data-sharing shape) for the
    beamformers, scales them up by a small common factor t > 1, and injects
    per-BS quantization noise sized against the SINR margin that the
    rescaling created: q is capped so the total quantization noise seen by
    any user stays below (t^2 - 1)/2 of the background noise, besides the
    1%-of-cap magnitude cap and the cap-headroom truncation.  The scaled
    beamformers then still meet every SINR target.  Returns INFEASIBLE only
    when no rescaling factor within the power caps exists.
    """
    ds = WeightedPowerMinProblem(inst).solve(
        np.full(inst.shape, params.eta))
    if ds.status is not SolveStatus.OPTIMAL:
        return None, None, ds.status
    w0 = ds.beamformers
    row0 = (np.abs(w0) ** 2).sum(axis=1)
    caps = inst.power_caps
    L = caps.shape[0]
    peak_gain = np.maximum((np.abs(inst.gains) ** 2).max(axis=1), 1e-300)

    def q_of(t: float) -> np.ndarray:
        headroom = np.maximum(caps - t ** 2 * row0, 0.0)
        budget = (t ** 2 - 1.0) * inst.noise_power / (2.0 * L * peak_gain)
        q2 = np.minimum(np.minimum(0.01 * caps, headroom / 2.0), budget)
        return np.maximum(np.sqrt(np.maximum(q2, 0.0)), _Q_FLOOR)

    def margin(t: float) -> float:
        sinr = compute_sinr(inst.gains, t * w0, q_of(t), inst.noise_power)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(inst.sinr_targets > 0,
                             sinr / np.maximum(inst.sinr_targets, 1e-300), np.inf)
        return float(np.min(ratio)) - 1.0

    if np.any(row0 > 0):
        t2_max = float(np.min(caps[row0 > 0] / row0[row0 > 0]))
    else:
        t2_max = 4.0
    if t2_max <= 1.0 + 1e-12:
        # no headroom anywhere: nonzero quantization noise cannot fit
        return None, None, SolveStatus.INFEASIBLE
    t2 = min(2.0, 0.5 * (1.0 + t2_max))
    for _ in range(60):
        t = math.sqrt(t2)
        if margin(t) >= -1e-9:
            return t * w0, q_of(t), SolveStatus.OPTIMAL
        t2 = 0.5 * (t2 + t2_max)
        if t2 >= t2_max * (1.0 - 1e-12):
            break
    return None, None, SolveStatus.INFEASIBLE


def run_algorithm2(channel: ChannelRealization, targets, params: SimulationParams,
                   opts: MmOptions | None = None) -> CompResult:
    """Full compression loop: init, SCA/reweighted descent, power accounting."""
    opts = opts or MmOptions()
    max_iter = opts.max_iter if opts.max_iter is not None else 150
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
    w, q, status = _initial_point(inst, params)
    if status is not SolveStatus.OPTIMAL:
        return _failed_comp_result(channel, status)

    problem = CompressionSubproblem(inst)
    trace = MmTrace()
    _append_comp_trace(trace, w, q, None, targets, params, opts)
    sleep_const = params.p_sleep_w * L

    for _ in range(1, max_iter):
        weights = update_comp_weights(w, q, params)
        phi, psi, rho = comp_surrogate_coeffs(weights, params)
        step = problem.solve(phi, psi, rho)
        if step.status is not SolveStatus.OPTIMAL:
            status = step.status
            break
        w_new, q_new = step.beamformers, step.quant_noise
        maj_new = comp_majorizer(w_new, q_new, w, q, params)
        if maj_new > smoothed_comp_objective(w, q, params):
            trace.converged = True
            break
        prev = trace.smoothed_objective[-1]
        w, q = w_new, q_new
        _append_comp_trace(trace, w, q, maj_new, targets, params, opts)
        cur = trace.smoothed_objective[-1]
        # convergence on the full smoothed network power (sleep term included)
        if abs(cur - prev) <= opts.conv_tol * (abs(prev) + sleep_const):
            trace.converged = True
            break

    tx = (np.abs(w) ** 2).sum(axis=1) + q ** 2
    backhaul = compression_backhaul_rate(w, q, params)
    activity = ActivityVector(active=tx > opts.eps_active,
                              threshold_used=opts.eps_active)
    power = total_power(tx, backhaul, params, opts.eps_active)
    return CompResult(
        beamformers=w,
        quant_noise=q,
        backhaul_rates=backhaul,
        activity=activity,
        power=power,
        trace=trace,
        status=status,
    )


def _append_comp_trace(trace: MmTrace, w: np.ndarray, q: np.ndarray,
                       surrogate: float | None, targets: np.ndarray,
                       params: SimulationParams, opts: MmOptions) -> None:
    tx = (np.abs(w) ** 2).sum(axis=1) + q ** 2
    backhaul = compression_backhaul_rate(w, q, params)
    pw = total_power(tx, backhaul, params, opts.eps_active)
    smoothed = smoothed_comp_objective(w, q, params)
    trace.surrogate_objective.append(surrogate if surrogate is not None else smoothed)
    trace.smoothed_objective.append(smoothed)
    trace.true_total_power.append(pw.total)
    trace.n_active_bs.append(int(np.count_nonzero(tx > opts.eps_active)))
    trace.max_cluster_size.append(
        int(np.max(np.count_nonzero(np.abs(w) ** 2 > opts.eps_cluster, axis=0), initial=0)))
    trace.q_min.append(float(np.min(q)))
    trace.q_max.append(float(np.max(q)))
    trace.backhaul_total_mbps.append(float(np.sum(backhaul)))
    if opts.record_iterates:
        trace.iterates.append((w.copy(), q.copy()))


def _failed_comp_result(channel: ChannelRealization, status: SolveStatus) -> CompResult:
    L, K = channel.gains.shape
    return CompResult(
        beamformers=np.zeros((L, K), dtype=complex),
        quant_noise=np.zeros(L),
        backhaul_rates=np.zeros(L),
        activity=ActivityVector(active=np.zeros(L, dtype=bool),
                                threshold_used=ACTIVITY_EPS_W),
        power=None,
        trace=MmTrace(),
        status=status,
    )
