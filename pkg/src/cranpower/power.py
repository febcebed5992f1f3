"""BS, backhaul and total network power consumption models.

A BS consumes a piecewise-linear amount of power: eta * p_tx + p_active when
transmitting, p_sleep when silent.  Backhaul links are billed linearly in
their traffic rate.  The total decomposes into four components (amplifier,
activation increment, backhaul, sleep constant) which sum back to the
straight per-BS accounting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .network import SimulationParams

logger = logging.getLogger(__name__)

#: a BS counts as active when its transmit power exceeds this; solver outputs
#: are never exactly zero so the ideal indicator needs a threshold
ACTIVITY_EPS_W = 1e-6


@dataclass
class ActivityVector:
    """Per-BS on/off state derived from transmit power thresholding."""

    active: np.ndarray        # (L,) bool
    threshold_used: float     # watts

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))


@dataclass
class PowerBreakdown:
    """Total network power split into its additive components (watts)."""

    per_bs_transmit: np.ndarray    # eta * p_tx per BS
    per_bs_activation: np.ndarray  # p_delta if active else 0
    per_bs_backhaul: np.ndarray    # rho * backhaul rate
    sleep_constant: float          # sum of p_sleep over all BSs
    total: float

    @property
    def transmit_w(self) -> float:
        return float(np.sum(self.per_bs_transmit))

    @property
    def activation_w(self) -> float:
        return float(np.sum(self.per_bs_activation))

    @property
    def backhaul_w(self) -> float:
        return float(np.sum(self.per_bs_backhaul))

    @property
    def n_active_bs(self) -> int:
        return int(np.count_nonzero(self.per_bs_activation > 0))

    def csv_row(self) -> dict:
        return {
            "total_w": self.total,
            "tx_w": self.transmit_w,
            "activation_w": self.activation_w,
            "backhaul_w": self.backhaul_w,
            "sleep_w": self.sleep_constant,
            "n_active_bs": self.n_active_bs,
        }


def bs_power(p_tx: float, params: SimulationParams,
             eps_active: float = ACTIVITY_EPS_W) -> float:
    """Consumed power of one BS at transmit power p_tx (watts)."""
    if p_tx < 0:
        raise ValueError("transmit power must be nonnegative")
    if p_tx > params.p_max_w * (1 + 1e-9):
        raise ValueError(f"transmit power {p_tx} exceeds cap {params.p_max_w}")
    if p_tx > eps_active:
        return params.eta * p_tx + params.p_active_w
    return params.p_sleep_w


def backhaul_power(r_bh_mbps: float, params: SimulationParams) -> float:
    """Power drawn by one backhaul link carrying r_bh_mbps of traffic."""
    if r_bh_mbps < 0:
        raise ValueError("backhaul rate must be nonnegative")
    if r_bh_mbps > params.backhaul_capacity_mbps:
        logger.warning("backhaul rate %.1f Mbps exceeds link capacity %.1f Mbps",
                       r_bh_mbps, params.backhaul_capacity_mbps)
    return params.rho_w_per_mbps * r_bh_mbps


def total_power(tx_w, backhaul_mbps, params: SimulationParams,
                eps_active: float = ACTIVITY_EPS_W) -> PowerBreakdown:
    """Network power breakdown for per-BS transmit powers and backhaul rates."""
    tx = np.asarray(tx_w, dtype=float)
    bh = np.asarray(backhaul_mbps, dtype=float)
    if tx.shape != bh.shape or tx.ndim != 1:
        raise ValueError("tx and backhaul lists must be 1-D of equal length")
    if np.any(tx < 0) or np.any(bh < 0):
        raise ValueError("powers and rates must be nonnegative")
    L = tx.shape[0]
    active = tx > eps_active
    transmit = params.eta * tx
    activation = np.where(active, params.p_delta_w, 0.0)
    backhaul = params.rho_w_per_mbps * bh
    sleep = params.p_sleep_w * L
    total = float(np.sum(transmit) + np.sum(activation) + np.sum(backhaul) + sleep)
    return PowerBreakdown(
        per_bs_transmit=transmit,
        per_bs_activation=activation,
        per_bs_backhaul=backhaul,
        sleep_constant=sleep,
        total=total,
    )


def activity_from_tx(tx_w, eps_active: float = ACTIVITY_EPS_W) -> ActivityVector:
    """Threshold transmit powers into an on/off activity vector."""
    tx = np.asarray(tx_w, dtype=float)
    return ActivityVector(active=tx > eps_active, threshold_used=eps_active)
