"""Hexagonal wrap-around network layout and random channel generation.

The simulated network is a cluster of hexagonal cells, each hosting a few
low-power remote radio heads (RRHs, referred to as BSs throughout).  For the
7-cell configuration the cluster is wrapped around on itself: distances are
measured modulo a set of lattice translations so that no cell sits at a
network edge.  Channels combine a log-distance path loss, log-normal
shadowing and unit-power Rayleigh small-scale fading.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

# substream labels: one independent RNG stream per (purpose, index) so that
# e.g. adding users never reshuffles previously drawn shadowing values
_STREAM_USERS = 0
_STREAM_SHADOWING = 1
_STREAM_FADING = 2

#: users may not be dropped closer than this to any BS (unbounded gain guard)
USER_EXCLUSION_KM = 0.01

#: Table-style background noise PSD; reproduction runs use the combined
#: out-of-cell interference + noise figure of -150 dBm/Hz instead
PURE_NOISE_PSD_DBM_HZ = -169.0


class ConfigurationError(ValueError):
    """Raised for invalid layout or simulation configuration."""


@dataclass
class SimulationParams:
    """Physical-layer and power-model constants.

    Defaults reproduce the reference evaluation setup (10 MHz bandwidth,
    20 W RRHs with 84/56 W active/sleep power, 100 Mbps backhaul links at
    50 W, 0 dB SNR gap, 4.3 dB rate-distortion gap).
    """

    bandwidth_hz: float = 10e6
    p_max_w: float = 20.0            # per-BS transmit power cap P_l
    p_active_w: float = 84.0
    p_sleep_w: float = 56.0
    eta: float = 2.8                 # transmit-power slope
    backhaul_capacity_mbps: float = 100.0
    backhaul_max_power_w: float = 50.0
    antenna_gain_db: float = 15.0
    noise_psd_dbm_hz: float = -150.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope: float = 37.6     # dB per decade of km
    shadowing_std_db: float = 8.0
    rayleigh_fading: bool = True
    gamma_m_db: float = 0.0          # SNR gap of the modulation scheme
    gamma_q_db: float = 4.3          # gap to the rate-distortion limit
    tau1: float = 1e-5               # BS-activation reweighting regularizer
    tau2: float = 1e-8               # cluster-membership reweighting regularizer
    tau3: float = 1e-5               # compression activation regularizer

    def __post_init__(self) -> None:
        for name in ("bandwidth_hz", "p_max_w", "p_active_w", "p_sleep_w", "eta",
                     "backhaul_capacity_mbps", "backhaul_max_power_w",
                     "tau1", "tau2", "tau3"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.p_sleep_w >= self.p_active_w:
            raise ConfigurationError("p_sleep_w must be below p_active_w")

    @property
    def bandwidth_mhz(self) -> float:
        return self.bandwidth_hz / 1e6

    @property
    def p_delta_w(self) -> float:
        """Activation power increment over sleep mode."""
        return self.p_active_w - self.p_sleep_w

    @property
    def noise_power_w(self) -> float:
        """Receiver noise power over the full bandwidth, in watts."""
        return 10.0 ** ((self.noise_psd_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz

    @property
    def gamma_m_linear(self) -> float:
        return 10.0 ** (self.gamma_m_db / 10.0)

    @property
    def gamma_q_linear(self) -> float:
        return 10.0 ** (self.gamma_q_db / 10.0)

    @property
    def rho_w_per_mbps(self) -> float:
        """Backhaul power per unit traffic, P_bh_max / C_l."""
        return self.backhaul_max_power_w / self.backhaul_capacity_mbps

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NetworkTopology:
    """Fixed BS layout: positions, cell membership and wrap translations."""

    bs_positions: np.ndarray          # (n_bs, 2) km
    cell_of_bs: np.ndarray            # (n_bs,) int
    inter_site_distance: float        # km, distance between cell centers
    wrap_vectors: np.ndarray          # (n_wrap, 2) km; row 0 is the zero offset
    cell_centers: np.ndarray = field(default=None)  # (n_cells, 2) km

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cell_centers.shape[0]

    def to_json(self) -> str:
        return json.dumps({
            "bs_positions": self.bs_positions.tolist(),
            "cell_of_bs": self.cell_of_bs.tolist(),
            "inter_site_distance": self.inter_site_distance,
            "wrap_vectors": self.wrap_vectors.tolist(),
            "cell_centers": self.cell_centers.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "NetworkTopology":
        d = json.loads(text)
        return cls(
            bs_positions=np.asarray(d["bs_positions"], dtype=float),
            cell_of_bs=np.asarray(d["cell_of_bs"], dtype=int),
            inter_site_distance=float(d["inter_site_distance"]),
            wrap_vectors=np.asarray(d["wrap_vectors"], dtype=float),
            cell_centers=np.asarray(d["cell_centers"], dtype=float),
        )


@dataclass
class ChannelRealization:
    """One random channel draw: complex gains from every BS to every user."""

    gains: np.ndarray                 # (L, K) complex, linear amplitude
    noise_power: float                # watts
    user_positions: np.ndarray        # (K, 2) km
    seed: int
    topology: NetworkTopology = None  # layout the draw was generated from

    @property
    def n_bs(self) -> int:
        return self.gains.shape[0]

    @property
    def n_users(self) -> int:
        return self.gains.shape[1]

    def to_json(self) -> str:
        g = self.gains
        return json.dumps({
            "gains": np.stack([g.real, g.imag], axis=-1).tolist(),
            "noise_power": self.noise_power,
            "user_positions": self.user_positions.tolist(),
            "seed": int(self.seed),
        })

    @classmethod
    def from_json(cls, text: str, topology: NetworkTopology = None) -> "ChannelRealization":
        d = json.loads(text)
        pairs = np.asarray(d["gains"], dtype=float)
        return cls(
            gains=pairs[..., 0] + 1j * pairs[..., 1],
            noise_power=float(d["noise_power"]),
            user_positions=np.asarray(d["user_positions"], dtype=float),
            seed=int(d["seed"]),
            topology=topology,
        )


def _rng(seed: int, purpose: int, index: int | None = None) -> np.random.Generator:
    key = (purpose,) if index is None else (purpose, index)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _rot60(v: np.ndarray) -> np.ndarray:
    c, s = 0.5, math.sqrt(3.0) / 2.0
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def build_hex_topology(num_cells: int, rrh_per_cell: int,
                       inter_site_distance: float) -> NetworkTopology:
    """Build the hexagonal cell layout with per-cell RRH placement.

    Cell centers sit on a hexagonal lattice with spacing `inter_site_distance`;
    for ``num_cells == 7`` the cluster is wrapped around with the six lattice
    translations of length ``sqrt(7) * inter_site_distance``.  Within each cell
    the RRHs are placed deterministically: the first at the cell center, the
    next three at radius ``isd / (2*sqrt(3))`` (half the cell circumradius) at
    bearings 90/210/330 degrees, and any further ones on the same ring rotated
    by 60 degrees.
    """
    if num_cells < 1 or rrh_per_cell < 1:
        raise ConfigurationError("num_cells and rrh_per_cell must be >= 1")
    if num_cells not in (1, 7):
        raise ConfigurationError("layout supports 1 cell (no wrap) or 7 cells (wrapped)")
    isd = float(inter_site_distance)
    if isd <= 0:
        raise ConfigurationError("inter_site_distance must be positive")

    a1 = np.array([isd, 0.0])
    a2 = np.array([isd / 2.0, isd * math.sqrt(3.0) / 2.0])
    if num_cells == 1:
        centers = np.zeros((1, 2))
        wraps = np.zeros((1, 2))
    else:
        centers = np.vstack([np.zeros(2), a1, a2, a2 - a1, -a1, -a2, a1 - a2])
        t = 2.0 * a1 + a2  # |t| = sqrt(7) * isd
        offs = [np.zeros(2)]
        for _ in range(6):
            offs.append(t.copy())
            t = _rot60(t)
        wraps = np.vstack(offs)

    ring = isd / (2.0 * math.sqrt(3.0))
    local = [np.zeros(2)]
    for i in range(1, rrh_per_cell):
        ang = math.radians(90.0 + 120.0 * (i - 1) + 60.0 * ((i - 1) // 3))
        local.append(ring * np.array([math.cos(ang), math.sin(ang)]))
    local = np.vstack(local)

    positions = np.vstack([c + local for c in centers])
    cell_idx = np.repeat(np.arange(len(centers)), rrh_per_cell)
    return NetworkTopology(
        bs_positions=positions,
        cell_of_bs=cell_idx,
        inter_site_distance=isd,
        wrap_vectors=wraps,
        cell_centers=centers,
    )


def wraparound_distance(topology: NetworkTopology, p1, p2) -> float:
    """Distance between two points, minimized over the wrap translations."""
    d = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    return float(np.min(np.linalg.norm(d + topology.wrap_vectors, axis=1)))


def _wrap_distances(topology: NetworkTopology, point: np.ndarray,
                    targets: np.ndarray) -> np.ndarray:
    """Wraparound distances from one point to an (n, 2) array of targets."""
    diff = targets[None, :, :] - point[None, None, :] + topology.wrap_vectors[:, None, :]
    return np.min(np.linalg.norm(diff, axis=2), axis=0)


def in_hexagon(topology: NetworkTopology, point, cell: int) -> bool:
    """Whether a point lies in the given cell's hexagon (wrap-aware)."""
    rel = np.asarray(point, dtype=float) - topology.cell_centers[cell]
    half = topology.inter_site_distance / 2.0
    best = np.inf
    for off in topology.wrap_vectors:
        p = rel + off
        s = math.sqrt(3.0) / 2.0
        proj = max(abs(p[0]), abs(0.5 * p[0] + s * p[1]), abs(-0.5 * p[0] + s * p[1]))
        best = min(best, proj)
    return best <= half * (1.0 + 1e-12)


def cell_of_point(topology: NetworkTopology, point) -> int:
    """Cell whose hexagon contains the point (nearest center under wrap)."""
    d = [wraparound_distance(topology, point, c) for c in topology.cell_centers]
    return int(np.argmin(d))


def drop_users(topology: NetworkTopology, users_per_cell: int,
               rng_seed: int) -> np.ndarray:
    """Drop users uniformly in each cell's hexagon, away from all RRHs.

    Positions are drawn by rejection sampling inside the hexagon, excluding a
    10 m disc around every BS.  Each cell uses its own RNG substream, so the
    layout for cell c does not depend on how many other cells exist.
    """
    if users_per_cell < 0:
        raise ConfigurationError("users_per_cell must be >= 0")
    out = []
    radius = topology.inter_site_distance / math.sqrt(3.0)
    for c in range(topology.n_cells):
        rng = _rng(rng_seed, _STREAM_USERS, c)
        center = topology.cell_centers[c]
        placed = 0
        while placed < users_per_cell:
            p = center + rng.uniform(-radius, radius, size=2)
            if not in_hexagon(topology, p, c):
                continue
            if np.min(_wrap_distances(topology, p, topology.bs_positions)) < USER_EXCLUSION_KM:
                continue
            out.append(p)
            placed += 1
    return np.asarray(out, dtype=float).reshape(len(out), 2)


def draw_channel(topology: NetworkTopology, users: np.ndarray,
                 params: SimulationParams, rng_seed: int) -> ChannelRealization:
    """Draw one channel realization for the given user locations.

    Per (BS, user) pair the amplitude gain is

        g = f * 10**((-PL(d) - X + G_ant) / 20)

    with PL the log-distance path loss in dB, X ~ N(0, shadowing_std^2) dB and
    f a zero-mean unit-power complex Gaussian (Rayleigh) factor.  Shadowing
    and fading use per-user substreams, so adding more users leaves existing
    columns untouched.
    """
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    L, K = topology.n_bs, users.shape[0]
    gains = np.zeros((L, K), dtype=complex)
    for k in range(K):
        d = _wrap_distances(topology, users[k], topology.bs_positions)
        if np.any(d < USER_EXCLUSION_KM):
            raise ConfigurationError(
                f"user {k} is inside the {USER_EXCLUSION_KM * 1000:.0f} m BS exclusion disc")
        pl_db = params.pathloss_intercept_db + params.pathloss_slope * np.log10(d)
        if params.shadowing_std_db > 0:
            shadow = _rng(rng_seed, _STREAM_SHADOWING, k).normal(
                0.0, params.shadowing_std_db, size=L)
        else:
            shadow = np.zeros(L)
        if params.rayleigh_fading:
            rf = _rng(rng_seed, _STREAM_FADING, k)
            fading = (rf.standard_normal(L) + 1j * rf.standard_normal(L)) / math.sqrt(2.0)
        else:
            fading = np.ones(L, dtype=complex)
        amp_db = -pl_db - shadow + params.antenna_gain_db
        gains[:, k] = fading * 10.0 ** (amp_db / 20.0)
    return ChannelRealization(
        gains=gains,
        noise_power=params.noise_power_w,
        user_positions=users,
        seed=int(rng_seed),
        topology=topology,
    )


def candidate_cluster(channel: ChannelRealization, user: int, L_c: int) -> np.ndarray:
    """Indices of the L_c strongest BSs for a user, ties to the lower index."""
    mags = np.abs(channel.gains[:, user])
    L = mags.shape[0]
    if not 1 <= L_c <= L:
        raise ConfigurationError(f"L_c must be in [1, {L}]")
    order = np.lexsort((np.arange(L), -mags))
    return np.sort(order[:L_c])


def candidate_mask(channel: ChannelRealization, L_c: int) -> np.ndarray:
    """Boolean (L, K) mask of candidate serving BSs for every user."""
    L, K = channel.gains.shape
    mask = np.zeros((L, K), dtype=bool)
    for k in range(K):
        mask[candidate_cluster(channel, k, min(L_c, L)), k] = True
    return mask
