"""Convex inner subproblems: weighted power minimization and the
quadratic-plus-log compression subproblem.

Both problems share the same constraint skeleton -- per-user SINR targets
reformulated as second-order cone constraints after phase rotation,

    || [ interference terms ; quantization terms ; sigma ] ||
        <=  Re(h_k^H w_k) / sqrt(gamma_k),

plus per-BS transmit power caps.  The compression variant adds one
quantization-noise standard deviation q_l per BS, which enters the SINR
denominators, the power caps, and the objective through a -log q_l term
(handled with one exponential cone per BS).

The programs are assembled directly in sparse conic form and handed to the
Clarabel interior-point solver.  Channel gains are normalized by the noise
standard deviation before assembly (so sigma = 1 internally) to condition
the problem; beamformer and quantization variables stay in physical units.
Between reweighting iterations only the (diagonal) quadratic objective
changes, so a prepared problem can be re-solved cheaply via data updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import clarabel

#: declared infeasible when the phase-1 minimax constraint violation
#: (normalized units) exceeds this
FEAS_VIOLATION_TOL = 1e-6


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class QosInstance:
    """One SINR-constrained beamforming instance."""

    gains: np.ndarray          # (L, K) complex channel amplitudes
    noise_power: float         # watts
    sinr_targets: np.ndarray   # (K,) linear SINR targets
    power_caps: np.ndarray     # (L,) watts
    allowed: np.ndarray        # (L, K) bool; w_lk forced to 0 outside

    def __post_init__(self) -> None:
        self.gains = np.asarray(self.gains, dtype=complex)
        L, K = self.gains.shape
        self.sinr_targets = np.asarray(self.sinr_targets, dtype=float).reshape(K)
        self.power_caps = np.asarray(self.power_caps, dtype=float).reshape(L)
        self.allowed = np.asarray(self.allowed, dtype=bool).reshape(L, K)
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if np.any(self.power_caps <= 0):
            raise ValueError("power caps must be positive")
        if np.any(self.sinr_targets < 0):
            raise ValueError("SINR targets must be nonnegative")
        if np.any((self.allowed.sum(axis=0) == 0) & (self.sinr_targets > 0)):
            raise ValueError("every user with a positive target needs an allowed BS")

    @property
    def shape(self) -> tuple[int, int]:
        return self.gains.shape


@dataclass
class SolverSolution:
    """Result of one convex solve."""

    beamformers: np.ndarray    # (L, K) complex; exact zeros outside the mask
    quant_noise: np.ndarray    # (L,) nonnegative; zeros for data-sharing
    status: SolveStatus
    objective: float
    achieved_sinr: np.ndarray  # (K,)


def compute_sinr(gains: np.ndarray, beamformers: np.ndarray,
                 quant_noise: np.ndarray | None, noise_power: float) -> np.ndarray:
    """Per-user SINR for given beamformers and quantization noise levels."""
    g = np.asarray(gains, dtype=complex)
    w = np.asarray(beamformers, dtype=complex)
    L, K = g.shape
    cross = g.conj().T @ w             # cross[k, j] = h_k^H w_j
    sig = np.abs(np.diag(cross)) ** 2
    interf = np.sum(np.abs(cross) ** 2, axis=1) - sig
    qn = np.zeros(K)
    if quant_noise is not None:
        q = np.asarray(quant_noise, dtype=float)
        qn = (np.abs(g.T) ** 2) @ (q ** 2)
    return sig / (interf + qn + noise_power)


def _settings(tol_gap: float = 1e-8, tol_feas: float = 1e-8) -> clarabel.DefaultSettings:
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = tol_gap
    s.tol_gap_rel = tol_gap
    s.tol_feas = tol_feas
    s.presolve_enable = False  # required for in-place data updates
    return s


_OK = (clarabel.SolverStatus.Solved, clarabel.SolverStatus.AlmostSolved)
_INFEAS = (clarabel.SolverStatus.PrimalInfeasible,
           clarabel.SolverStatus.AlmostPrimalInfeasible)


class _CooBuilder:
    """Row-wise COO accumulator for the conic constraint matrix."""

    def __init__(self) -> None:
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.b: list[float] = []
        self.n_rows = 0

    def add_row(self, cols, vals, rhs: float = 0.0) -> None:
        r = self.n_rows
        self.rows.extend([r] * len(cols))
        self.cols.extend(cols)
        self.vals.extend(vals)
        self.b.append(rhs)
        self.n_rows += 1

    def matrix(self, n_vars: int) -> tuple[sp.csc_matrix, np.ndarray]:
        A = sp.coo_matrix((self.vals, (self.rows, self.cols)),
                          shape=(self.n_rows, n_vars)).tocsc()
        return A, np.asarray(self.b, dtype=float)


class _ProblemBase:
    """Shared constraint assembly for both subproblem shapes."""

    def __init__(self, inst: QosInstance, with_quantization: bool,
                 tol_gap: float = 1e-8, tol_feas: float = 1e-8) -> None:
        self.inst = inst
        self.with_q = with_quantization
        self.tol_gap = tol_gap
        self.tol_feas = tol_feas
        L, K = inst.shape
        self.L, self.K = L, K
        sigma = math.sqrt(inst.noise_power)
        self.gn = inst.gains / sigma  # normalized: unit noise power
        self.rows = [np.where(inst.allowed[:, k])[0] for k in range(K)]
        self.nk = [len(r) for r in self.rows]
        self.off = np.concatenate([[0], np.cumsum([2 * n for n in self.nk])])
        self.n_w = int(self.off[-1])
        self.n_vars = self.n_w + (2 * L if with_quantization else 0)
        self.off_q = self.n_w
        self.off_t = self.n_w + L
        self._assemble()

    def _re(self, k: int) -> np.ndarray:
        return np.arange(self.off[k], self.off[k] + self.nk[k])

    def _im(self, k: int) -> np.ndarray:
        return np.arange(self.off[k] + self.nk[k], self.off[k] + 2 * self.nk[k])

    def _assemble(self) -> None:
        inst, L, K = self.inst, self.L, self.K
        bld = _CooBuilder()
        cones: list = []
        self.cone_meta: list[dict] = []

        # SINR cones, one per user with a positive target
        for k in range(K):
            gam = inst.sinr_targets[k]
            if gam <= 0:
                continue
            start = bld.n_rows
            gk = self.gn[self.rows[k], k]
            inv = 1.0 / math.sqrt(gam)
            bld.add_row(np.concatenate([self._re(k), self._im(k)]),
                        np.concatenate([-gk.real * inv, -gk.imag * inv]))
            for j in range(K):
                if j == k or self.nk[j] == 0:
                    continue
                gj = self.gn[self.rows[j], k]
                bld.add_row(np.concatenate([self._re(j), self._im(j)]),
                            np.concatenate([-gj.real, -gj.imag]))
                bld.add_row(np.concatenate([self._re(j), self._im(j)]),
                            np.concatenate([gj.imag, -gj.real]))
            if self.with_q:
                mags = np.abs(self.gn[:, k])
                for l in range(L):
                    bld.add_row([self.off_q + l], [-mags[l]])
            bld.add_row([], [], rhs=1.0)  # normalized noise term
            dim = bld.n_rows - start
            cones.append(clarabel.SecondOrderConeT(dim))
            self.cone_meta.append({"type": "soc", "role": "sinr", "user": k, "dim": dim})

        # per-BS power cap cones
        for l in range(L):
            entries = [(j, int(np.where(self.rows[j] == l)[0][0]))
                       for j in range(K) if inst.allowed[l, j]]
            if not entries and not self.with_q:
                continue
            start = bld.n_rows
            bld.add_row([], [], rhs=math.sqrt(inst.power_caps[l]))
            for j, p in entries:
                bld.add_row([self.off[j] + p], [-1.0])
                bld.add_row([self.off[j] + self.nk[j] + p], [-1.0])
            if self.with_q:
                bld.add_row([self.off_q + l], [-1.0])
            dim = bld.n_rows - start
            cones.append(clarabel.SecondOrderConeT(dim))
            self.cone_meta.append({"type": "soc", "role": "power_cap", "bs": l, "dim": dim})

        # exponential cones carrying t_l >= -ln(q_l)
        if self.with_q:
            for l in range(L):
                bld.add_row([self.off_t + l], [1.0])
                bld.add_row([], [], rhs=1.0)
                bld.add_row([self.off_q + l], [-1.0])
                cones.append(clarabel.ExponentialConeT())
                self.cone_meta.append({"type": "exp", "role": "log_q", "bs": l, "dim": 3})

        self.A, self.b = bld.matrix(self.n_vars)
        self.cones = cones
        self._solver = None
        self._last_P = None

    def _solve_conic(self, P_diag: np.ndarray, q_lin: np.ndarray):
        P = sp.diags(P_diag).tocsc()
        if self._solver is None:
            self._solver = clarabel.DefaultSolver(
                P, q_lin, self.A, self.b, self.cones,
                _settings(self.tol_gap, self.tol_feas))
        else:
            self._solver.update(P=P, q=q_lin)
        sol = self._solver.solve()
        if sol.status in _OK or sol.status in _INFEAS:
            return sol
        # reweighting can push the quadratic coefficients over 7 orders of
        # magnitude; recover from factorization trouble with a freshly
        # equilibrated solver, then with the loosest in-contract tolerances
        for tol_gap in (g for g in (self.tol_gap, 1e-8, 1e-7) if g >= self.tol_gap):
            retry = clarabel.DefaultSolver(P, q_lin, self.A, self.b, self.cones,
                                           _settings(tol_gap, self.tol_feas))
            sol = retry.solve()
            if sol.status in _OK or sol.status in _INFEAS:
                self._solver = None  # stale KKT state; rebuild on next call
                return sol
        self._solver = None
        return sol

    def _extract_w(self, x: np.ndarray) -> np.ndarray:
        w = np.zeros((self.L, self.K), dtype=complex)
        for k in range(self.K):
            w[self.rows[k], k] = x[self._re(k)] + 1j * x[self._im(k)]
        # rotate each user's column so the useful term h_k^H w_k is real >= 0
        for k in range(self.K):
            z = np.vdot(self.gn[:, k], w[:, k])
            if abs(z) > 0:
                w[:, k] *= np.exp(-1j * np.angle(z))
        return w

    def debug_dict(self, P_diag: np.ndarray, q_lin: np.ndarray) -> dict:
        """Conic problem in a plain-JSON layout for external cross-checks.

        Schema: {"n_vars", "objective": {"quadratic_diag", "linear"},
        "cones": [{"type", "role", "dim", ...}], "A": {"shape", "rows",
        "cols", "vals"}, "b"}; the cone rows follow the order of "cones".
        """
        coo = self.A.tocoo()
        return {
            "n_vars": self.n_vars,
            "objective": {"quadratic_diag": P_diag.tolist(),
                          "linear": q_lin.tolist()},
            "cones": self.cone_meta,
            "A": {"shape": list(coo.shape), "rows": coo.row.tolist(),
                  "cols": coo.col.tolist(), "vals": coo.data.tolist()},
            "b": self.b.tolist(),
        }


class WeightedPowerMinProblem(_ProblemBase):
    """min sum alpha_lk |w_lk|^2 subject to SINR targets and power caps.

    Prepared once per instance; `solve` may be called repeatedly with new
    weights (only the quadratic diagonal changes).
    """

    def __init__(self, inst: QosInstance, tol_gap: float = 1e-8,
                 tol_feas: float = 1e-8) -> None:
        super().__init__(inst, with_quantization=False,
                         tol_gap=tol_gap, tol_feas=tol_feas)

    def solve(self, weights: np.ndarray) -> SolverSolution:
        alpha = np.asarray(weights, dtype=float)
        P_diag = np.empty(self.n_vars)
        for k in range(self.K):
            a = alpha[self.rows[k], k]
            if np.any(a <= 0):
                raise ValueError("weights must be positive on allowed entries")
            P_diag[self._re(k)] = 2.0 * a
            P_diag[self._im(k)] = 2.0 * a
        sol = self._solve_conic(P_diag, np.zeros(self.n_vars))
        status = _map_status(sol.status)
        if status is not SolveStatus.OPTIMAL:
            status = _classify_failure(self.inst, status)
            return _failed_solution(self.inst, status)
        w = self._extract_w(np.asarray(sol.x))
        obj = float(np.sum(alpha[self.inst.allowed] * np.abs(w[self.inst.allowed]) ** 2))
        return SolverSolution(
            beamformers=w,
            quant_noise=np.zeros(self.L),
            status=SolveStatus.OPTIMAL,
            objective=obj,
            achieved_sinr=compute_sinr(self.inst.gains, w, None, self.inst.noise_power),
        )


class CompressionSubproblem(_ProblemBase):
    """min sum phi_l |w_lk|^2 + sum (psi_l q_l^2 - 2 rho_l log2 q_l)
    subject to quantization-aware SINR targets and power caps."""

    def __init__(self, inst: QosInstance, tol_gap: float = 1e-8,
                 tol_feas: float = 1e-8) -> None:
        super().__init__(inst, with_quantization=True,
                         tol_gap=tol_gap, tol_feas=tol_feas)

    def solve(self, phi: np.ndarray, psi: np.ndarray,
              rho: np.ndarray) -> SolverSolution:
        phi = np.asarray(phi, dtype=float).reshape(self.L)
        psi = np.asarray(psi, dtype=float).reshape(self.L)
        rho = np.asarray(rho, dtype=float).reshape(self.L)
        if np.any(phi <= 0) or np.any(psi <= 0) or np.any(rho <= 0):
            raise ValueError("phi, psi and rho must be positive")
        P_diag = np.zeros(self.n_vars)
        for k in range(self.K):
            f = phi[self.rows[k]]
            P_diag[self._re(k)] = 2.0 * f
            P_diag[self._im(k)] = 2.0 * f
        P_diag[self.off_q:self.off_q + self.L] = 2.0 * psi
        q_lin = np.zeros(self.n_vars)
        # -2 rho log2 q == (2 rho / ln 2) * t with t >= -ln q
        q_lin[self.off_t:self.off_t + self.L] = 2.0 * rho / math.log(2.0)
        sol = self._solve_conic(P_diag, q_lin)
        status = _map_status(sol.status)
        if status is not SolveStatus.OPTIMAL:
            status = _classify_failure(self.inst, status)
            return _failed_solution(self.inst, status)
        x = np.asarray(sol.x)
        w = self._extract_w(x)
        q = np.maximum(x[self.off_q:self.off_q + self.L], 1e-300)
        obj = float(np.sum(phi[:, None] * np.abs(w) ** 2)
                    + np.sum(psi * q ** 2)
                    - np.sum(2.0 * rho * np.log2(q)))
        return SolverSolution(
            beamformers=w,
            quant_noise=q,
            status=SolveStatus.OPTIMAL,
            objective=obj,
            achieved_sinr=compute_sinr(self.inst.gains, w, q, self.inst.noise_power),
        )


def _map_status(st) -> SolveStatus:
    if st in _OK:
        return SolveStatus.OPTIMAL
    if st in _INFEAS:
        return SolveStatus.INFEASIBLE
    return SolveStatus.NUMERICAL_FAILURE


def _classify_failure(inst: QosInstance, status: SolveStatus) -> SolveStatus:
    """Distinguish genuine infeasibility from numerical trouble via phase 1."""
    violation, _ = check_feasibility(inst)
    if violation is None:
        return SolveStatus.NUMERICAL_FAILURE
    if violation > FEAS_VIOLATION_TOL:
        return SolveStatus.INFEASIBLE
    return SolveStatus.NUMERICAL_FAILURE


def _failed_solution(inst: QosInstance, status: SolveStatus) -> SolverSolution:
    L, K = inst.shape
    return SolverSolution(
        beamformers=np.zeros((L, K), dtype=complex),
        quant_noise=np.zeros(L),
        status=status,
        objective=math.inf,
        achieved_sinr=np.zeros(K),
    )


def check_feasibility(inst: QosInstance) -> tuple[float | None, np.ndarray | None]:
    """Phase-1 program: minimize the worst SINR-cone violation.

    Returns (min-max violation in normalized units, beamformers attaining
    it), or (None, None) if the phase-1 solve itself fails numerically.
    Power caps are enforced exactly; a violation <= FEAS_VIOLATION_TOL
    means the instance is feasible.
    """
    base = _ProblemBase(inst, with_quantization=False)
    L, K = inst.shape
    if not any(m["role"] == "sinr" for m in base.cone_meta):
        return 0.0, np.zeros((L, K), dtype=complex)
    n = base.n_vars + 1
    iv = base.n_vars  # the violation slack variable
    bld = _CooBuilder()
    cones: list = []
    for meta, block in _iter_cone_rows(base):
        start_row = bld.n_rows
        for r, (cols, vals, rhs) in enumerate(block):
            if meta["role"] == "sinr" and r == 0:
                cols = np.concatenate([cols, [iv]])
                vals = np.concatenate([vals, [-1.0]])
            bld.add_row(cols, vals, rhs)
        cones.append(clarabel.SecondOrderConeT(bld.n_rows - start_row))
    A, b = bld.matrix(n)
    q = np.zeros(n)
    q[iv] = 1.0
    P = sp.diags(np.zeros(n)).tocsc()
    solver = clarabel.DefaultSolver(P, q, A, b, cones, _settings())
    sol = solver.solve()
    if sol.status not in _OK:
        return None, None
    x = np.asarray(sol.x)
    return float(x[iv]), base._extract_w(x[:base.n_vars])


def _iter_cone_rows(base: _ProblemBase):
    """Yield (meta, [(cols, vals, rhs), ...]) per cone of a prepared problem."""
    A = base.A.tocsr()
    row = 0
    for meta in base.cone_meta:
        block = []
        for r in range(row, row + meta["dim"]):
            sl = slice(A.indptr[r], A.indptr[r + 1])
            block.append((A.indices[sl].copy(), A.data[sl].copy(), base.b[r]))
        row += meta["dim"]
        yield meta, block


def solve_weighted_power_min(inst: QosInstance, weights: np.ndarray) -> SolverSolution:
    """One-shot weighted transmit power minimization (high accuracy)."""
    return WeightedPowerMinProblem(inst, tol_gap=1e-10, tol_feas=1e-9).solve(weights)


def solve_compression_subproblem(inst: QosInstance, phi: np.ndarray,
                                 psi: np.ndarray, rho: np.ndarray) -> SolverSolution:
    """One-shot compression subproblem solve (high accuracy)."""
    return CompressionSubproblem(inst, tol_gap=1e-10, tol_feas=1e-9).solve(phi, psi, rho)
