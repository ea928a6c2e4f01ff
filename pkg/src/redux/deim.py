"""Discrete empirical interpolation of the nonlinear residual.

Offline: a collateral basis ``U`` from non-equilibrium residual iterates and
greedy magic-point selection. Online: a reduced fixed-point solver that only
evaluates the residual rows at the magic points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConfigurationError,
    IllConditioningError,
    NonConvergenceError,
    ParameterError,
    RankError,
    TrainingError,
)
from .fem import EPS_MAX, MAX_ITER, CostCounters, SolveReport, fe_solve
from .galerkin_rb import ReducedState, dense_solve
from .mesh import Mesh
from .model import ParameterVector
from .parallel import parallel_map
from .pod import ReducedBasis
from .sampling import RowEvaluator, elements_touching

COND_MAX = 1e12
# training columns at or below this Euclidean norm carry no information
ZERO_RESIDUAL = 1e-12
RANK_TOL = 1e-14


def training_matrix(residuals) -> np.ndarray:
    """Stack residual iterates (a flat or per-parameter nested list) as columns,
    dropping the ones that vanish."""
    cols = []
    for item in residuals:
        if isinstance(item, np.ndarray) and item.ndim == 1:
            cols.append(item)
        else:
            cols.extend(item)
    cols = [np.asarray(c, dtype=float) for c in cols if np.linalg.norm(c) > ZERO_RESIDUAL]
    if not cols:
        raise TrainingError("residual training set is empty (every solve converged at its start)")
    return np.column_stack(cols)


def collect_training_residuals(
    mesh: Mesh, params, eps_max: float = EPS_MAX, threads: int | None = None
) -> np.ndarray:
    """Residuals at the non-converged iterates of full FE solves, one column each."""
    params = [ParameterVector(*p) for p in params]
    for p in params:
        p.check_domain()

    def run(p):
        _, rep = fe_solve(mesh, p, eps_max=eps_max, record_residuals=True)
        return rep.residuals

    return training_matrix(parallel_map(run, params, threads))


@dataclass
class CollateralBasis:
    U: np.ndarray
    singular_values: np.ndarray
    q_hat: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.U.shape[1]


def collateral_basis(Y: np.ndarray, M: int | None = None, energy: float | None = None) -> CollateralBasis:
    """Euclidean POD of the training residuals.

    ``M`` fixes the number of modes; alternatively ``energy`` keeps the smallest
    number capturing ``1 - energy`` of the squared singular-value sum.
    """
    Y = np.asarray(Y, dtype=float)
    if (M is None) == (energy is None):
        raise ParameterError("give exactly one of M or energy")
    U, sv, _ = np.linalg.svd(Y, full_matrices=False)
    if energy is not None:
        if not 0 < energy < 1:
            raise ParameterError("energy must lie in (0, 1)")
        cum = np.cumsum(sv**2) / np.sum(sv**2)
        M = int(np.searchsorted(cum, 1 - energy) + 1)
    if not 1 <= M <= len(sv):
        raise RankError(f"M={M} exceeds the {len(sv)} available training directions")
    if sv[0] == 0 or sv[M - 1] / sv[0] < RANK_TOL:
        raise RankError(f"M={M} exceeds the numerical rank of the residual training set")
    return CollateralBasis(U[:, :M].copy(), sv[:M].copy())


def greedy_indices(U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Greedy interpolation indices of the columns of ``U`` and the normalized
    interpolation residuals ``q_hat`` (one column per step)."""
    U = np.asarray(U, dtype=float)
    n, M = U.shape
    if M > n:
        raise RankError(f"cannot select {M} points from {n} rows")
    idx = np.zeros(M, dtype=np.int64)
    q_hat = np.zeros_like(U)
    for l in range(M):
        u = U[:, l]
        if l == 0:
            q = u.copy()
        else:
            c = np.linalg.solve(U[idx[:l], :l], u[idx[:l]])
            q = u - U[:, :l] @ c
        i = int(np.argmax(np.abs(q)))
        if q[i] == 0.0:
            raise IllConditioningError(f"step l={l + 1}: column lies in the span of the previous ones")
        idx[l] = i
        q_hat[:, l] = q / q[i]
    return idx, q_hat


def _check_conditioning(U: np.ndarray, idx: np.ndarray) -> None:
    if np.linalg.cond(U[idx]) <= COND_MAX:
        return
    for l in range(1, len(idx) + 1):
        if np.linalg.cond(U[idx[:l], :l]) > COND_MAX:
            raise IllConditioningError(f"step l={l}: P^T U condition number exceeds {COND_MAX:g}")
    raise IllConditioningError(f"P^T U condition number exceeds {COND_MAX:g}")


@dataclass
class MagicPointSet:
    """Magic rows ``I`` (free-DOF indices) of a collateral basis ``U``, the
    reduced operator ``X = V^T U (P^T U)^{-1}`` and the evaluation stencil."""

    I: np.ndarray
    U: np.ndarray
    X: np.ndarray | None = None
    stencil_elements: np.ndarray | None = None
    stencil_nodes: np.ndarray | None = None
    q_hat: np.ndarray | None = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return len(self.I)

    def selection_matrix(self) -> np.ndarray:
        P = np.zeros((self.U.shape[0], self.M))
        P[self.I, np.arange(self.M)] = 1.0
        return P

    def interpolation_matrix(self) -> np.ndarray:
        """``U (P^T U)^{-1}``."""
        return sla.solve(self.U[self.I].T, self.U.T).T

    def attach(self, V: np.ndarray, mesh: Mesh) -> "MagicPointSet":
        """Fill in ``X`` for the trial/test basis ``V`` and the stencil on ``mesh``."""
        self.X = sla.solve(self.U[self.I].T, (V.T @ self.U).T).T
        self.stencil_elements = elements_touching(mesh, self.I)
        self.stencil_nodes = np.unique(mesh.elements[self.stencil_elements])
        return self


def deim_offline(
    U, V: np.ndarray | None = None, mesh: Mesh | None = None
) -> MagicPointSet:
    """Greedy magic-point selection for the collateral basis ``U``.

    With ``V`` and ``mesh`` the online operator and the stencil are attached.
    """
    if isinstance(U, CollateralBasis):
        U = U.U
    U = np.asarray(U, dtype=float)
    idx, q_hat = greedy_indices(U)
    _check_conditioning(U, idx)
    mp = MagicPointSet(I=idx, U=U, q_hat=q_hat)
    if V is not None:
        if mesh is None:
            raise ParameterError("a mesh is needed to build the stencil")
        mp.attach(np.asarray(V, dtype=float), mesh)
    return mp


def magic_point_set(U, I, V: np.ndarray, mesh: Mesh) -> MagicPointSet:
    """Configuration from a prescribed collateral basis and index set."""
    U = np.asarray(U, dtype=float)
    I = np.asarray(I, dtype=np.int64)
    if len(np.unique(I)) != len(I):
        raise ParameterError("magic indices must be distinct")
    _check_conditioning(U, I)
    return MagicPointSet(I=I, U=U).attach(np.asarray(V, dtype=float), mesh)


def deim_interpolate(mp: MagicPointSet, r_full) -> np.ndarray:
    """``U (P^T U)^{-1} P^T r``."""
    r_full = np.asarray(r_full, dtype=float)
    if r_full.shape[0] != mp.U.shape[0]:
        raise ParameterError(f"residual has {r_full.shape[0]} rows, basis {mp.U.shape[0]}")
    return mp.U @ np.linalg.solve(mp.U[mp.I], r_full[mp.I])


def stencil_size(mp: MagicPointSet, mesh: Mesh) -> tuple[int, int]:
    """``(M, M_bar)`` with ``M_bar`` the nodes of all elements touching a magic row."""
    nodes = mp.stencil_nodes
    if nodes is None:
        nodes = np.unique(mesh.elements[elements_touching(mesh, mp.I)])
    return mp.M, int(len(nodes))


def deim_iteration_cost(M: int, M_bar: int, m: int, n_points: int) -> CostCounters:
    return CostCounters(
        c_reloc=m + M_bar * m + 2 * 8 * n_points,
        c_const=n_points,
        c_rhs=M * M_bar,
        c_jac=M * M_bar * m,
    )


def row_restricted_solve(
    ev: RowEvaluator,
    X: np.ndarray,
    p: ParameterVector,
    basis: ReducedBasis,
    eps_max: float,
    max_iter: int,
    cost: CostCounters,
    label: str,
) -> ReducedState:
    """Fixed-point loop on ``X (J V)_rows dgamma = -X r_rows`` with nodal
    temperatures tracked on the evaluator's nodes only."""
    m = basis.m
    counters = CostCounters()
    report = SolveReport(0, float("inf"), False, counters)
    gamma = np.zeros(m)
    iterates = [gamma.copy()]
    u = ev.lift(p)
    for it in range(1, max_iter + 1):
        r, JV = ev.evaluate(u, p)
        delta = dense_solve(X @ JV, -(X @ r), f"{label} reduced Jacobian")
        counters += cost
        counters.c_sol += m**3
        gamma = gamma + delta
        u = u + ev.V_nodes @ delta
        iterates.append(gamma.copy())
        norm = float(np.linalg.norm(delta))
        report.increment_norms.append(norm)
        report.history.append(CostCounters(**counters.as_dict()))
        report.iterations, report.final_increment_norm = it, norm
        if norm < eps_max:
            report.converged = True
            return ReducedState(gamma, p, report, basis, iterates)
    raise NonConvergenceError(
        f"{label} solve did not converge in {max_iter} iterations for p={list(p)}",
        last_increment_norm=report.final_increment_norm,
        iterations=max_iter,
    )


def deim_evaluator(basis: ReducedBasis, mp: MagicPointSet) -> tuple[RowEvaluator, np.ndarray]:
    """Stencil evaluator and ``X`` for ``basis``, cached on the point set."""
    cache = mp.__dict__.setdefault("_evaluators", {})
    key = id(basis)
    if key not in cache:
        if mp.stencil_elements is None or mp.X is None or mp.X.shape != (basis.m, mp.M):
            mp.attach(basis.V, basis.mesh)
        X = sla.solve(mp.U[mp.I].T, (basis.V.T @ mp.U).T).T
        cache[key] = (basis, RowEvaluator(basis.mesh, basis.V, mp.I, mp.stencil_elements), X)
    return cache[key][1], cache[key][2]


def deim_solve(
    basis: ReducedBasis,
    mp: MagicPointSet,
    p: ParameterVector,
    eps_max: float = EPS_MAX,
    max_iter: int = MAX_ITER,
) -> ReducedState:
    """Reduced fixed-point iteration ``X J_I V dgamma = -X r_I`` from ``gamma = 0``."""
    if mp.M < basis.m:
        raise ConfigurationError(f"M={mp.M} magic points cannot close a system with m={basis.m} modes")
    p = ParameterVector(*p).check_physical()
    ev, X = deim_evaluator(basis, mp)
    cost = deim_iteration_cost(mp.M, ev.n_bar, basis.m, ev.n_points)
    return row_restricted_solve(ev, X, p, basis, eps_max, max_iter, cost, "DEIM")
