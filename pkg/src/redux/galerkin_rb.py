"""Galerkin reduced-basis online solver with direct reduced assembly, and the
a-posteriori diagnostics eta (error vs. best approximation) and delta
(relative error)."""

from __future__ import annotations

import warnings

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import LinearAlgebraError, NonConvergenceError
from .fem import EPS_MAX, MAX_ITER, CostCounters, SolveReport, l2_norm, mass_matrix, temperature
from .mesh import quadrature_table
from .model import ParameterVector, conductivity
from .pod import ReducedBasis

# projection errors below this are treated as exact representation
EXACT_TOL = 1e-14


@dataclass
class ReducedState:
    gamma: np.ndarray
    p: ParameterVector
    report: SolveReport
    basis: ReducedBasis
    iterates: list = field(default_factory=list)

    @property
    def w(self) -> np.ndarray:
        """Reconstructed fluctuation on the free DOFs."""
        return self.basis.V @ self.gamma

    def temperature(self) -> np.ndarray:
        return temperature(self.basis.mesh, self.w, self.p)


def dense_solve(A: np.ndarray, b: np.ndarray, what: str = "reduced system") -> np.ndarray:
    try:
        with warnings.catch_warnings():
            # exact singularity is detected and reported below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise LinearAlgebraError(f"{what}: {exc}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise LinearAlgebraError(f"{what} is singular")
    x = sla.lu_solve(lu, b)
    if not np.all(np.isfinite(x)):
        raise LinearAlgebraError(f"{what} is singular")
    return x


def reduced_system(basis: ReducedBasis, gamma: np.ndarray, p: ParameterVector):
    """Reduced residual ``V^T r`` and Jacobian ``V^T J V`` by direct per-point assembly."""
    qt = quadrature_table(basis.mesh)
    u = basis.T @ gamma + qt.points @ p.gradient
    g = basis.Gr @ gamma + p.gradient
    s = np.sqrt(qt.weights * conductivity(u, p))
    B = (basis.Gr * s[:, None, None]).reshape(-1, basis.m)
    r = B.T @ (g * s[:, None]).ravel()
    J = B.T @ B
    return r, J


def rb_iteration_cost(n_gp: int, m: int) -> CostCounters:
    return CostCounters(
        c_reloc=3 * n_gp * m, c_const=n_gp, c_rhs=2 * m * n_gp, c_jac=(4 * m + m * m) * n_gp,
    )


def rb_solve(
    basis: ReducedBasis,
    p: ParameterVector,
    eps_max: float = EPS_MAX,
    max_iter: int = MAX_ITER,
) -> ReducedState:
    """Fixed-point iteration on the Galerkin-projected system, starting at ``gamma = 0``."""
    p = ParameterVector(*p).check_physical()
    n_gp = quadrature_table(basis.mesh).n_gp
    counters = CostCounters()
    report = SolveReport(0, float("inf"), False, counters)
    gamma = np.zeros(basis.m)
    iterates = [gamma.copy()]
    for it in range(1, max_iter + 1):
        r, J = reduced_system(basis, gamma, p)
        counters += rb_iteration_cost(n_gp, basis.m)
        delta = dense_solve(J, -r, "reduced Jacobian (basis deficiency?)")
        counters.c_sol += basis.m**3
        gamma = gamma + delta
        iterates.append(gamma.copy())
        norm = float(np.linalg.norm(delta))
        report.increment_norms.append(norm)
        report.history.append(CostCounters(**counters.as_dict()))
        report.iterations, report.final_increment_norm = it, norm
        if norm < eps_max:
            report.converged = True
            return ReducedState(gamma, p, report, basis, iterates)
    raise NonConvergenceError(
        f"RB solve did not converge in {max_iter} iterations for p={list(p)}",
        last_increment_norm=report.final_increment_norm,
        iterations=max_iter,
    )


def eta(basis: ReducedBasis, state_or_w, w_fe: np.ndarray) -> float | None:
    """Ratio of the reduced error to the L2 best-approximation error.

    Returns ``None`` when the truth is exactly representable in the basis.
    """
    mesh = basis.mesh
    w_rb = state_or_w.w if isinstance(state_or_w, ReducedState) else np.asarray(state_or_w)
    w_fe = np.asarray(w_fe, dtype=float)
    best = w_fe - basis.V @ (basis.V.T @ (mass_matrix(mesh) @ w_fe))
    denom = l2_norm(mesh, best)
    if denom < EXACT_TOL:
        return None
    return l2_norm(mesh, w_rb - w_fe) / denom


def rel_error(mesh, approx_u, truth_u) -> float | None:
    """Relative L2 error of nodal temperature fields.

    A vanishing truth gives 0.0 if the approximation vanishes too, else ``None``.
    """
    approx_u = np.asarray(approx_u, dtype=float)
    truth_u = np.asarray(truth_u, dtype=float)
    denom = l2_norm(mesh, truth_u)
    num = l2_norm(mesh, approx_u - truth_u)
    if denom == 0.0:
        return 0.0 if num == 0.0 else None
    return num / denom


def aggregate(values) -> dict:
    """min/mean/max over the finite entries; ``None`` sentinels are skipped and
    infinite values (failed solves) are counted separately."""
    vals = np.array([v for v in values if v is not None], dtype=float)
    failures = int(np.sum(~np.isfinite(vals)))
    vals = vals[np.isfinite(vals)]
    if not len(vals):
        return {"min": float("nan"), "mean": float("nan"), "max": float("nan"), "count": 0,
                "failures": failures}
    return {"min": float(vals.min()), "mean": float(vals.mean()), "max": float(vals.max()),
            "count": int(len(vals)), "failures": failures}
