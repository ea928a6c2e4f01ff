"""Snapshot collection and L2(Omega)-orthonormal POD of the fluctuation snapshots."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import ParameterError, RankError, ReduxError
from .fem import EPS_MAX, fe_solve, mass_matrix
from .mesh import Mesh, quadrature_table
from .model import PARAM_BOUNDS, ParameterVector
from .parallel import parallel_map

RANK_TOL = 1e-14


def parameter_grid(points: int | tuple[int, int, int] = 5) -> list[ParameterVector]:
    """Equidistant grid over (g_x, g_y, c); ``g_x`` varies slowest."""
    if isinstance(points, int):
        points = (points,) * 3
    axes = [np.linspace(lo, hi, k) if k > 1 else np.array([lo])
            for k, (lo, hi) in zip(points, PARAM_BOUNDS)]
    return [ParameterVector(float(a), float(b), float(c)) for a, b, c in itertools.product(*axes)]


@dataclass
class SnapshotSet:
    S: np.ndarray
    params: list
    eps_max: float
    mesh_id: str
    iterations: list = field(default_factory=list)
    # residual iterates per parameter (free-DOF vectors), kept for DEIM training
    residuals: list = field(default_factory=list)

    @property
    def s(self) -> int:
        return self.S.shape[1]


def collect_snapshots(
    mesh: Mesh, params, eps_max: float = EPS_MAX, threads: int | None = None
) -> SnapshotSet:
    """Converged FE fluctuations, one column per parameter."""
    params = [ParameterVector(*p) for p in params]
    if not params:
        raise ParameterError("empty parameter set")
    for p in params:
        p.check_domain()

    def solve(p):
        try:
            return fe_solve(mesh, p, eps_max=eps_max, record_residuals=True)
        except ReduxError as exc:
            raise type(exc)(f"snapshot at p={p.to_list()}: {exc}") from exc

    results = parallel_map(solve, params, threads)
    S = np.column_stack([w for w, _ in results])
    return SnapshotSet(
        S=S,
        params=params,
        eps_max=eps_max,
        mesh_id=mesh.mesh_id,
        iterations=[rep.iterations for _, rep in results],
        residuals=[rep.residuals for _, rep in results],
    )


class ReducedBasis:
    """Coefficient matrix ``V`` (n x m) of L2-orthonormal modes plus per-point
    reduced matrices ``T`` (n_gp x m) and ``Gr`` (n_gp x 2 x m)."""

    def __init__(self, mesh: Mesh, V: np.ndarray, eigvals: np.ndarray | None = None):
        V = np.asarray(V, dtype=float)
        if V.ndim != 2 or V.shape[0] != mesh.n:
            raise ParameterError(f"basis must have {mesh.n} rows, got shape {V.shape}")
        self.mesh = mesh
        self.V = V
        self.eigvals = None if eigvals is None else np.asarray(eigvals, dtype=float)

    @property
    def m(self) -> int:
        return self.V.shape[1]

    @cached_property
    def V_nodes(self) -> np.ndarray:
        """Modes over all nodes (zero rows on the Dirichlet boundary)."""
        return self.mesh.to_full(self.V)

    @cached_property
    def T(self) -> np.ndarray:
        qt = quadrature_table(self.mesh)
        Ve = self.V_nodes[self.mesh.elements[qt.element]]
        return np.einsum("pa,pam->pm", qt.N, Ve)

    @cached_property
    def Gr(self) -> np.ndarray:
        qt = quadrature_table(self.mesh)
        Ve = self.V_nodes[self.mesh.elements[qt.element]]
        return np.einsum("pca,pam->pcm", qt.G, Ve)

    def truncate(self, m: int) -> "ReducedBasis":
        if not 1 <= m <= self.m:
            raise ParameterError(f"cannot truncate a {self.m}-mode basis to {m}")
        ev = None if self.eigvals is None else self.eigvals[:m]
        return ReducedBasis(self.mesh, self.V[:, :m], ev)

    def gram(self) -> np.ndarray:
        return self.V.T @ (mass_matrix(self.mesh) @ self.V)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def pod_basis(
    snapshots: SnapshotSet | np.ndarray,
    mesh: Mesh,
    m: int | None = None,
    delta: float | None = None,
) -> ReducedBasis:
    """Snapshot POD through the eigenproblem of ``C = S^T M S``.

    Give either the dimension ``m`` or an energy threshold ``delta``; with
    ``delta`` the smallest ``m`` capturing a fraction ``1 - delta`` of the
    eigenvalue sum is used.
    """
    S = snapshots.S if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots, dtype=float)
    if (m is None) == (delta is None):
        raise ParameterError("give exactly one of m or delta")
    M = mass_matrix(mesh)
    C = S.T @ (M @ S)
    C = 0.5 * (C + C.T)
    xi, q = sla.eigh(C)
    order = np.argsort(xi)[::-1]
    xi, q = xi[order], q[:, order]
    if delta is not None:
        if not 0 < delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        energy = np.cumsum(np.clip(xi, 0, None)) / np.clip(xi, 0, None).sum()
        m = int(np.searchsorted(energy, 1 - delta) + 1)
    if not 1 <= m <= S.shape[1]:
        raise ParameterError(f"m={m} must lie in [1, {S.shape[1]}]")
    if xi[0] <= 0 or xi[m - 1] / xi[0] < RANK_TOL:
        raise RankError(f"requested m={m} exceeds the numerical rank of the snapshot set")
    V = S @ (q[:, :m] / np.sqrt(xi[:m]))
    V = _m_orthonormalize(V, M)
    return ReducedBasis(mesh, _fix_signs(V), xi[:m])


def _m_orthonormalize(V: np.ndarray, M) -> np.ndarray:
    """One Cholesky pass restoring V^T M V = I lost to rounding in small modes."""
    R = np.linalg.cholesky(V.T @ (M @ V)).T
    return sla.solve_triangular(R, V.T, trans="T").T


def project(basis: ReducedBasis, w) -> tuple[np.ndarray, np.ndarray]:
    """L2-orthogonal projection: coordinates ``V^T M w`` and the reconstruction."""
    w = np.asarray(w, dtype=float)
    gamma = basis.V.T @ (mass_matrix(basis.mesh) @ w)
    return gamma, basis.V @ gamma


def projection_error(snapshots: SnapshotSet | np.ndarray, basis: ReducedBasis) -> float:
    """Aggregate relative L2 projection error of the snapshot columns."""
    S = snapshots.S if isinstance(snapshots, SnapshotSet) else np.asarray(snapshots, dtype=float)
    M = mass_matrix(basis.mesh)
    gamma = basis.V.T @ (M @ S)
    E = S - basis.V @ gamma
    num = np.einsum("is,is->", E, M @ E)
    den = np.einsum("is,is->", S, M @ S)
    return float(np.sqrt(max(num, 0.0) / den)) if den > 0 else 0.0
