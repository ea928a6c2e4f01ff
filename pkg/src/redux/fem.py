"""High-fidelity solver: residual and approximate-Jacobian assembly, mass matrix,
and the successive-substitution loop.

All vectors named ``w`` live on the free DOFs (length ``mesh.n``); nodal
vectors over every node are called ``u``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearAlgebraError, NonConvergenceError, NumericError, ParameterError
from .mesh import Mesh, quadrature_table
from .model import ParameterVector, conductivity, dirichlet_lift

log = logging.getLogger(__name__)

EPS_MAX = 1e-8
MAX_ITER = 100
NODES_PER_ELEMENT = 8


@dataclass
class CostCounters:
    """Work tallies of one solve, split as reloc/const/rhs/jac/sol.

    ``c_const`` is exact (one unit per conductivity evaluation); the other
    entries follow the per-method operation-count formulas.
    """

    c_reloc: int = 0
    c_const: int = 0
    c_rhs: int = 0
    c_jac: int = 0
    c_sol: int = 0

    def __iadd__(self, other: "CostCounters"):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SolveReport:
    iterations: int
    final_increment_norm: float
    converged: bool
    counters: CostCounters
    increment_norms: list = field(default_factory=list)
    # per-iteration counter snapshots (cumulative), one per iteration
    history: list = field(default_factory=list)


class _Assembler:
    """Per-mesh precomputed scatter maps into a fixed CSR pattern."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        qt = quadrature_table(mesh)
        n_el, nq = mesh.n_el, qt.per_element
        self.N = qt.N.reshape(n_el, nq, 8)
        self.G = qt.G.reshape(n_el, nq, 2, 8)
        self.wq = qt.weights.reshape(n_el, nq)
        dofs = mesh.dof_of_node[mesh.elements]  # (n_el, 8)
        rows = np.broadcast_to(dofs[:, :, None], (n_el, 8, 8)).ravel()
        cols = np.broadcast_to(dofs[:, None, :], (n_el, 8, 8)).ravel()
        self.keep = (rows >= 0) & (cols >= 0)
        n = mesh.n
        pattern = sp.csr_matrix(
            (np.ones(self.keep.sum()), (rows[self.keep], cols[self.keep])), shape=(n, n)
        )
        pattern.sum_duplicates()
        pattern.sort_indices()
        self.indptr, self.indices = pattern.indptr, pattern.indices
        # position of each kept element entry inside the CSR data array
        key = rows[self.keep] * n + cols[self.keep]
        csr_rows = np.repeat(np.arange(n), np.diff(self.indptr))
        csr_key = csr_rows * n + self.indices
        self.slot = np.searchsorted(csr_key, key)
        self.nnz = len(self.indices)

    def element_fields(self, u_nodes: np.ndarray, elements=None):
        """Temperature and gradient at the quadrature points of ``elements``."""
        el = slice(None) if elements is None else elements
        ue = u_nodes[self.mesh.elements[el]]
        N, G = self.N[el], self.G[el]
        uq = np.einsum("eqa,ea->eq", N, ue)
        gq = np.einsum("eqca,ea->eqc", G, ue)
        return uq, gq

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        n = self.mesh.n
        vals = np.bincount(self.slot, weights=data.ravel()[self.keep], minlength=self.nnz)
        return sp.csr_matrix((vals, self.indices.copy(), self.indptr.copy()), shape=(n, n))


def _assembler(mesh: Mesh) -> _Assembler:
    a = mesh.__dict__.get("_assembler")
    if a is None:
        a = mesh.__dict__["_assembler"] = _Assembler(mesh)
    return a


def fe_iteration_cost(mesh: Mesh) -> CostCounters:
    """Counter increment of one full assembly."""
    n_gp = mesh.n_el * quadrature_table(mesh).per_element
    k = NODES_PER_ELEMENT
    return CostCounters(
        c_reloc=2 * n_gp * k, c_const=n_gp, c_rhs=2 * n_gp * k, c_jac=n_gp * (k * k + 4 * k)
    )


def assemble(mesh: Mesh, w, p: ParameterVector, counters: CostCounters | None = None):
    """Residual ``r`` and symmetric approximate Jacobian ``J`` on the free DOFs.

    The temperature at a Gauss point is ``N @ (w + lift)``: the lift is carried
    once in the nodal vector.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.n,):
        raise ParameterError(f"expected fluctuation of length {mesh.n}, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NumericError("fluctuation vector contains non-finite entries")
    asm = _assembler(mesh)
    lift, _ = dirichlet_lift(mesh, p)
    u = lift + mesh.to_full(w)
    uq, gq = asm.element_fields(u)
    vm = asm.wq * conductivity(uq, p)
    re = np.einsum("eq,eqca,eqc->ea", vm, asm.G, gq)
    je = np.einsum("eq,eqca,eqcb->eab", vm, asm.G, asm.G)
    r_full = np.bincount(mesh.elements.ravel(), weights=re.ravel(), minlength=mesh.n_nodes)
    r = r_full[mesh.free_nodes]
    J = asm.matrix(je)
    if counters is not None:
        counters += fe_iteration_cost(mesh)
    return r, J, counters


def mass_matrix(mesh: Mesh, free_only: bool = True) -> sp.csr_matrix:
    """Consistent mass matrix, restricted to the free DOFs by default."""
    key = "_mass_free" if free_only else "_mass_full"
    cached = mesh.__dict__.get(key)
    if cached is not None:
        return cached
    qt = quadrature_table(mesh)
    n_el, nq = mesh.n_el, qt.per_element
    N = qt.N.reshape(n_el, nq, 8)
    me = np.einsum("eq,eqa,eqb->eab", qt.weights.reshape(n_el, nq), N, N)
    el = mesh.elements
    rows = np.broadcast_to(el[:, :, None], me.shape).ravel()
    cols = np.broadcast_to(el[:, None, :], me.shape).ravel()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    M.sum_duplicates()
    if free_only:
        f = mesh.free_nodes
        M = M[f][:, f].tocsr()
    mesh.__dict__[key] = M
    return M


def l2_norm(mesh: Mesh, v) -> float:
    """L2(Omega) norm of a free-DOF vector or of a nodal vector over all nodes."""
    v = np.asarray(v, dtype=float)
    if v.shape == (mesh.n,):
        M = mass_matrix(mesh)
    elif v.shape == (mesh.n_nodes,):
        M = mass_matrix(mesh, free_only=False)
    else:
        raise ParameterError(
            f"vector of shape {v.shape} matches neither {mesh.n} free DOFs nor {mesh.n_nodes} nodes"
        )
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def sparse_solve(J: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = spla.splu(J.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise LinearAlgebraError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise LinearAlgebraError("linear solve produced non-finite values")
    return x


def fe_solve(
    mesh: Mesh,
    p: ParameterVector,
    eps_max: float = EPS_MAX,
    max_iter: int = MAX_ITER,
    record_residuals: bool = False,
):
    """Successive substitution from ``w = 0``.

    Returns ``(w, report)``; with ``record_residuals`` the report also carries
    ``residuals``, the residual assembled at every iterate before its update.
    """
    if eps_max <= 0:
        raise ParameterError("eps_max must be positive")
    p = ParameterVector(*p).check_physical()
    counters = CostCounters()
    report = SolveReport(0, float("inf"), False, counters)
    residuals = []
    w = np.zeros(mesh.n)
    for it in range(1, max_iter + 1):
        r, J, _ = assemble(mesh, w, p, counters)
        if record_residuals:
            residuals.append(r)
        if mesh.n:
            delta = sparse_solve(J, -r)
            counters.c_sol += mesh.n**2
        else:
            delta = np.zeros(0)
        w = w + delta
        norm = l2_norm(mesh, delta)
        report.increment_norms.append(norm)
        report.history.append(CostCounters(**counters.as_dict()))
        report.iterations = it
        report.final_increment_norm = norm
        if norm < eps_max:
            report.converged = True
            break
    else:
        raise NonConvergenceError(
            f"FE solve did not converge in {max_iter} iterations for p={list(p)}",
            last_increment_norm=report.final_increment_norm,
            iterations=max_iter,
        )
    if record_residuals:
        report.residuals = residuals
    log.debug("fe_solve p=%s iterations=%d", list(p), report.iterations)
    return w, report


def temperature(mesh: Mesh, w, p: ParameterVector) -> np.ndarray:
    """Nodal temperature over all nodes: lift plus embedded fluctuation."""
    lift, _ = dirichlet_lift(mesh, p)
    return lift + mesh.to_full(w)
