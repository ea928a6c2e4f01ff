"""Hyper-reduction: a reduced integration domain (RID) built from the
mode gradients, and the Petrov-Galerkin solver whose test functions are
truncated to the interior nodes of that domain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .deim import deim_solve, greedy_indices, magic_point_set, row_restricted_solve
from .errors import LinearAlgebraError, ParameterError, RankError
from .fem import EPS_MAX, MAX_ITER, CostCounters
from .galerkin_rb import ReducedState
from .mesh import Mesh, quadrature_table
from .model import ParameterVector
from .pod import ReducedBasis
from .sampling import RowEvaluator


@dataclass
class ReducedIntegrationDomain:
    elements: np.ndarray  # sorted element ids of Omega_Z
    interior: np.ndarray  # free-DOF indices whose test functions live inside Omega_Z
    all_nodes: np.ndarray  # node ids of Omega_Z (Dirichlet nodes included)
    rid_dofs: np.ndarray  # free-DOF indices of all RID nodes
    layers: int
    seed_elements: np.ndarray  # elements picked by the gradient greedy

    @property
    def l(self) -> int:
        return len(self.interior)

    @property
    def l_bar(self) -> int:
        return len(self.all_nodes)

    def Z(self, n: int) -> np.ndarray:
        """Selection matrix (n x l) onto the interior DOFs."""
        Z = np.zeros((n, self.l))
        Z[self.interior, np.arange(self.l)] = 1.0
        return Z

    def Z_bar(self, n: int) -> np.ndarray:
        Zb = np.zeros((n, len(self.rid_dofs)))
        Zb[self.rid_dofs, np.arange(len(self.rid_dofs))] = 1.0
        return Zb

    def to_dict(self) -> dict:
        return {
            "elements": self.elements.tolist(),
            "interior": self.interior.tolist(),
            "all_nodes": self.all_nodes.tolist(),
            "rid_dofs": self.rid_dofs.tolist(),
            "layers": self.layers,
            "seed_elements": self.seed_elements.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReducedIntegrationDomain":
        arr = lambda k: np.asarray(d[k], dtype=np.int64)  # noqa: E731
        return cls(arr("elements"), arr("interior"), arr("all_nodes"), arr("rid_dofs"),
                   int(d["layers"]), arr("seed_elements"))


def grow_layer(mesh: Mesh, elements: np.ndarray) -> np.ndarray:
    """Add every element sharing at least one node with the current set."""
    nodes = np.unique(mesh.elements[elements])
    return np.unique(np.concatenate([elements] + [mesh.node_elements[i] for i in nodes]))


def interior_dofs(mesh: Mesh, elements) -> np.ndarray:
    """Free DOFs all of whose incident elements belong to ``elements``."""
    inside = np.zeros(mesh.n_el, dtype=bool)
    inside[np.asarray(elements, dtype=np.int64)] = True
    ok = np.array([inside[mesh.node_elements[i]].all() for i in mesh.free_nodes])
    return np.flatnonzero(ok)


def rid_from_elements(mesh: Mesh, elements, layers: int = 0, seed=None) -> ReducedIntegrationDomain:
    elements = np.unique(np.asarray(elements, dtype=np.int64))
    if len(elements) and (elements[0] < 0 or elements[-1] >= mesh.n_el):
        raise ParameterError("element id out of range")
    nodes = np.unique(mesh.elements[elements])
    dofs = mesh.dof_of_node[nodes]
    return ReducedIntegrationDomain(
        elements=elements,
        interior=interior_dofs(mesh, elements),
        all_nodes=nodes,
        rid_dofs=np.sort(dofs[dofs >= 0]),
        layers=layers,
        seed_elements=elements if seed is None else np.asarray(seed, dtype=np.int64),
    )


def gradient_seed_elements(basis: ReducedBasis) -> np.ndarray:
    """Elements holding the quadrature points picked by the greedy over the
    mode-gradient columns (ordered point-major, then x/y)."""
    qt = quadrature_table(basis.mesh)
    cols = basis.Gr.reshape(-1, basis.m)
    idx, _ = greedy_indices(cols)
    return np.unique(qt.element[idx // 2])


def hr_offline(
    basis: ReducedBasis,
    layers: int = 1,
    user_elements=(),
    auto_grow: bool = False,
) -> ReducedIntegrationDomain:
    """Reduced integration domain from the mode gradients grown by ``layers``
    node-adjacency layers, united with ``user_elements``."""
    if layers < 0:
        raise ParameterError("layers must be non-negative")
    mesh = basis.mesh
    seed = gradient_seed_elements(basis)
    user = np.asarray(list(user_elements), dtype=np.int64)
    elements = seed
    for _ in range(layers):
        elements = grow_layer(mesh, elements)
    while True:
        rid = rid_from_elements(mesh, np.concatenate([elements, user]), layers, seed)
        if rid.l >= basis.m:
            return rid
        if not auto_grow or len(rid.elements) == mesh.n_el:
            raise RankError(
                f"RID has l={rid.l} interior points but m={basis.m} modes; "
                f"add more surrounding elements (increase layers beyond {layers})"
            )
        layers += 1
        elements = grow_layer(mesh, elements)


def max_row_nnz(mesh: Mesh) -> int:
    """Largest number of nonzeros in a row of the free-DOF Jacobian."""
    key = "_max_row_nnz"
    if key not in mesh.__dict__:
        counts = [len(np.unique(mesh.elements[mesh.node_elements[i]])) for i in mesh.free_nodes]
        mesh.__dict__[key] = int(max(counts)) if counts else 0
    return mesh.__dict__[key]


def hr_iteration_cost(l: int, l_bar: int, m: int, zeta: int, n_points: int, n_el: int) -> CostCounters:
    return CostCounters(
        c_reloc=l_bar * m + 2 * 8 * n_points,
        c_const=n_points,
        c_rhs=2 * l * m + 2 * 8 * n_points,
        c_jac=2 * zeta * l * m + 2 * l * m * m + 96 * n_points + 64 * n_el,
    )


def hr_evaluator(basis: ReducedBasis, rid: ReducedIntegrationDomain) -> RowEvaluator:
    cache = rid.__dict__.setdefault("_evaluators", {})
    if id(basis) not in cache:
        cache[id(basis)] = (basis, RowEvaluator(basis.mesh, basis.V, rid.interior, rid.elements))
    return cache[id(basis)][1]


def hr_solve(
    basis: ReducedBasis,
    rid: ReducedIntegrationDomain,
    p: ParameterVector,
    eps_max: float = EPS_MAX,
    max_iter: int = MAX_ITER,
) -> ReducedState:
    """Fixed-point iteration on ``V^T Z Z^T J V dgamma = -V^T Z Z^T r`` over the RID."""
    if rid.l < basis.m:
        raise RankError(f"RID has l={rid.l} < m={basis.m}; add more surrounding elements")
    p = ParameterVector(*p).check_physical()
    ev = hr_evaluator(basis, rid)
    X = basis.V[rid.interior].T
    cost = hr_iteration_cost(rid.l, rid.l_bar, basis.m, max_row_nnz(basis.mesh), ev.n_points,
                             len(rid.elements))
    try:
        return row_restricted_solve(ev, X, p, basis, eps_max, max_iter, cost, "HR")
    except LinearAlgebraError as exc:
        raise RankError(f"hyper-reduced system is singular for p={list(p)}: {exc}") from exc


def hr_equals_deim_check(basis: ReducedBasis, rid: ReducedIntegrationDomain, params,
                         eps_max: float = EPS_MAX) -> dict:
    """Run HR and the DEIM configuration ``U = P = Z`` side by side.

    Returns the largest iterate discrepancy over all parameters and iterations.
    """
    params = [ParameterVector(*p) for p in params]
    n = basis.mesh.n
    mp = magic_point_set(rid.Z(n), rid.interior, basis.V, basis.mesh)
    worst = 0.0
    for p in params:
        a = hr_solve(basis, rid, p, eps_max=eps_max)
        b = deim_solve(basis, mp, p, eps_max=eps_max)
        if len(a.iterates) != len(b.iterates):
            worst = np.inf
            break
        for ga, gb in zip(a.iterates, b.iterates):
            worst = max(worst, float(np.max(np.abs(ga - gb), initial=0.0)))
    return {"max_discrepancy": worst, "parameters": len(params), "ok": worst <= 1e-10}
