"""Row-restricted residual/Jacobian evaluation shared by DEIM and hyper-reduction.

Only the listed elements are visited and only the requested free-DOF rows of
``r`` and ``J V`` are accumulated; nodal temperatures are kept on the nodes of
those elements alone.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh, quadrature_table
from .model import ParameterVector, conductivity, dirichlet_lift


def elements_touching(mesh: Mesh, dofs) -> np.ndarray:
    """Sorted ids of the elements incident to any of the given free DOFs."""
    nodes = mesh.free_nodes[np.asarray(dofs, dtype=np.int64)]
    if not len(nodes):
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([mesh.node_elements[i] for i in nodes]))


class RowEvaluator:
    def __init__(self, mesh: Mesh, V: np.ndarray, rows, elements):
        self.mesh = mesh
        self.rows = np.asarray(rows, dtype=np.int64)
        self.elements = np.asarray(elements, dtype=np.int64)
        qt = quadrature_table(mesh)
        nq = qt.per_element
        pts = qt.element_points(self.elements)
        k = len(self.elements)
        self.n_points = len(pts)
        self.N = qt.N[pts].reshape(k, nq, 8)
        self.G = qt.G[pts].reshape(k, nq, 2, 8)
        self.wq = qt.weights[pts].reshape(k, nq)

        enodes = mesh.elements[self.elements]
        self.nodes, local = np.unique(enodes, return_inverse=True)
        self.local = local.reshape(enodes.shape)
        V_nodes = mesh.to_full(V)
        self.V_nodes = V_nodes[self.nodes]  # (n_bar, m)
        # G V per point, i.e. gradients of the modes restricted to the stencil
        self.GV = np.einsum("eqca,eam->eqcm", self.G, self.V_nodes[self.local])

        row_of_node = np.full(mesh.n_nodes, -1, dtype=np.int64)
        row_of_node[mesh.free_nodes[self.rows]] = np.arange(len(self.rows))
        pos = row_of_node[enodes]
        self.hit = pos >= 0
        self.hit_pos = pos[self.hit]

    @property
    def n_bar(self) -> int:
        """Number of nodes whose values the evaluation needs."""
        return len(self.nodes)

    def lift(self, p: ParameterVector) -> np.ndarray:
        lift, _ = dirichlet_lift(self.mesh, p)
        return lift[self.nodes]

    def evaluate(self, u_nodes: np.ndarray, p: ParameterVector):
        """Selected rows of ``r`` and of ``J V`` from stencil temperatures ``u_nodes``."""
        ue = u_nodes[self.local]
        uq = np.einsum("eqa,ea->eq", self.N, ue)
        gq = np.einsum("eqca,ea->eqc", self.G, ue)
        vm = self.wq * conductivity(uq, p)
        re = np.einsum("eq,eqca,eqc->ea", vm, self.G, gq)
        jve = np.einsum("eq,eqca,eqcm->eam", vm, self.G, self.GV)
        nr, m = len(self.rows), self.GV.shape[-1]
        r = np.zeros(nr)
        JV = np.zeros((nr, m))
        np.add.at(r, self.hit_pos, re[self.hit])
        np.add.at(JV, self.hit_pos, jve[self.hit])
        return r, JV
