"""Quadratic serendipity quadrilateral meshes and their quadrature tables.

Two structured generators are provided: the benchmark plate with a centred
circular hole, and the unit square used for trivial-solution checks. Elements
are 8-node serendipity quads with local node order

    3---6---2
    |       |
    7       5      (xi to the right, eta upwards)
    |       |
    0---4---1
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import MeshError, ParameterError

# reference coordinates of the 8 local nodes
LOCAL_NODES = np.array(
    [[-1, -1], [1, -1], [1, 1], [-1, 1], [0, -1], [1, 0], [0, 1], [-1, 0]], dtype=float
)
# local edges as (corner, midside, corner)
LOCAL_EDGES = ((0, 4, 1), (1, 5, 2), (2, 6, 3), (3, 7, 0))
GAUSS_ORDER = 3


def shape_values(xi, eta):
    """Serendipity shape functions at reference points, shape (..., 8)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    n = np.empty(xi.shape + (8,))
    n[..., 0] = (1 - xi) * (1 - eta) * (-1 - xi - eta) / 4
    n[..., 1] = (1 + xi) * (1 - eta) * (-1 + xi - eta) / 4
    n[..., 2] = (1 + xi) * (1 + eta) * (-1 + xi + eta) / 4
    n[..., 3] = (1 - xi) * (1 + eta) * (-1 - xi + eta) / 4
    n[..., 4] = (1 - xi * xi) * (1 - eta) / 2
    n[..., 5] = (1 + xi) * (1 - eta * eta) / 2
    n[..., 6] = (1 - xi * xi) * (1 + eta) / 2
    n[..., 7] = (1 - xi) * (1 - eta * eta) / 2
    return n


def shape_derivatives(xi, eta):
    """Reference derivatives, shape (..., 2, 8) with rows d/dxi and d/deta."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    d = np.empty(xi.shape + (2, 8))
    d[..., 0, 0] = (1 - eta) * (2 * xi + eta) / 4
    d[..., 1, 0] = (1 - xi) * (xi + 2 * eta) / 4
    d[..., 0, 1] = (1 - eta) * (2 * xi - eta) / 4
    d[..., 1, 1] = -(1 + xi) * (xi - 2 * eta) / 4
    d[..., 0, 2] = (1 + eta) * (2 * xi + eta) / 4
    d[..., 1, 2] = (1 + xi) * (xi + 2 * eta) / 4
    d[..., 0, 3] = (1 + eta) * (2 * xi - eta) / 4
    d[..., 1, 3] = -(1 - xi) * (xi - 2 * eta) / 4
    d[..., 0, 4] = -xi * (1 - eta)
    d[..., 1, 4] = -(1 - xi * xi) / 2
    d[..., 0, 5] = (1 - eta * eta) / 2
    d[..., 1, 5] = -(1 + xi) * eta
    d[..., 0, 6] = -xi * (1 + eta)
    d[..., 1, 6] = (1 - xi * xi) / 2
    d[..., 0, 7] = -(1 - eta * eta) / 2
    d[..., 1, 7] = -(1 - xi) * eta
    return d


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable mesh of 8-node quads.

    ``gamma1`` holds the Dirichlet node ids, ``gamma2_edges`` the Neumann
    boundary as ``(element, local_edge)`` pairs. Free DOFs are the non-Dirichlet
    nodes in ascending node order.
    """

    nodes: np.ndarray
    elements: np.ndarray
    gamma1: np.ndarray
    gamma2_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    name: str = "mesh"

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float).reshape(-1, 2))
        object.__setattr__(self, "elements", _frozen(self.elements, np.int64).reshape(-1, 8))
        object.__setattr__(self, "gamma1", _frozen(np.unique(self.gamma1), np.int64))
        object.__setattr__(
            self, "gamma2_edges", _frozen(self.gamma2_edges, np.int64).reshape(-1, 2)
        )
        self.validate()

    def validate(self):
        n_nodes = len(self.nodes)
        el = self.elements
        if el.size and (el.min() < 0 or el.max() >= n_nodes):
            raise MeshError("element references an invalid node index")
        for e, ids in enumerate(el):
            if len(set(ids.tolist())) != 8:
                raise MeshError(f"element {e} does not reference 8 distinct nodes")
        if not np.array_equal(np.unique(el), np.arange(n_nodes)):
            raise MeshError("every node must be referenced by at least one element")
        if self.gamma1.size and (self.gamma1.min() < 0 or self.gamma1.max() >= n_nodes):
            raise MeshError("gamma1 references an invalid node index")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_el(self) -> int:
        return len(self.elements)

    @property
    def n(self) -> int:
        """Number of free unknowns."""
        return self.n_nodes - len(self.gamma1)

    @cached_property
    def free_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.gamma1] = False
        return _frozen(np.flatnonzero(mask), np.int64)

    @cached_property
    def dof_of_node(self) -> np.ndarray:
        """Free-DOF index of every node, -1 on the Dirichlet boundary."""
        d = np.full(self.n_nodes, -1, dtype=np.int64)
        d[self.free_nodes] = np.arange(self.n)
        d.setflags(write=False)
        return d

    @cached_property
    def node_elements(self) -> list[np.ndarray]:
        """Elements incident to each node."""
        buckets: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e, ids in enumerate(self.elements):
            for i in ids:
                buckets[i].append(e)
        return [np.array(b, dtype=np.int64) for b in buckets]

    def to_full(self, w: np.ndarray) -> np.ndarray:
        """Embed a free-DOF vector (or matrix) into all nodes, zero on gamma1."""
        w = np.asarray(w, dtype=float)
        full = np.zeros((self.n_nodes,) + w.shape[1:])
        full[self.free_nodes] = w
        return full

    def area(self) -> float:
        return float(quadrature_table(self).weights.sum())

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "gamma1": self.gamma1.tolist(),
            "gamma2_edges": self.gamma2_edges.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "mesh") -> "Mesh":
        return cls(
            nodes=np.array(data["nodes"], dtype=float),
            elements=np.array(data["elements"], dtype=np.int64),
            gamma1=np.array(data["gamma1"], dtype=np.int64),
            gamma2_edges=np.array(data.get("gamma2_edges", []), dtype=np.int64).reshape(-1, 2),
            name=name,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Mesh":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), name=path.stem)

    @cached_property
    def mesh_id(self) -> str:
        """Content hash, stable across save/load."""
        return hashlib.sha256(json.dumps(self.to_dict()).encode()).hexdigest()[:16]


def generate_plate_with_hole(
    n_angular: int = 80,
    n_radial: int = 10,
    hole_radius: float = 0.25,
    half_side: float = 0.5,
    centre: tuple[float, float] = (0.0, 0.0),
) -> Mesh:
    """Annular structured mesh of a square of side ``2*half_side`` around ``centre``
    minus a circular hole at ``centre``.

    Angular lines run from the hole to the outer square; the square corners
    coincide with element corners whenever ``n_angular`` is divisible by 4.
    The outer square is the Dirichlet boundary, the hole the Neumann boundary.
    Nodes are numbered ring by ring from the hole outwards.
    """
    if n_angular < 8 or n_angular % 4:
        raise ParameterError("n_angular must be >= 8 and divisible by 4")
    if n_radial < 2:
        raise ParameterError("n_radial must be >= 2")
    if not 0 < hole_radius < half_side:
        raise ParameterError(
            f"hole_radius must lie in (0, {half_side}), got {hole_radius}"
        )
    na, nr = n_angular, n_radial
    centre = np.asarray(centre, dtype=float)
    a = np.arange(2 * na)  # angular half-steps
    theta = np.pi / 4 + np.pi * a / na
    inner = centre + hole_radius * np.column_stack([np.cos(theta), np.sin(theta)])

    # walk the square perimeter counterclockwise from the (+,+) corner
    s = 4.0 * a / (2 * na)
    side = np.floor(s).astype(int) % 4
    frac = s - np.floor(s)
    h = half_side
    starts = np.array([[h, h], [-h, h], [-h, -h], [h, -h]])
    dirs = np.array([[-1, 0], [0, -1], [1, 0], [0, 1]]) * 2 * h
    outer = centre + starts[side] + frac[:, None] * dirs[side]

    rings = []
    offsets = []
    count = 0
    for b in range(2 * nr + 1):
        t = b / (2 * nr)
        pts = (1 - t) * inner + t * outer
        if b % 2:
            pts = pts[::2]
        offsets.append(count)
        count += len(pts)
        rings.append(pts)
    nodes = np.vstack(rings)

    def nid(b, aa):
        aa %= 2 * na
        return offsets[b] + (aa if b % 2 == 0 else aa // 2)

    elements = []
    for k in range(nr):
        for j in range(na):
            b, q = 2 * k, 2 * j
            elements.append([
                nid(b, q), nid(b + 2, q), nid(b + 2, q + 2), nid(b, q + 2),
                nid(b + 1, q), nid(b + 2, q + 1), nid(b + 1, q + 2), nid(b, q + 1),
            ])
    gamma1 = np.arange(offsets[2 * nr], count)
    gamma2 = [(j, 3) for j in range(na)]
    return Mesh(nodes, np.array(elements), gamma1, np.array(gamma2),
                name=f"plate_{na}x{nr}_r{hole_radius:g}")


def generate_unit_square(nx: int, ny: int) -> Mesh:
    """Structured mesh of ``[0,1]^2`` with the whole boundary Dirichlet."""
    if nx < 1 or ny < 1:
        raise ParameterError("nx and ny must be >= 1")
    ids = {}
    coords = []
    for b in range(2 * ny + 1):
        for a in range(2 * nx + 1):
            if a % 2 and b % 2:
                continue
            ids[a, b] = len(coords)
            coords.append((a / (2 * nx), b / (2 * ny)))
    elements = []
    for j in range(ny):
        for i in range(nx):
            a, b = 2 * i, 2 * j
            elements.append([
                ids[a, b], ids[a + 2, b], ids[a + 2, b + 2], ids[a, b + 2],
                ids[a + 1, b], ids[a + 2, b + 1], ids[a + 1, b + 2], ids[a, b + 1],
            ])
    gamma1 = [v for (a, b), v in ids.items() if a in (0, 2 * nx) or b in (0, 2 * ny)]
    return Mesh(np.array(coords), np.array(elements), np.array(gamma1), name=f"square_{nx}x{ny}")


@dataclass(frozen=True)
class QuadPointEval:
    point_id: int
    weight: float
    N: np.ndarray
    G: np.ndarray
    element_id: int


@dataclass(frozen=True, eq=False)
class QuadratureTable:
    """Shape data at all Gauss points, point-major (element ``e`` owns rows ``9e..9e+8``).

    ``weights`` include the Jacobian determinant, ``G`` holds physical gradients
    with shape ``(n_gp, 2, 8)``.
    """

    weights: np.ndarray
    N: np.ndarray
    G: np.ndarray
    element: np.ndarray
    points: np.ndarray
    per_element: int

    def __len__(self):
        return len(self.weights)

    def __getitem__(self, i) -> QuadPointEval:
        return QuadPointEval(i, float(self.weights[i]), self.N[i], self.G[i], int(self.element[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def n_gp(self) -> int:
        return len(self.weights)

    def element_points(self, elements) -> np.ndarray:
        """Quadrature point ids of the given elements, in element order."""
        elements = np.asarray(elements, dtype=np.int64)
        return (elements[:, None] * self.per_element + np.arange(self.per_element)).ravel()


def quadrature_table(mesh: Mesh) -> QuadratureTable:
    """3x3 Gauss table for ``mesh`` (cached per mesh object)."""
    cached = mesh.__dict__.get("_qt")
    if cached is not None:
        return cached
    g, gw = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    xi, eta = np.meshgrid(g, g, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    wref = np.outer(gw, gw).ravel()
    nq = len(wref)

    n_ref = shape_values(xi, eta)  # (nq, 8)
    d_ref = shape_derivatives(xi, eta)  # (nq, 2, 8)
    X = mesh.nodes[mesh.elements]  # (n_el, 8, 2)
    jac = np.einsum("qia,eaj->eqij", d_ref, X)  # d x_j / d xi_i
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    bad = np.flatnonzero((det <= 0).any(axis=1))
    if bad.size:
        raise MeshError(f"element {int(bad[0])} has a non-positive Jacobian determinant")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    G = np.einsum("eqij,qja->eqia", inv, d_ref)

    n_el = mesh.n_el
    N = np.broadcast_to(n_ref, (n_el, nq, 8)).reshape(-1, 8).copy()
    table = QuadratureTable(
        weights=(det * wref).reshape(-1),
        N=N,
        G=G.reshape(-1, 2, 8),
        element=np.repeat(np.arange(n_el), nq),
        points=np.einsum("qa,eaj->eqj", n_ref, X).reshape(-1, 2),
        per_element=nq,
    )
    for a in (table.weights, table.N, table.G, table.element, table.points):
        a.setflags(write=False)
    mesh.__dict__["_qt"] = table
    return table
