import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import REF, serendipity
from redux.errors import MeshError, ParameterError
from redux.mesh import (
    LOCAL_EDGES,
    Mesh,
    generate_plate_with_hole,
    generate_unit_square,
    quadrature_table,
    shape_derivatives,
    shape_values,
)

coord = st.floats(-1.0, 1.0, allow_nan=False)


def test_benchmark_counts():
    mesh = generate_plate_with_hole(80, 10, 0.25)
    assert mesh.n_el == 800
    assert mesh.n_nodes == 2560
    assert len(mesh.gamma1) == 160
    assert mesh.n == 2400


def test_counts_follow_ring_formula():
    for na, nr in [(8, 2), (16, 3), (40, 5)]:
        mesh = generate_plate_with_hole(na, nr)
        assert mesh.n_el == na * nr
        assert mesh.n_nodes == 2 * na * (nr + 1) + na * nr
        assert len(mesh.gamma1) == 2 * na


def test_area_matches_square_minus_disk():
    mesh = generate_plate_with_hole()
    exact = 1.0 - np.pi * 0.25**2
    assert abs(mesh.area() - exact) < 1e-6


def test_dirichlet_nodes_on_outer_square_and_neumann_on_hole():
    mesh = generate_plate_with_hole(16, 3, 0.25, 0.5)
    x = mesh.nodes[mesh.gamma1]
    assert np.allclose(np.max(np.abs(x), axis=1), 0.5)
    interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.gamma1)
    assert np.all(np.max(np.abs(mesh.nodes[interior]), axis=1) < 0.5 - 1e-12)
    for e, edge in mesh.gamma2_edges:
        ids = mesh.elements[e][list(LOCAL_EDGES[edge])]
        assert np.allclose(np.hypot(*mesh.nodes[ids].T), 0.25)


def test_unit_square_counts():
    mesh = generate_unit_square(2, 2)
    assert mesh.n_el == 4
    assert mesh.n_nodes == 21
    assert len(mesh.gamma1) == 16
    assert mesh.n == 5
    assert abs(mesh.area() - 1.0) < 1e-14


@pytest.mark.parametrize("kwargs", [
    {"n_angular": 6}, {"n_angular": 10}, {"n_radial": 1}, {"hole_radius": 0.0}, {"hole_radius": 0.5},
])
def test_generator_rejects_bad_parameters(kwargs):
    with pytest.raises(ParameterError):
        generate_plate_with_hole(**kwargs)


def test_shape_functions_are_nodal():
    N = shape_values(REF[:, 0], REF[:, 1])
    assert np.allclose(N, np.eye(8), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(coord, coord)
def test_shape_functions_match_reference_and_partition_unity(xi, eta):
    N = shape_values(xi, eta)
    dN = shape_derivatives(xi, eta)
    N_ref, dN_ref = serendipity(xi, eta)
    assert np.allclose(N, N_ref, atol=1e-14)
    assert np.allclose(dN, dN_ref, atol=1e-14)
    assert abs(N.sum() - 1.0) < 1e-14
    assert np.allclose(dN.sum(axis=-1), 0.0, atol=1e-14)


def test_quadrature_integrates_quadratics_exactly():
    mesh = generate_unit_square(3, 2)
    qt = quadrature_table(mesh)
    x, y = qt.points.T
    assert abs(qt.weights @ (x * x) - 1 / 3) < 1e-14
    assert abs(qt.weights @ (x * y) - 1 / 4) < 1e-14
    assert qt.n_gp == 9 * mesh.n_el


def test_patch_test_on_curved_mesh_reproduces_linear_field():
    mesh = generate_plate_with_hole(16, 3)
    qt = quadrature_table(mesh)
    x, y = mesh.nodes.T
    u = 1 + 2 * x - 3 * y
    ue = u[mesh.elements[qt.element]]
    assert np.allclose(np.einsum("pca,pa->pc", qt.G, ue), [2.0, -3.0], atol=1e-12)
    px, py = qt.points.T
    assert np.allclose(np.einsum("pa,pa->p", qt.N, ue), 1 + 2 * px - 3 * py, atol=1e-12)


def test_patch_test_on_affine_mesh_reproduces_quadratic_field():
    sq = generate_unit_square(2, 3)
    qs = quadrature_table(sq)
    x, y = sq.nodes.T
    u = 1 + 2 * x - y + 0.5 * x * x + x * y
    grad = np.einsum("pca,pa->pc", qs.G, u[sq.elements[qs.element]])
    px, py = qs.points.T
    assert np.max(np.abs(grad - np.column_stack([2 + px + py, -1 + px]))) < 1e-12


def test_inverted_element_is_rejected():
    mesh = generate_unit_square(1, 1)
    el = mesh.elements.copy()
    el[0] = el[0][[1, 0, 3, 2, 4, 7, 6, 5]]
    bad = Mesh(mesh.nodes, el, mesh.gamma1)
    with pytest.raises(MeshError, match="element 0"):
        quadrature_table(bad)


def test_invalid_connectivity_is_rejected():
    mesh = generate_unit_square(1, 1)
    el = mesh.elements.copy()
    el[0, 1] = el[0, 0]
    with pytest.raises(MeshError):
        Mesh(mesh.nodes, el, mesh.gamma1)


def test_json_round_trip(tmp_path):
    mesh = generate_plate_with_hole(8, 2)
    path = tmp_path / "m.json"
    mesh.save(path)
    back = Mesh.load(path)
    assert np.array_equal(back.nodes, mesh.nodes)
    assert np.array_equal(back.elements, mesh.elements)
    assert back.mesh_id == mesh.mesh_id


def test_free_dofs_and_embedding():
    mesh = generate_plate_with_hole(8, 2)
    w = np.arange(mesh.n, dtype=float) + 1
    full = mesh.to_full(w)
    assert np.all(full[mesh.gamma1] == 0)
    assert np.array_equal(full[mesh.free_nodes], w)
    assert np.array_equal(mesh.dof_of_node[mesh.free_nodes], np.arange(mesh.n))


def test_interior_corner_node_touches_four_elements():
    mesh = generate_plate_with_hole(16, 3)
    counts = [len(mesh.node_elements[i]) for i in range(mesh.n_nodes)]
    assert max(counts) == 4
    assert min(counts) == 1
