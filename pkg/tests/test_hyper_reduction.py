import numpy as np
import pytest

from redux.deim import greedy_indices
from redux.errors import ParameterError, RankError
from redux.galerkin_rb import rb_solve
from redux.hyper_reduction import (
    ReducedIntegrationDomain,
    grow_layer,
    hr_equals_deim_check,
    hr_offline,
    hr_solve,
    interior_dofs,
    rid_from_elements,
)
from redux.mesh import quadrature_table
from redux.model import ParameterVector
from redux.pod import ReducedBasis, collect_snapshots, parameter_grid, pod_basis
from redux.sampling import elements_touching

PARAMS = [ParameterVector(1, 1, 2), ParameterVector(0.3, 0.7, 1.2), ParameterVector(0.9, 0.1, 1.6)]


@pytest.fixture(scope="module")
def small_basis(small_plate):
    snaps = collect_snapshots(small_plate, parameter_grid(3))
    return pod_basis(snaps, small_plate, m=3)


def test_interior_matches_integral_definition(medium_plate, rng):
    mesh = medium_plate
    qt = quadrature_table(mesh)
    elements = np.unique(rng.choice(mesh.n_el, 15, replace=False))
    interior = set(interior_dofs(mesh, elements).tolist())
    outside = ~np.isin(qt.element, elements)
    phi = qt.N[outside] ** 2 * qt.weights[outside, None]
    ids = mesh.elements[qt.element[outside]]
    mass_outside = np.zeros(mesh.n_nodes)
    np.add.at(mass_outside, ids, phi)
    for dof, node in enumerate(mesh.free_nodes):
        assert (dof in interior) == (mass_outside[node] == 0.0)


def test_rid_grows_monotonically_with_layers(medium_offline):
    _, basis = medium_offline
    rids = [hr_offline(basis, layers=k, auto_grow=False) for k in range(1, 4)]
    for a, b in zip(rids, rids[1:]):
        assert set(a.elements) <= set(b.elements)
        assert a.l <= b.l
        assert set(a.interior) <= set(a.rid_dofs)
        assert a.l <= a.l_bar


def test_single_element_gradient_seeds_that_element(small_plate):
    mesh = small_plate
    node = next(i for i in mesh.free_nodes if len(mesh.node_elements[i]) == 1)
    V = np.zeros((mesh.n, 1))
    V[mesh.dof_of_node[node], 0] = 1.0
    rid = hr_offline(ReducedBasis(mesh, V), layers=0)
    assert rid.elements.tolist() == [mesh.node_elements[node][0]]
    assert mesh.dof_of_node[node] in rid.interior


def test_full_rid_reproduces_rb(small_plate, small_basis):
    rid = rid_from_elements(small_plate, np.arange(small_plate.n_el))
    Z = rid.Z(small_plate.n)
    assert Z.shape == (small_plate.n, small_plate.n)
    assert np.array_equal(Z @ Z.T, np.eye(small_plate.n))
    for p in PARAMS:
        a = hr_solve(small_basis, rid, p)
        b = rb_solve(small_basis, p)
        assert len(a.iterates) == len(b.iterates)
        assert max(np.max(np.abs(x - y)) for x, y in zip(a.iterates, b.iterates)) < 1e-12


def test_synthetic_six_row_projector_equals_deim(small_plate, small_basis):
    mesh = small_plate
    # rows picked by the greedy over a richer basis keep the projected system well posed
    wider = pod_basis(collect_snapshots(mesh, parameter_grid(3)), mesh, m=6)
    dofs = np.sort(greedy_indices(wider.V)[0])
    assert len(dofs) == 6
    elements = elements_touching(mesh, dofs)
    nodes = np.unique(mesh.elements[elements])
    d = mesh.dof_of_node[nodes]
    rid = ReducedIntegrationDomain(elements, dofs, nodes, np.sort(d[d >= 0]), 0, elements)
    out = hr_equals_deim_check(small_basis, rid, PARAMS)
    assert out["parameters"] == 3
    assert out["max_discrepancy"] <= 1e-12


def test_full_projector_equals_deim_and_rb(small_plate, small_basis):
    rid = rid_from_elements(small_plate, np.arange(small_plate.n_el))
    assert hr_equals_deim_check(small_basis, rid, PARAMS)["max_discrepancy"] <= 1e-12


def test_too_few_interior_points(small_plate, medium_offline):
    snaps = collect_snapshots(small_plate, parameter_grid(3))
    rid = rid_from_elements(small_plate, [0, 1])
    with pytest.raises(RankError, match="add more surrounding elements"):
        hr_solve(pod_basis(snaps, small_plate, m=12), rid, PARAMS[0])
    _, basis = medium_offline
    with pytest.raises(RankError, match="layers"):
        hr_offline(basis, layers=0)
    grown = hr_offline(basis, layers=0, auto_grow=True)
    assert grown.l >= basis.m
    assert grown.layers >= 1


def test_zero_gradient(medium_offline):
    _, basis = medium_offline
    state = hr_solve(basis, hr_offline(basis, layers=1), ParameterVector(0, 0, 1.5))
    assert state.report.iterations == 1
    assert np.all(state.gamma == 0)


def test_constitutive_cost_is_rid_quadrature(medium_offline, medium_plate):
    _, basis = medium_offline
    rid = hr_offline(basis, layers=1)
    state = hr_solve(basis, rid, PARAMS[0])
    assert state.report.counters.c_const == state.report.iterations * 9 * len(rid.elements)


def test_layer_growth_and_validation(small_plate, small_basis):
    grown = grow_layer(small_plate, np.array([0]))
    shared = {e for i in small_plate.elements[0] for e in small_plate.node_elements[i]}
    assert set(grown) == shared
    with pytest.raises(ParameterError):
        hr_offline(small_basis, layers=-1)
    with pytest.raises(ParameterError):
        rid_from_elements(small_plate, [small_plate.n_el])


def test_json_round_trip(medium_offline):
    _, basis = medium_offline
    rid = hr_offline(basis, layers=1)
    back = ReducedIntegrationDomain.from_dict(rid.to_dict())
    assert np.array_equal(back.interior, rid.interior)
    assert back.l_bar == rid.l_bar
