"""Tests for the analytic representation, cells, scalar product and product form."""
import math

import numpy as np
import pytest

from analytic_rep import (
    AnalyticFunction, Cell, QuantumState, ZeroSet, coefficients_from_function,
    compute_normalization, conjugate_state, constraint_constant,
    effective_cell_index, evaluate, evaluate_with_derivative, product_form,
    reconstruct_from_zeros, scalar_product, sum_constraint_defect,
)
from errors import ConfigError, DomainError, PreconditionError
from zeros import find_zeros
from tests.conftest import ZEROS_SWAP


# ── QuantumState ──────────────────────────────────────────────────────────

def test_state_requires_normalization():
    with pytest.raises(DomainError):
        QuantumState([1.0, 1.0])


def test_from_coefficients_normalizes():
    state = QuantumState.from_coefficients([3.0, 4.0j])
    assert np.sum(np.abs(state.g) ** 2) == pytest.approx(1.0)
    assert state.d == 2


def test_state_is_read_only():
    state = QuantumState([1.0, 0.0])
    with pytest.raises(ValueError):
        state.g[0] = 2.0


def test_state_json_round_trip():
    state = QuantumState.from_coefficients([1.0, 2.0 - 1.0j, 0.5j])
    again = QuantumState.from_dict(state.to_dict())
    np.testing.assert_allclose(again.g, state.g)


def test_state_json_names_bad_field():
    with pytest.raises(ConfigError, match=r"state\.g\[1\]"):
        QuantumState.from_dict({"d": 2, "g": [[1, 0], "oops"]})


def test_conjugate_state():
    state = QuantumState.from_coefficients([1.0j, 1.0])
    np.testing.assert_allclose(conjugate_state(state).g, np.conj(state.g))


# ── Cell ──────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("d, side", [(3, 4.34), (4, 5.01), (5, 5.60)])
def test_cell_side(d, side):
    assert Cell(d).side == pytest.approx(side, abs=1e-2)


def test_reduce_is_lattice_modular():
    cell = Cell(4)
    z = 1.2 + 0.7j
    assert cell.reduce(z + cell.side * (2 - 3j)) == pytest.approx(z)


def test_reduce_lands_in_half_open_cell():
    cell = Cell(3, 1, -1)
    points = np.array([-7.5 + 20j, cell.origin, cell.origin + cell.side])
    assert np.all(cell.contains(cell.reduce(points)))


def test_reduce_leaves_cell_points_unchanged():
    cell = Cell(2)
    points = np.array([0.5 + 0.5j, 1 + 1j, cell.side * (0.3 + 0.9j), 1e-300 + 0j])
    np.testing.assert_array_equal(cell.reduce(points), points)
    assert cell.reduce(0.5 + 0.5j + cell.side) == pytest.approx(0.5 + 0.5j)


def test_nearest_representative():
    cell = Cell(4)
    z = 0.5 + 0.5j
    rep = cell.nearest_representative(z, 0.4 + 0.5j + cell.side * (1 + 1j))
    assert rep == pytest.approx(z + cell.side * (1 + 1j))


def test_lattice_distance_wraps():
    cell = Cell(4)
    assert cell.lattice_distance(0.01, cell.side - 0.01) == pytest.approx(0.02)


# ── Evaluation ────────────────────────────────────────────────────────────

def test_dimension_mismatch_rejected():
    with pytest.raises(DomainError):
        AnalyticFunction(QuantumState([1.0, 0.0]), Cell(3))


def test_real_period(random_state):
    G = AnalyticFunction(random_state(4))
    z = 1.3 + 0.4j
    side = G.cell.side
    assert evaluate(G, z + side).to_complex() == pytest.approx(evaluate(G, z).to_complex(), rel=1e-10)


def test_imaginary_quasi_period(random_state):
    d = 3
    G = AnalyticFunction(random_state(d))
    z = 0.8 + 0.3j
    c = math.sqrt(math.pi / (2 * d))
    factor = np.exp(math.pi * d - 2j * d * c * z)
    shifted = evaluate(G, z + 1j * G.cell.side).to_complex()
    assert shifted == pytest.approx(factor * evaluate(G, z).to_complex(), rel=1e-9)


def test_derivative_matches_finite_difference(random_state):
    G = AnalyticFunction(random_state(3))
    z, h = 1.1 + 2.2j, 1e-6
    numeric = (evaluate(G, z + h).to_complex() - evaluate(G, z - h).to_complex()) / (2 * h)
    _, deriv = evaluate_with_derivative(G, z)
    assert deriv.to_complex() == pytest.approx(numeric, rel=1e-6)


def test_vector_evaluation_shape(random_state):
    G = AnalyticFunction(random_state(2))
    values = evaluate(G, np.zeros((3, 4), dtype=complex))
    assert np.shape(values.value) == (3, 4)


# ── Scalar product ────────────────────────────────────────────────────────

def test_scalar_product_of_basis_states():
    e0 = QuantumState([1.0, 0.0, 0.0])
    e1 = QuantumState([0.0, 1.0, 0.0])
    assert abs(scalar_product(e0, e0).value - 1.0) < 1e-6
    assert abs(scalar_product(e0, e1).value) < 1e-6


def test_scalar_product_is_bilinear_without_conjugation(random_state):
    f, g = random_state(3), random_state(3)
    result = scalar_product(conjugate_state(f), g)
    assert result.accurate
    assert abs(result.value - np.vdot(f.g, g.g)) < 1e-6


def test_low_resolution_quadrature_warns(random_state):
    f = random_state(2)
    result = scalar_product(f, f, quadrature_n=16)
    assert not result.accurate


def test_coefficients_from_function(random_state):
    state = random_state(4)
    result = coefficients_from_function(AnalyticFunction(state), 4)
    np.testing.assert_allclose(result.value, state.g, atol=1e-5)


# ── Sum constraint and product form ───────────────────────────────────────

def test_constraint_constant():
    assert constraint_constant(4) == pytest.approx(8 * math.sqrt(math.pi / 2) * (1 + 1j))


def test_listed_zero_set_is_close_to_constraint():
    assert sum_constraint_defect(ZEROS_SWAP, Cell(4)) < 0.01


def test_effective_cell_index_of_listed_zeros():
    assert effective_cell_index(ZEROS_SWAP, 4) == (-1, -1)


def test_product_form_reproduces_state(random_state):
    state = random_state(4)
    zs = find_zeros(state)
    form, norm = reconstruct_from_zeros(zs, state)
    G = AnalyticFunction(state)
    for z in (0.3 + 0.2j, 2.7 + 4.1j, -1.0 + 0.5j):
        assert form(z).to_complex() == pytest.approx(evaluate(G, z).to_complex(), rel=1e-8)


def test_product_form_accepts_lifted_zeros(random_state):
    state = random_state(3)
    zs = find_zeros(state)
    lifted = np.array(zs.zeros)
    lifted[0] += zs.cell.side * (1 + 2j)
    form, _ = reconstruct_from_zeros(lifted, state)
    z = 1.7 + 0.9j
    assert form(z).to_complex() == pytest.approx(evaluate(AnalyticFunction(state), z).to_complex(), rel=1e-8)


def test_normalization_independent_of_reference_point(random_state):
    state = random_state(3)
    zs = find_zeros(state)
    a = compute_normalization(state, zs, 0.5 + 0.5j)
    b = compute_normalization(state, zs, 3.9 + 3.9j)
    assert a.to_complex() == pytest.approx(b.to_complex(), rel=1e-8)


def test_normalization_rejects_reference_on_a_zero(random_state):
    state = random_state(3)
    zs = find_zeros(state)
    with pytest.raises(PreconditionError):
        compute_normalization(state, zs, zs.zeros[0])


def test_reconstruct_rejects_constraint_violation():
    with pytest.raises(PreconditionError):
        reconstruct_from_zeros([0.1, 0.2, 0.3])


def test_product_form_vanishes_at_zeros(random_state):
    zs = find_zeros(random_state(3))
    values = product_form(zs.zeros, 3, np.asarray(zs.zeros))
    assert np.all(np.abs(values.to_complex()) < 1e-10)


# ── ZeroSet ───────────────────────────────────────────────────────────────

def test_zero_set_json_round_trip():
    zs = ZeroSet.from_representatives(ZEROS_SWAP, Cell(4))
    again = ZeroSet.from_dict(zs.to_dict())
    np.testing.assert_allclose(again.zeros, zs.zeros)


def test_zero_set_requires_d_zeros():
    with pytest.raises(DomainError):
        ZeroSet([0.1 + 0.1j], Cell(2))


def test_zero_set_requires_cell_membership():
    with pytest.raises(DomainError):
        ZeroSet([-1.0, 0.5], Cell(2))
