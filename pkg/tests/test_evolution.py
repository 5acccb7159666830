"""Tests for the Hamiltonian, period detection, the zero tracker and path bundles."""
import csv
import json
import logging
import math

import numpy as np
import pytest

from analytic_rep import Cell, QuantumState, ZeroSet
from errors import ConfigError, DomainError, StepRejectedError
from evolution import (
    Hamiltonian, PathBundle, TrackerConfig, _advance, detect_period,
    finite_difference_derivatives, norm_constraint_residual, oracle_evolve,
    resolve_dt, step, track, zero_derivatives,
)
from paths import classify, compare_classifications
from zeros import find_zeros, match_on_cover, state_from_zeros
from tests.conftest import (
    H_BLOCK_4, H_BLOCK_5, H_RATIONAL_3, ZEROS_FOUR_CYCLE, ZEROS_JOINED, ZEROS_SEPARATE, ZEROS_SWAP,
    ZEROS_WINDING,
)


# ── Hamiltonian ───────────────────────────────────────────────────────────

def test_rejects_non_hermitian():
    with pytest.raises(DomainError):
        Hamiltonian([[0, 1], [0, 0]])


def test_rejects_non_square():
    with pytest.raises(DomainError):
        Hamiltonian([[1, 0, 0], [0, 1, 0]])


def test_from_list_names_field():
    with pytest.raises(ConfigError, match="hamiltonian"):
        Hamiltonian.from_list([[1, 2], [3, 4]])


def test_from_list_accepts_complex_pairs():
    H = Hamiltonian.from_list([[1, [0, 1]], [[0, -1], 2]])
    assert H.h[0, 1] == 1j


def test_propagator_at_zero_is_identity(h_block_4):
    np.testing.assert_array_equal(h_block_4.propagator(0.0), np.eye(4))


def test_propagator_is_unitary(h_block_5):
    U = h_block_5.propagator(0.731)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(5), atol=1e-12)


def test_propagator_over_one_period(h_block_4):
    np.testing.assert_allclose(h_block_4.propagator(2 * math.pi), np.eye(4), atol=1e-10)


def test_propagator_returns_to_a_phase(h_rational_3):
    np.testing.assert_allclose(h_rational_3.propagator(5 * math.pi), 1j * np.eye(3), atol=1e-10)


# ── Period detection ──────────────────────────────────────────────────────

def test_period_of_block_hamiltonian(h_block_4):
    T, theta = detect_period(h_block_4)
    assert T == pytest.approx(2 * math.pi)
    assert theta == pytest.approx(0.0, abs=1e-9)


def test_period_with_phase(h_rational_3):
    T, theta = detect_period(h_rational_3)
    assert T == pytest.approx(5 * math.pi)
    assert theta == pytest.approx(math.pi / 2)


def test_period_of_five_dimensional_block(h_block_5):
    T, _ = detect_period(h_block_5)
    assert T == pytest.approx(2 * math.pi)


def test_irrational_spectrum_has_no_period():
    assert detect_period(Hamiltonian(np.diag([0.0, 1.0, math.sqrt(2)]))) is None


def test_scalar_hamiltonian_has_no_period():
    assert detect_period(Hamiltonian(np.eye(3))) is None


def test_resolve_dt():
    assert resolve_dt(Hamiltonian(H_BLOCK_4), TrackerConfig()) == pytest.approx(2 * math.pi / 5000)
    assert resolve_dt(Hamiltonian(np.diag([0.0, 1.0, math.sqrt(2)])), TrackerConfig()) == 1e-3
    assert resolve_dt(Hamiltonian(H_BLOCK_4), TrackerConfig(dt=0.01)) == 0.01


# ── Derivative formula ────────────────────────────────────────────────────

@pytest.mark.parametrize("d", [2, 3, 4])
def test_zero_derivatives_match_finite_differences(d, random_state):
    state = random_state(d)
    zeros = np.asarray(find_zeros(state).zeros)
    exact = zero_derivatives(state, zeros)
    approx = finite_difference_derivatives(state, zeros)
    assert np.max(np.abs(exact - approx)) / np.max(np.abs(exact)) < 1e-4


def test_scaling_the_state_does_not_move_zeros(random_state):
    state = random_state(3)
    zeros = np.asarray(find_zeros(state).zeros)
    J = zero_derivatives(state, zeros)
    assert np.max(np.abs(J @ state.g)) < 1e-8


def test_norm_constraint_holds_for_hermitian_generator(random_state, h_block_4):
    state = random_state(4)
    delta = 1j * 1e-3 * (h_block_4.h @ state.g)
    assert abs(norm_constraint_residual(state, delta)) < 1e-15


# ── Single steps ──────────────────────────────────────────────────────────

def test_zero_hamiltonian_leaves_zeros_fixed(random_state):
    state = random_state(3)
    zeros = np.asarray(find_zeros(state).zeros)
    new_state, moved = step(state, zeros, Hamiltonian(np.zeros((3, 3))), 0.01)
    np.testing.assert_allclose(moved, zeros, atol=1e-12)
    np.testing.assert_allclose(new_state.g, state.g, atol=1e-15)


def test_scalar_hamiltonian_only_changes_phase(random_state):
    state = random_state(3)
    zeros = np.asarray(find_zeros(state).zeros)
    new_state, moved = step(state, zeros, Hamiltonian(2.5 * np.eye(3)), 0.01)
    np.testing.assert_allclose(moved, zeros, atol=1e-10)
    np.testing.assert_allclose(new_state.g, np.exp(0.025j) * state.g, atol=1e-14)


def test_step_agrees_with_refound_zeros(random_state, h_block_4):
    state = random_state(4)
    cell = Cell(4)
    zeros = np.asarray(find_zeros(state).zeros)
    new_state, moved = step(state, zeros, h_block_4, 1e-3)
    expected = QuantumState.from_coefficients(h_block_4.propagator(1e-3) @ state.g)
    refound = match_on_cover(zeros, find_zeros(expected, cell).zeros, cell).lifted
    np.testing.assert_allclose(moved, refound, atol=1e-8)


def test_step_without_polish_is_first_order(random_state, h_block_4):
    state = random_state(4)
    zeros = np.asarray(find_zeros(state).zeros)
    _, polished = step(state, zeros, h_block_4, 1e-3)
    _, predicted = step(state, zeros, h_block_4, 1e-3, polish=False)
    assert 0 < np.max(np.abs(polished - predicted)) < 1e-4


def test_failed_polish_rejects_step(random_state, h_block_4, mocker):
    state = random_state(4)
    zeros = np.asarray(find_zeros(state).zeros)
    mocker.patch("evolution.refine_zeros", return_value=(zeros, np.array([True, False, True, True])))
    with pytest.raises(StepRejectedError):
        step(state, zeros, h_block_4, 1e-3)


def test_rejected_step_is_retried_with_substeps(random_state, h_block_4, mocker, caplog):
    state = random_state(4)
    zeros = np.zeros(4, dtype=complex)
    fake = mocker.patch("evolution.step", side_effect=[
        StepRejectedError("too far"), (state, zeros), (state, zeros),
    ])
    with caplog.at_level(logging.WARNING):
        _advance(state, zeros, h_block_4, 1e-3, TrackerConfig(), True, 0.0)
    assert fake.call_count == 3
    assert fake.call_args.args[3] == pytest.approx(5e-4)
    assert "halving dt" in caplog.text


def test_step_gives_up_after_repeated_rejection(random_state, h_block_4, mocker):
    state = random_state(4)
    mocker.patch("evolution.step", side_effect=StepRejectedError("never"))
    mocker.patch("evolution.MAX_HALVINGS", 2)
    with pytest.raises(StepRejectedError, match="2 halvings"):
        _advance(state, np.zeros(4, dtype=complex), h_block_4, 1e-3, TrackerConfig(), True, 0.0)


# ── Tracker ───────────────────────────────────────────────────────────────

def test_tracker_config_validation():
    with pytest.raises(DomainError):
        TrackerConfig(dt=-1.0)
    with pytest.raises(DomainError):
        TrackerConfig(coefficient_update="rk4")
    with pytest.raises(DomainError):
        TrackerConfig(record_every=0)


def test_track_requires_exactly_one_initial_condition(random_state, h_block_4):
    with pytest.raises(DomainError):
        track(h_block_4, 0.1)
    with pytest.raises(DomainError):
        track(h_block_4, 0.1, state0=random_state(4), zeros0=ZEROS_SWAP)


def test_track_rejects_non_positive_end(random_state, h_block_4):
    with pytest.raises(DomainError):
        track(h_block_4, 0.0, state0=random_state(4))


def test_track_hits_end_time_exactly(random_state, h_block_4):
    bundle = track(h_block_4, 0.05, TrackerConfig(dt=0.003), state0=random_state(4))
    assert bundle.times[-1] == pytest.approx(0.05, abs=1e-15)
    assert np.all(np.diff(bundle.times) > 0)
    assert bundle.config["dt"] * (bundle.times.size - 1) == pytest.approx(0.05)


def test_track_keeps_given_labels(h_block_4):
    bundle = track(h_block_4, 0.01, TrackerConfig(dt=1e-3), zeros0=ZEROS_SWAP)
    for n, z in enumerate(ZEROS_SWAP[:3]):
        assert bundle.lifted[0, n] == pytest.approx(z)


def test_tracker_follows_oracle(random_state, h_block_4):
    state = random_state(4)
    bundle = track(h_block_4, 0.2, TrackerConfig(dt=2e-3), state0=state)
    times = bundle.times[::20]
    reference = oracle_evolve(state, h_block_4, times, anchor=bundle.lifted[0])
    np.testing.assert_allclose(bundle.lifted[::20], reference.lifted, atol=1e-6)


def test_halving_dt_does_not_increase_error(random_state, h_block_4):
    state = random_state(4)
    cell = Cell(4)
    exact = find_zeros(QuantumState.from_coefficients(h_block_4.propagator(0.2) @ state.g), cell)
    errors = []
    for dt in (2e-3, 1e-3):
        end = track(h_block_4, 0.2, TrackerConfig(dt=dt), state0=state).lifted[-1]
        matched = match_on_cover(end, exact.zeros, cell).lifted
        errors.append(float(np.max(np.abs(matched - end))))
    assert errors[1] <= max(errors[0], 1e-9)


def test_tracker_keeps_constraint(random_state, h_block_4):
    bundle = track(h_block_4, 0.1, TrackerConfig(dt=1e-3), state0=random_state(4))
    assert np.max(bundle.constraint_defects()) < 1e-8


def test_record_every_thins_samples(random_state, h_block_4):
    bundle = track(h_block_4, 0.02, TrackerConfig(dt=1e-3, record_every=5), state0=random_state(4))
    assert bundle.times.size == 5


def test_progress_is_logged(random_state, h_block_4, caplog):
    with caplog.at_level(logging.INFO):
        track(h_block_4, 0.01, TrackerConfig(dt=1e-3), state0=random_state(4))
    assert "[10/10] Tracker progress" in caplog.text


# ── Path bundles ──────────────────────────────────────────────────────────

def _bundle():
    cell = Cell(2)
    times = [0.0, 0.5, 1.0]
    lifted = [[0.5 + 0.5j, 2.0 + 2.0j], [1.0 + 0.5j, 2.0 + 2.5j], [1.5 + 0.5j, 2.0 + 3.0j]]
    initial = ZeroSet.from_representatives(lifted[0], cell)
    return PathBundle(times, lifted, cell, initial, {"kind": "test"}, {"dt": 0.5})


def test_bundle_rejects_unsorted_times():
    cell = Cell(2)
    initial = ZeroSet.from_representatives([0.5 + 0.5j, 2.0 + 2.0j], cell)
    with pytest.raises(DomainError):
        PathBundle([0.0, 0.0], [[0.5 + 0.5j, 2 + 2j]] * 2, cell, initial)


def test_bundle_arrays_are_read_only():
    with pytest.raises(ValueError):
        _bundle().lifted[0, 0] = 0


def test_position_interpolates():
    assert _bundle().position(0.25)[0] == pytest.approx(0.75 + 0.5j)


def test_csv_layout(tmp_path):
    path = tmp_path / "paths.csv"
    _bundle().write_csv(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "path_index", "re_lifted", "im_lifted", "re_cell", "im_cell"]
    assert len(rows) == 1 + 3 * 2
    assert rows[1] == ["0.0", "0", "0.5", "0.5", "0.5", "0.5"]


def test_json_round_trip(tmp_path):
    path = tmp_path / "paths.json"
    bundle = _bundle()
    bundle.write_json(path)
    again = PathBundle.read_json(path)
    np.testing.assert_array_equal(again.lifted, bundle.lifted)
    np.testing.assert_array_equal(again.times, bundle.times)
    assert again.config == {"dt": 0.5}


def test_malformed_bundle_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        PathBundle.read_json(path)


def test_bundle_missing_paths():
    with pytest.raises(ConfigError, match="paths"):
        PathBundle.from_dict({"d": 2, "times": [0.0]})


@pytest.mark.parametrize("change, field", [
    ({"d": "2"}, "d"),
    ({"cell": "ab"}, "cell"),
    ({"cell": [0, 0.5]}, "cell"),
    ({"times": "0,1"}, "times"),
    ({"paths": [3, 4]}, "paths"),
])
def test_bundle_json_names_bad_field(change, field):
    data = {**_bundle().to_dict(), **change}
    with pytest.raises(ConfigError) as excinfo:
        PathBundle.from_dict(data)
    assert excinfo.value.field == field


def test_bundle_json_is_plain(tmp_path):
    path = tmp_path / "paths.json"
    _bundle().write_json(path)
    data = json.loads(path.read_text())
    assert data["paths"][0][0] == [0.5, 0.5]


# ── Periodic evolution end to end ─────────────────────────────────────────

@pytest.mark.slow
def test_block_hamiltonian_swaps_two_zeros():
    H = Hamiltonian(H_BLOCK_4)
    T = 2 * math.pi
    bundle = track(H, 2 * T, zeros0=ZEROS_SWAP)
    result = classify(bundle, T)
    assert result.permutation == (3, 1, 2, 0)
    assert sorted(result.cycle_type.elements()) == [1, 1, 2]
    assert result.max_residual < 1e-4


@pytest.mark.slow
def test_block_hamiltonian_four_cycle():
    H = Hamiltonian(H_BLOCK_4)
    T = 2 * math.pi
    bundle = track(H, 4 * T, zeros0=ZEROS_FOUR_CYCLE)
    result = classify(bundle, T)
    assert result.permutation == (2, 0, 3, 1)
    assert result.cycle_type == {4: 1}
    assert result.max_residual < 1e-4


@pytest.mark.slow
def test_rational_hamiltonian_windings():
    H = Hamiltonian(H_RATIONAL_3)
    T = 5 * math.pi
    bundle = track(H, T, zeros0=ZEROS_WINDING)
    result = classify(bundle, T)
    assert result.cycle_type == {1: 3}
    windings = sorted(c.winding for c in result.cycles)
    # the lifted sum of the zeros is conserved, so single-period windings cancel
    assert windings == [(0, -1), (0, 0), (0, 1)]
    assert sorted((abs(a), abs(b)) for a, b in windings) == [(0, 0), (0, 1), (0, 1)]


@pytest.mark.slow
def test_nearby_start_joins_two_paths():
    H = Hamiltonian(H_BLOCK_5)
    T = 2 * math.pi
    separate = classify(track(H, 2 * T, zeros0=ZEROS_SEPARATE), T)
    joined = classify(track(H, 2 * T, zeros0=ZEROS_JOINED), T)
    diff = compare_classifications(separate, joined)
    assert diff.removed == {1: 2}
    assert diff.added == {2: 1}
    assert "joined" in diff.describe()[0]


EXPERIMENTS = {
    "block4_swap": (H_BLOCK_4, ZEROS_SWAP, 2 * math.pi),
    "block4_four_cycle": (H_BLOCK_4, ZEROS_FOUR_CYCLE, 2 * math.pi),
    "rational3_winding": (H_RATIONAL_3, ZEROS_WINDING, 5 * math.pi),
    "block5_separate": (H_BLOCK_5, ZEROS_SEPARATE, 2 * math.pi),
    "block5_joined": (H_BLOCK_5, ZEROS_JOINED, 2 * math.pi),
}


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_experiment_paths_match_rerooting(name):
    h, zeros0, T = EXPERIMENTS[name]
    H = Hamiltonian(h)
    cell = Cell(H.d)
    bundle = track(H, T, zeros0=zeros0)
    assert bundle.times[1] == pytest.approx(T / 5000)
    assert np.max(bundle.constraint_defects()) < 1e-6

    state0 = state_from_zeros(bundle.lifted[0], cell)
    for k in np.linspace(0, bundle.times.size - 1, 100).astype(int):
        state = QuantumState.from_coefficients(H.propagator(bundle.times[k]) @ state0.g)
        found = find_zeros(state, cell)
        matched = match_on_cover(bundle.lifted[k], found.zeros, cell).lifted
        assert np.max(np.abs(matched - bundle.lifted[k])) < 1e-5


@pytest.mark.slow
def test_time_reversal_returns_to_start(random_state, h_block_4):
    state = random_state(4)
    forward = track(h_block_4, 1.0, TrackerConfig(dt=1e-3), state0=state)
    back_state = QuantumState.from_coefficients(h_block_4.propagator(1.0) @ state.g)
    backward = track(-h_block_4, 1.0, TrackerConfig(dt=1e-3), state0=back_state)
    cell = Cell(4)
    end = backward.lifted[-1]
    for z in forward.lifted[0]:
        assert np.min(cell.lattice_distance(z, end)) < 1e-6
