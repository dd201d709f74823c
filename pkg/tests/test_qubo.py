import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_states, brute_force, dense_energy, random_instance
from quboalloc.analysis import Allocation, encode
from quboalloc.circuit import Gate, QuantumCircuit, interaction_summary
from quboalloc.device import DeviceModel, PathFidelityTable, SwapMode, all_pairs_distance, pairwise_success
from quboalloc.qubo import (
    BaseCoefficients,
    CoefficientForm,
    InfeasibleInstance,
    PenaltyConfig,
    QuboProblem,
    apply_penalties,
    base_penalty_magnitude,
    build_base_coefficients,
    energy,
    read_qubo,
    write_qubo,
)


def zero_base(n_c, n_p):
    empty = np.zeros(0, dtype=np.int64)
    return BaseCoefficients(n_c, n_p, np.zeros(n_c * n_p), empty, empty, np.zeros(0))


def hand_penalty(state, n_c, n_p, pen: PenaltyConfig):
    x = np.asarray(state).reshape(n_c, n_p)
    cols = ((x.sum(axis=0) - 1) ** 2).sum()
    rows = ((x.sum(axis=1) - 1) ** 2).sum()
    count = (x.sum() - n_c) ** 2
    return pen.phi * cols + pen.theta * rows + pen.gamma * count


def test_perfect_hardware_zeroes_every_coefficient():
    circ = QuantumCircuit(2, (Gate("h", (0,)), Gate("cx", (0, 1))))
    dev = DeviceModel.build(3, [(0, 1), (1, 2)])
    base = build_base_coefficients(interaction_summary(circ), dev, pairwise_success(dev))
    assert not base.linear.any()
    assert base.vals.size == 0


def test_folded_quadratic_coefficient():
    # g_pair[0][1] = 2, p_pair = e^-1, d = 2, exponent 3: 2 * (1 * 2 * 8) = 32
    circ = QuantumCircuit(2, (Gate("cx", (0, 1)), Gate("cx", (1, 0))))
    dev = DeviceModel.build(3, [(0, 2), (2, 1)])
    p_pair = np.full((3, 3), math.exp(-1))
    table = PathFidelityTable(p_pair, {}, SwapMode.ROUND_TRIP)
    base = build_base_coefficients(interaction_summary(circ), dev, table, CoefficientForm(3))
    q = base.as_problem().quadratic
    # logical 0 -> physical 0 is u=0, logical 1 -> physical 1 is v=3+1
    assert q[(0, 4)] == pytest.approx(32.0)
    assert (0, 3) not in q  # same physical qubit never gets a base term


def test_exponent_ratio_is_distance():
    _, dev, summary, b2 = random_instance(3, 3, 5, CoefficientForm(2))
    fid = pairwise_success(dev)
    b3 = build_base_coefficients(summary, dev, fid, CoefficientForm(3))
    d = all_pairs_distance(dev)
    assert np.array_equal(b2.rows, b3.rows)
    ratio = d[b2.rows % 5, b2.cols % 5]
    assert np.allclose(b3.vals, b2.vals * ratio, rtol=1e-12)


def test_form_toggles():
    circ, dev, summary, base = random_instance(5, 2, 3)
    fid = pairwise_success(dev)
    noerr = build_base_coefficients(summary, dev, fid, CoefficientForm(1, include_error=False))
    assert np.array_equal(noerr.linear, np.repeat(summary.g_single, 3).astype(float))
    nolin = build_base_coefficients(summary, dev, fid, CoefficientForm(3, linear_enabled=False))
    assert not nolin.linear.any()
    with pytest.raises(ValueError):
        CoefficientForm(0)


def test_infeasible_instance():
    circ = QuantumCircuit(3)
    dev = DeviceModel.build(2, [(0, 1)])
    with pytest.raises(InfeasibleInstance):
        build_base_coefficients(interaction_summary(circ), dev, pairwise_success(dev))


def test_single_variable_penalty():
    p = apply_penalties(zero_base(1, 1), PenaltyConfig(1, 1))
    assert p.linear.tolist() == [-2.0]
    assert p.offset == 2.0
    assert energy(p, [1]) == 0.0
    assert energy(p, [0]) == 2.0


def test_one_logical_two_physical_enumeration():
    p = apply_penalties(zero_base(1, 2), PenaltyConfig(1, 1))
    table = {tuple(s): energy(p, s) for s in all_states(2)}
    assert table[(1, 0)] == table[(0, 1)] == 1.0  # phi * (n_p - n_c)
    assert table[(0, 0)] == 3.0
    # theta*(2-1)^2 with both columns filled; the expanded form agrees
    assert table[(1, 1)] == 1.0
    assert table[(1, 1)] == hand_penalty((1, 1), 1, 2, PenaltyConfig(1, 1))


def test_gamma_off_touches_only_rows_and_columns():
    p = apply_penalties(zero_base(2, 3), PenaltyConfig(1.5, 2.5))
    for (u, v), w in p.quadratic.items():
        (i, j), (k, l) = divmod(u, 3), divmod(v, 3)
        assert i == k or j == l
        assert w == (2 * 2.5 if i == k else 2 * 1.5)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n_c=st.integers(1, 3),
    n_p=st.integers(1, 4),
    phi=st.floats(0.1, 50),
    theta=st.floats(0.1, 50),
    gamma=st.sampled_from([0.0, 0.7]),
)
def test_penalty_identity_exhaustive(seed, n_c, n_p, phi, theta, gamma):
    if n_c > n_p:
        n_c, n_p = n_p, n_c
    _, _, _, base = random_instance(seed, n_c, n_p)
    pen = PenaltyConfig(phi, theta, gamma)
    full = apply_penalties(base, pen)
    plain = base.as_problem()
    for s in all_states(n_c * n_p):
        expect = energy(plain, s) + hand_penalty(s, n_c, n_p, pen)
        assert energy(full, s) == pytest.approx(expect, rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n_c=st.integers(1, 5), extra=st.integers(0, 4))
def test_valid_allocations_pay_exactly_unused_columns(seed, n_c, extra):
    n_p = n_c + extra
    _, _, _, base = random_instance(seed, n_c, n_p)
    pen = PenaltyConfig(3.0, 5.0)
    full = apply_penalties(base, pen)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        mapping = tuple(int(q) for q in rng.permutation(n_p)[:n_c])
        x = encode(Allocation(mapping), n_p)
        assert energy(full, x) - energy(base.as_problem(), x) == pytest.approx(pen.phi * (n_p - n_c), abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(0.01, 100))
def test_uniform_scaling_preserves_argmin(seed, c):
    _, _, _, base = random_instance(seed, 2, 3)
    m = base_penalty_magnitude(base)
    p = apply_penalties(base, PenaltyConfig(m, m))
    _, argmin = brute_force(p)
    _, argmin_scaled = brute_force(p.scaled(c))
    assert argmin == argmin_scaled


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n_c=st.integers(1, 3), n_p=st.integers(3, 4))
def test_base_energy_nonnegative(seed, n_c, n_p):
    _, _, _, base = random_instance(seed, n_c, n_p)
    assert np.all(base.vals >= 0) and np.all(base.linear >= 0)
    plain = base.as_problem()
    assert all(energy(plain, s) >= 0 for s in all_states(n_c * n_p))


def test_penalty_magnitude():
    b = BaseCoefficients(1, 3, np.array([3.0, -7.0, 2.0]), np.zeros(0, np.int64), np.zeros(0, np.int64),
                         np.zeros(0))
    assert base_penalty_magnitude(b) == 7.0
    assert base_penalty_magnitude(zero_base(2, 3)) == 1.0


def test_penalty_magnitude_positive_on_melbourne(melbourne_instance):
    assert base_penalty_magnitude(melbourne_instance.base) > 0


def test_energy_edge_cases():
    p = apply_penalties(zero_base(2, 2), PenaltyConfig(1.0, 2.0))
    assert energy(p, np.zeros(4)) == p.offset
    with pytest.raises(ValueError):
        energy(p, np.zeros(5))


def test_energy_matches_exhaustive_oracle_12_vars():
    rng = np.random.default_rng(2024)
    quad = {(u, v): float(rng.normal()) for u in range(12) for v in range(u + 1, 12) if rng.random() < 0.5}
    p = QuboProblem.from_terms(3, 4, rng.normal(size=12), quad, offset=1.25)
    for s in all_states(12):
        assert energy(p, s) == pytest.approx(dense_energy(p, s), rel=1e-12, abs=1e-12)


def test_from_terms_folds_orientation():
    p = QuboProblem.from_terms(1, 3, np.zeros(3), {(2, 0): 1.0, (0, 2): 0.5, (1, 2): 0.0})
    assert p.quadratic == {(0, 2): 1.5}
    with pytest.raises(ValueError):
        QuboProblem.from_terms(1, 3, np.zeros(3), {(1, 1): 1.0})


def test_qubo_file_round_trip(tmp_path):
    _, _, _, base = random_instance(7, 3, 4)
    p = apply_penalties(base, PenaltyConfig(4.0, 6.0, 0.5))
    path = tmp_path / "q.txt"
    write_qubo(p, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# n_logical 3 n_physical 4")
    assert lines[1].startswith("# offset")
    back = read_qubo(path)
    assert back.offset == p.offset
    assert np.array_equal(back.linear, p.linear)
    assert back.quadratic == p.quadratic
