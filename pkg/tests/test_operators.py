import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpdphs.grid import make_grid
from gpdphs.operators import (
    check_skew,
    diff_matrix_sbp,
    sbp_boundary,
    sbp_norm,
    string_structure,
    structure_from_spec,
    variational_derivative,
)

grid_sizes = st.integers(3, 120)
lengths = st.floats(0.1, 50.0)


@given(grid_sizes, lengths)
def test_sbp_identity(N, L):
    g = make_grid(L, N)
    D = diff_matrix_sbp(g).D
    H = sbp_norm(g)
    assert np.max(np.abs(H @ D + D.T @ H - sbp_boundary(N))) < 1e-12


@given(grid_sizes, lengths, st.floats(-10, 10), st.floats(-10, 10))
def test_exact_on_linear_polynomials(N, L, a, b):
    g = make_grid(L, N)
    D = diff_matrix_sbp(g).D
    np.testing.assert_allclose(D @ np.full(N, a), 0.0, atol=1e-12 * max(1, abs(a)) / g.dz)
    np.testing.assert_allclose(D @ (b * g.nodes), b, atol=1e-9 * max(1, abs(b)))


def test_constant_annihilated_exactly():
    # the stencil subtracts before scaling; a dense BLAS product may fuse
    # multiply-adds and leave rounding residue instead
    dm = diff_matrix_sbp(make_grid(10, 30))
    assert np.all(dm.apply(np.full(30, 3.7)) == 0.0)


def test_nodes_to_ones():
    D = diff_matrix_sbp(make_grid(10, 401)).D
    np.testing.assert_allclose(D @ make_grid(10, 401).nodes, 1.0, rtol=0, atol=1e-12)


def test_stencil_values():
    D = diff_matrix_sbp(make_grid(2.0, 5)).D  # dz = 0.5
    np.testing.assert_array_equal(D[0, :2], [-2.0, 2.0])
    np.testing.assert_array_equal(D[2, 1:4], [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(D[-1, -2:], [-2.0, 2.0])


def test_apply_matches_matrix(rng):
    dm = diff_matrix_sbp(make_grid(3.0, 17))
    u = rng.normal(size=17)
    np.testing.assert_allclose(dm.apply(u), dm.D @ u, rtol=1e-14, atol=1e-14)


def test_rejects_small_grid():
    g = make_grid(1, 3)
    object.__setattr__(g, "N", 2)
    with pytest.raises(ValueError):
        diff_matrix_sbp(g)


def test_string_structure_blocks():
    g = make_grid(10, 30)
    s = string_structure(g)
    D = diff_matrix_sbp(g).D
    A0 = s.a0([0.01])
    np.testing.assert_array_equal(A0[:30, :30], -0.01 * np.eye(30))
    np.testing.assert_array_equal(A0[:30, 30:], D)
    np.testing.assert_array_equal(A0[30:, :30], D)
    np.testing.assert_array_equal(A0[30:, 30:], 0.0)
    assert s.theta_names == ("r",)
    np.testing.assert_array_equal(s.theta_bounds, [[1e-4, 1.0]])
    np.testing.assert_array_equal(s.theta_init, [0.1])
    assert s.G([0.01]).shape == (60, 0)


def test_a0_on_strain_only_state(rng):
    g = make_grid(4.0, 9)
    s = string_structure(g)
    q = rng.normal(size=9)
    out = s.a0([0.3]) @ np.concatenate([np.zeros(9), q])
    np.testing.assert_allclose(out[:9], diff_matrix_sbp(g).D @ q, rtol=1e-14)
    np.testing.assert_array_equal(out[9:], 0.0)


@pytest.mark.parametrize("r", [0.0, 1e-4, 0.01, 1.0])
def test_check_skew_passes(r):
    rep = check_skew(string_structure(make_grid(10, 30)), [r])
    assert rep.passed


def test_check_skew_zero_damping_boundary_only():
    g = make_grid(10, 30)
    s = string_structure(g)
    H2 = np.diag(np.tile(g.weights, 2))
    J = s.a0([0.0])
    S = H2 @ J + J.T @ H2
    B = sbp_boundary(30)
    expected = np.block([[np.zeros((30, 30)), B], [B, np.zeros((30, 30))]])
    assert np.max(np.abs(S - expected)) < 1e-12


def test_check_skew_detects_sign_flip():
    g = make_grid(10, 12)
    s = string_structure(g)
    J = s.J([0.0]).copy()
    J[5, 12 + 6] *= -1.0  # p-row 5 couples to q at node 6
    bad = dataclasses.replace(s, j_builder=lambda theta: J)
    rep = check_skew(bad, [0.01])
    assert not rep.skew_ok and rep.dissipation_ok
    assert not rep.passed
    assert set(rep.location) & {5, 12 + 6}


def test_check_skew_negative_damping():
    rep = check_skew(string_structure(make_grid(10, 12)), [-0.01])
    assert rep.skew_ok and not rep.dissipation_ok
    assert rep.eig_floor == pytest.approx(-0.01)


def test_variational_derivative_cases():
    g = make_grid(10, 11)  # dz = 1
    np.testing.assert_array_equal(variational_derivative(np.zeros(22), g), 0.0)
    v = np.arange(22.0)
    np.testing.assert_array_equal(variational_derivative(v, g), v)
    with pytest.raises(ValueError):
        variational_derivative(np.zeros(21), g)


def test_variational_derivative_kinetic_oracle(rng):
    g = make_grid(3.0, 13)
    p = rng.normal(size=13)
    # H = dz * sum p_i^2 / 2 over interior-style quadrature: gradient dz * p
    e = variational_derivative(np.concatenate([g.dz * p, np.zeros(13)]), g)
    np.testing.assert_allclose(e[:13], p, rtol=1e-14)
    # trapezoid H = sum h_i p_i^2 / 2: gradient h * p, effort p everywhere
    e = variational_derivative(np.concatenate([g.weights * p, np.zeros(13)]), g, weights="trapezoid")
    np.testing.assert_allclose(e[:13], p, rtol=1e-14)


@given(st.integers(3, 40), st.integers(0, 2**31))
def test_power_conservation_without_damping(N, seed):
    g = make_grid(5.0, N)
    s = string_structure(g)
    e = np.random.default_rng(seed).normal(size=2 * N)
    e[[0, N - 1, N, 2 * N - 1]] = 0.0
    H2 = np.tile(g.weights, 2)
    assert abs(e @ (H2 * (s.J([0.0]) @ e))) < 1e-10 * max(1.0, e @ e)


@given(st.integers(3, 40), st.floats(1e-4, 1.0), st.integers(0, 2**31))
def test_dissipation_inequality(N, r, seed):
    g = make_grid(5.0, N)
    s = string_structure(g)
    e = np.random.default_rng(seed).normal(size=2 * N)
    e[[0, N - 1, N, 2 * N - 1]] = 0.0
    H2 = np.tile(g.weights, 2)
    assert e @ (H2 * (s.a0([r]) @ e)) <= 1e-10


@given(st.integers(3, 40), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_flow_map_dissipative_for_any_gradient(N, r, seed):
    """With Dirichlet projection and trapezoid efforts, dH/dt = g^T A g <= 0
    for every Euclidean gradient g, boundary entries included."""
    g = make_grid(5.0, N)
    s = string_structure(g)
    grad = np.random.default_rng(seed).normal(size=2 * N)
    A = s.flow_map([r])
    assert grad @ A @ grad <= 1e-10 * max(1.0, grad @ grad)


def test_projection_pins_boundary_velocity():
    s = string_structure(make_grid(10, 30))
    A = s.flow_map([0.01])
    assert np.all(A[[0, 29]] == 0) and np.all(A[:, [0, 29]] == 0)
    assert np.all(string_structure(make_grid(10, 30), dirichlet=False).projection() == 1)


def test_uniform_effort_weights():
    g = make_grid(10, 11)
    s = string_structure(g, effort_weights="uniform")
    np.testing.assert_array_equal(s.effort_scale(), np.full(22, 1.0))


def test_structure_spec_round_trip():
    g = make_grid(10, 30)
    s = string_structure(g, effort_weights="uniform")
    s2 = structure_from_spec(g, s.spec())
    np.testing.assert_array_equal(s2.flow_map([0.2]), s.flow_map([0.2]))
    with pytest.raises(ValueError):
        structure_from_spec(g, {"kind": "beam"})
