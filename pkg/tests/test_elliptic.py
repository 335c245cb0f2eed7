import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CLIFFORD_A, torus
from oracles import compatible_flow, constraint_pressure_rhs, torus_f1_profile_integral, torus_latitude
from elastic_membrane.dynamics import AuxState, FlowState, rest_flow, strain_rates
from elastic_membrane.elliptic import (PressureProblem, assemble_pressure_rhs, div_curl_solve,
                                       pressure_rhs_terms, reconstruct_E, reconstruct_E_source,
                                       reconstruct_surface, solve_aux, solve_pressure,
                                       solve_tangential_velocity)
from elastic_membrane.errors import CoefficientViolation, NoConvergence
from elastic_membrane.geometry import cross, willmore_residual
from elastic_membrane.spectral import Grid, random_field


def rel(x, y):
    return np.linalg.norm(x - y) / np.linalg.norm(y)


def manufactured(grid, seed, band=8):
    rng = np.random.default_rng(seed)
    return random_field(grid, rng, band, 1.0), random_field(grid, rng, band, 1.0)


# -- div-curl system --------------------------------------------------------------------

@given(st.integers(0, 10**6), st.sampled_from([(32, 32), (48, 40), (64, 64)]))
def test_div_curl_round_trip(seed, shape):
    g = Grid(*shape, 2 * np.pi, 3.7)
    p, q = manufactured(g, seed)
    pa, pb = g.grad(p)
    qa, qb = g.grad(q)
    p2, q2, m1, m2 = div_curl_solve(g, pa - qb, pb + qa)
    assert rel(p2, p) < 1e-10 and rel(q2, q) < 1e-10
    assert abs(m1) < 1e-12 and abs(m2) < 1e-12


def test_div_curl_equations_hold_after_mean_subtraction():
    g = Grid(32, 32)
    rng = np.random.default_rng(2)
    f1 = random_field(g, rng, 6) + 0.4
    f2 = random_field(g, rng, 6) - 0.2
    p, q, m1, m2 = div_curl_solve(g, f1, f2)
    assert m1 == pytest.approx(0.4) and m2 == pytest.approx(-0.2)
    assert abs(np.mean(p)) < 1e-14 and abs(np.mean(q)) < 1e-14
    np.testing.assert_allclose(g.dx(p) - g.dy(q), f1 - m1, atol=1e-10)
    np.testing.assert_allclose(g.dy(p) + g.dx(q), f2 - m2, atol=1e-10)


def test_zero_normal_velocity_gives_zero_chart_velocity(torus2_32):
    tv = solve_tangential_velocity(torus2_32, np.zeros(torus2_32.grid.shape))
    assert np.max(np.abs(tv.W1)) == 0 and np.max(np.abs(tv.W2)) == 0
    assert not tv.flagged


def test_constant_normal_velocity_on_revolution_torus(torus2_64):
    a, c = 2.0, 0.3
    snap = torus2_64
    tv = solve_tangential_velocity(snap, np.full(snap.grid.shape, c))
    assert np.max(np.abs(tv.W1)) < 1e-10
    _, w = snap.grid.mesh()
    js = [0, 7, 20, 33, 50]
    v = torus_latitude(a, 1.0, w[0, js])
    phi_w = torus_f1_profile_integral(a, 1.0, c, v)
    W2 = -np.sqrt(snap.E[0, js]) * phi_w
    np.testing.assert_allclose(tv.W2[0, js], W2, atol=1e-9)
    # the profile f1 = c (L - N)/E has a nonzero mean, which is reported
    assert tv.flagged and abs(tv.mean_f1) > 0.1 * c


# -- pressure ------------------------------------------------------------------------------

def test_pressure_constant_coefficient_example():
    g = Grid(32, 32)
    x, _ = g.mesh()
    sol = solve_pressure(g, PressureProblem(np.ones(g.shape), np.cos(x), tol=1e-12))
    np.testing.assert_allclose(sol.Pi, np.cos(x) / 2, atol=1e-12)


def test_pressure_zero_coefficient_rejected():
    g = Grid(16, 16)
    with pytest.raises(CoefficientViolation):
        solve_pressure(g, PressureProblem(np.zeros(g.shape), np.ones(g.shape)))


def test_pressure_negative_coefficient_rejected():
    g = Grid(16, 16)
    a = np.ones(g.shape)
    a[3, 3] = -1e-6
    with pytest.raises(CoefficientViolation):
        solve_pressure(g, PressureProblem(a, np.ones(g.shape)))


@pytest.mark.parametrize("a", [2.0, CLIFFORD_A, 3.0])
def test_pressure_manufactured_recovery(a):
    snap = torus(a, 64)
    g = snap.grid
    coeff = 4 * snap.E * snap.H**2
    Pi, _ = manufactured(g, 5)
    G = -g.lap(Pi) + coeff * Pi
    sol = solve_pressure(g, PressureProblem(coeff, G, tol=1e-12))
    assert rel(sol.Pi, Pi) < 1e-10
    assert sol.iterations < 200


@pytest.mark.parametrize("a", [2.0, CLIFFORD_A, 3.0])
def test_pressure_cg_history_decreases(a):
    snap = torus(a, 64)
    g = snap.grid
    coeff = 4 * snap.E * snap.H**2
    G = random_field(g, np.random.default_rng(1), 10, 0.5)
    hist = np.array(solve_pressure(g, PressureProblem(coeff, G, tol=1e-12)).history)
    assert np.all(np.diff(hist) <= 0)


def test_pressure_residual_bound(torus2_32):
    g = torus2_32.grid
    coeff = 4 * torus2_32.E * torus2_32.H**2
    G = random_field(g, np.random.default_rng(9), 6)
    sol = solve_pressure(g, PressureProblem(coeff, G, tol=1e-10))
    res = -g.lap(sol.Pi) + coeff * sol.Pi - G
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(G)


def test_pressure_no_convergence(torus2_32):
    g = torus2_32.grid
    coeff = 4 * torus2_32.E * torus2_32.H**2
    G = random_field(g, np.random.default_rng(9), 10)
    with pytest.raises(NoConvergence) as info:
        solve_pressure(g, PressureProblem(coeff, G, tol=1e-14, max_iter=2))
    assert info.value.iterations == 2 and info.value.residual > 1e-14


def test_pressure_solve_is_deterministic(torus2_32):
    g = torus2_32.grid
    coeff = 4 * torus2_32.E * torus2_32.H**2
    G = random_field(g, np.random.default_rng(3), 6)
    a = solve_pressure(g, PressureProblem(coeff, G))
    b = solve_pressure(g, PressureProblem(coeff.copy(), G.copy()))
    assert np.array_equal(a.Pi, b.Pi)


# -- pressure source -------------------------------------------------------------------------

def test_rest_pressure_source_is_elastic_group(torus2_32):
    snap = torus2_32
    g = snap.grid
    flow = rest_flow(snap)
    H, E = snap.H, snap.E
    elastic = H * (g.lap(H) + H / (2 * E) * ((snap.L - snap.N) ** 2 + 4 * snap.M**2))
    terms = pressure_rhs_terms(snap, flow)
    np.testing.assert_allclose(terms["elastic"], elastic, atol=1e-12)
    for key in ("G1", "G2", "strain"):
        assert np.max(np.abs(terms[key])) == 0
    # the elastic group enters with the sign that preserves the constraint
    np.testing.assert_allclose(assemble_pressure_rhs(snap, flow), -g.dealias(elastic), atol=1e-12)


def test_clifford_rest_pressure_source_vanishes(clifford_64):
    snap = clifford_64
    G = assemble_pressure_rhs(snap, rest_flow(snap))
    assert np.max(np.abs(G)) < 1e-5
    # G = -E H times the Willmore residual
    np.testing.assert_allclose(G, -snap.grid.dealias(snap.E * snap.H * willmore_residual(snap)),
                               atol=1e-6)


@pytest.mark.parametrize("a,seed", [(2.0, 0), (2.0, 1), (3.0, 2), (1.6, 3)])
def test_pressure_source_preserves_constraint(a, seed):
    # independent oracle: the source that makes d/dt of the constraint vanish
    snap = torus(a, 64)
    flow = compatible_flow(snap, seed)
    tv = solve_tangential_velocity(snap, flow.Un)
    assert abs(tv.mean_f1) < 1e-12 and abs(tv.mean_f2) < 1e-12
    aux = AuxState(tv.W1, tv.W2, np.zeros(snap.grid.shape), *strain_rates(snap, flow))
    G = assemble_pressure_rhs(snap, flow, 0.7)
    ref = snap.grid.dealias(constraint_pressure_rhs(snap, flow, aux, 0.7))
    assert np.max(np.abs(G - ref)) < 1e-9 * np.max(np.abs(ref))


def test_solve_aux_bundle(torus2_32):
    flow = compatible_flow(torus2_32, 4)
    aux = solve_aux(torus2_32, flow, tol=1e-12)
    g = torus2_32.grid
    coeff = 4 * torus2_32.E * flow.H**2
    G = assemble_pressure_rhs(torus2_32, flow)
    assert rel(-g.lap(aux.Pi) + coeff * aux.Pi, G) < 1e-11
    S = strain_rates(torus2_32, flow)
    for got, want in zip((aux.S11, aux.S12, aux.S22), S):
        np.testing.assert_array_equal(got, want)
    assert aux.pi_iterations > 0


# -- reconstruction -----------------------------------------------------------------------

@pytest.mark.parametrize("a", [2.0, CLIFFORD_A, 3.0])
def test_reconstruction_fixed_point(a):
    snap = torus(a, 64)
    R_hat, R = reconstruct_surface(snap.grid, snap.H, snap.R)
    assert rel(R_hat, snap.R) < 1e-10
    assert rel(R, snap.R) < 1e-10


@pytest.mark.parametrize("a", [2.0, CLIFFORD_A])
def test_reconstruction_forward_check(a):
    snap = torus(a, 64)
    g = snap.grid
    Rt = snap.R + 0.01 * np.stack([random_field(g, np.random.default_rng(i), 4) for i in range(3)])
    R_hat, R = reconstruct_surface(g, snap.H, Rt)
    Ra, Rb = g.grad(Rt)
    assert rel(g.lap(R_hat) - R_hat, 2 * snap.H * cross(Ra, Rb) - Rt) < 1e-12
    Ha, Hb = g.grad(R_hat)
    assert rel(g.lap(R) - R, 2 * snap.H * cross(Ha, Hb) - Rt) < 1e-12


def test_reconstruction_without_curvature_smooths(torus2_32):
    g = torus2_32.grid
    R_hat, R = reconstruct_surface(g, np.zeros(g.shape), torus2_32.R)
    np.testing.assert_allclose(g.lap(R) - R, -torus2_32.R, atol=1e-12)
    np.testing.assert_array_equal(R, R_hat)


def test_reconstruction_translates_with_constant(torus2_32):
    g = torus2_32.grid
    c = np.array([0.5, -1.0, 2.0])[:, None, None]
    _, R = reconstruct_surface(g, torus2_32.H, torus2_32.R)
    _, Rc = reconstruct_surface(g, torus2_32.H, torus2_32.R + c)
    np.testing.assert_allclose(Rc - R, np.broadcast_to(c, R.shape), atol=1e-12)


@pytest.mark.parametrize("a", [2.0, CLIFFORD_A, 3.0])
def test_reconstruct_E_on_torus(a):
    snap = torus(a, 64)
    E = reconstruct_E(snap.grid, snap.R)
    assert np.max(np.abs(E - snap.E)) < 1e-8 * np.max(snap.E)


def test_reconstruct_E_scaling(torus2_32):
    g = torus2_32.grid
    E1 = reconstruct_E(g, torus2_32.R)
    E3 = reconstruct_E(g, 3.0 * torus2_32.R)
    np.testing.assert_allclose(E3, 9.0 * E1, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 10**6))
def test_reconstruct_E_forward_check(seed):
    snap = torus(2.0, 32)
    g = snap.grid
    R = snap.R + 0.05 * np.stack([random_field(g, np.random.default_rng([seed, i]), 4)
                                  for i in range(3)])
    E = reconstruct_E(g, R)
    assert rel(g.lap(E) - 2 * E, reconstruct_E_source(g, R)) < 1e-12


def test_pressure_rejects_non_finite_data():
    g = Grid(16, 16)
    G = np.ones(g.shape)
    G[2, 2] = np.nan
    with pytest.raises(NoConvergence):
        solve_pressure(g, PressureProblem(np.ones(g.shape), G))
