import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import runs
from conftest import CLIFFORD_A, torus
from oracles import compatible_flow
from runs import config
from elastic_membrane import diagnostics as diag
from elastic_membrane.dynamics import AuxState, FlowState, rest_flow, strain_rates
from elastic_membrane.elliptic import solve_aux
from elastic_membrane.errors import UnknownLemma
from elastic_membrane.solver import run_direct
from elastic_membrane.spectral import Grid, random_field


def zero_aux(snap):
    z = np.zeros(snap.grid.shape)
    return AuxState(z, z, z, z, z, z)


# -- energies -------------------------------------------------------------------------

def test_rest_energies_on_torus(torus2_64):
    s = torus2_64
    flow = rest_flow(s)
    assert diag.willmore_energy(s) == pytest.approx(4 * np.pi**2 / np.sqrt(3), rel=1e-8)
    assert diag.kinetic_energy(s, flow) == 0
    assert diag.dissipation(s, zero_aux(s)) == 0


def test_clifford_willmore_energy(clifford_64):
    assert diag.willmore_energy(clifford_64) == pytest.approx(2 * np.pi**2, rel=1e-8)


def test_kinetic_energy_uses_area_element(torus2_32):
    s = torus2_32
    one = np.ones(s.grid.shape)
    flow = FlowState(one, 0 * one, 0 * one, s.H)
    assert diag.kinetic_energy(s, flow) == pytest.approx(float(s.grid.integrate(s.E)))


@given(st.integers(0, 10**6), st.floats(0.1, 5.0))
def test_dissipation_is_nonnegative(seed, eps0):
    snap = torus(2.0, 32)
    rng = np.random.default_rng(seed)
    g = snap.grid
    flow = FlowState(*(random_field(g, rng, 5) for _ in range(3)), snap.H)
    aux = AuxState(0 * snap.E, 0 * snap.E, 0 * snap.E, *strain_rates(snap, flow))
    D = diag.dissipation(snap, aux, eps0)
    assert D >= 0
    assert diag.dissipation(snap, aux, 2 * eps0) == pytest.approx(2 * D)


def test_cumulative_trapezoid():
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(diag.cumulative_trapezoid(2 * t, t), t**2, atol=1e-15)
    assert diag.cumulative_trapezoid([3.0], [0.0]).tolist() == [0.0]


def test_energy_balance_series_exact_law():
    # e(t) = (W + K)/2 = 5 - t^2/2 loses exactly int D with D = t
    t = np.linspace(0, 1, 101)
    W = 10 - t**2
    r = diag.energy_balance_series(t, W, 0 * t, t)
    assert np.max(r) < 1e-5  # trapezoid error of int t dt is zero; roundoff only
    r_bad = diag.energy_balance_series(t, W, 0 * t, 0 * t)
    assert r_bad[-1] == pytest.approx(0.5 / 5.0)


def test_rest_trajectory_balance():
    traj = runs.clifford_rest()
    assert np.max(diag.energy_balance(traj)) < 1e-12
    assert np.max(np.abs(np.diff(diag.total_energy(traj)))) < 1e-10


def test_stream_run_balance_and_halving():
    fine, half = runs.stream_run(dt=1e-4), runs.stream_run(dt=5e-5)
    r_fine = np.max(diag.energy_balance(fine))
    r_half = np.max(diag.energy_balance(half))
    assert r_fine < 1e-3
    assert np.all(np.isfinite([r.Es for r in diag.trajectory_records(fine)]))
    # a second-order integrator should cut the residual by 3 to 5
    assert 3 <= r_fine / r_half <= 5, (r_fine, r_half)


def test_sobolev_energies(torus2_32):
    s = torus2_32
    flow = make_flow(s)
    g = s.grid
    Es = diag.sobolev_energy(g, flow, 6, 0.25)
    U = np.stack([flow.U1, flow.U2])
    V = np.stack([flow.Un, flow.H])
    assert Es == pytest.approx(g.sobolev_norm(U, 5) ** 2 + 0.25 + g.sobolev_norm(V, 5) ** 2)
    Ew = diag.sobolev_energy_weighted(g, s.E, flow, 6)
    assert np.isfinite(Ew) and Ew > 0


def make_flow(snap):
    return compatible_flow(snap, 0, amplitude=0.1)


# -- records ----------------------------------------------------------------------------

def test_record_fields_and_row(torus2_32):
    assert diag.record_fields()[:20] == diag.CSV_COLUMNS
    s = torus2_32
    flow = make_flow(s)
    aux = solve_aux(s, flow)
    rec = diag.record(s, flow, aux, config(**{"grid.n1": 32, "grid.n2": 32}), t=0.5)
    row = rec.row()
    assert len(row) == 20 and row[0] == 0.5
    assert all(np.isfinite(v) for v in row)
    assert rec.dissipation >= 0 and rec.willmore >= 0
    assert rec.pi_iters == aux.pi_iterations


@pytest.mark.parametrize("a", [2.0, CLIFFORD_A])
def test_initial_consistency_residuals(a):
    s = torus(a, 64)
    rec = diag.record(s, rest_flow(s), zero_aux(s), config())
    assert max(rec.consistency) < 1e-8
    assert rec.incomp_res == 0 and rec.dissipation == 0


def test_consistency_residual_detects_mismatch(torus2_32):
    s = torus2_32
    base = diag.consistency_residuals(s, s.H, R_tilde=s.R, R_hat=s.R)
    res = diag.consistency_residuals(s, 1.1 * s.H, R_tilde=s.R + 0.01, R_hat=s.R)
    assert res[0] > 1e-4 and res[4] > 0.05
    assert base[0] == 0 and base[1] == 0
    # the chart residuals only see the surface
    assert res[2:4] == base[2:4]


def test_trajectory_records_follow_stamps():
    cfg = config(**{"grid.n1": 32, "grid.n2": 32, "initial.kind": "stream_function",
                    "initial.amplitude": 1e-2, "time.dt": 1e-3, "time.t_end": 0.004,
                    "output.stride": 2})
    traj = run_direct(cfg)
    recs = diag.trajectory_records(traj)
    assert [r.t for r in recs] == pytest.approx(traj.times.tolist())
    assert recs[0].energy_balance == 0
    assert all(r.Es > 0 and np.isfinite(r.Es_weighted) for r in recs)
    # later stamps include the integral of the H^s velocity norm
    assert recs[-1].Es > 0


# -- lemma checks -----------------------------------------------------------------------------

def test_zero_field_ratio_is_zero():
    g = Grid(32, 32)
    z = np.zeros(g.shape)
    x, _ = g.mesh()
    for lid in diag.LEMMAS:
        assert diag.lemma_ratio(lid, g, z, 1.0 + 0.1 * np.cos(x)) == 0.0


def test_product_lemma_closed_form():
    # cos^2 = 1/2 + cos(2x)/2: |cos^2|_{H^2} = pi sqrt(13.5), |cos|_{H^2} = 2 sqrt(2) pi
    g = Grid(32, 32)
    x, _ = g.mesh()
    r = diag.lemma_ratio("product", g, np.cos(x), np.cos(x))
    assert r == pytest.approx(np.sqrt(13.5 / 32), rel=1e-12)
    assert r == pytest.approx(0.649519, abs=1e-6)


def test_operator_lemmas_with_unit_coefficient():
    # a = 1, f = cos x: every norm is a multiplier (1 + 1)^(s/2) times |cos x|_{L2} = pi sqrt 2
    g = Grid(32, 32)
    x, _ = g.mesh()
    f, a = np.cos(x), np.ones(g.shape)
    lower = diag.lemma_ratio("operator_lower", g, f, a)
    assert lower == pytest.approx(4 / (2 + 2 * np.pi * 2**0.75), rel=1e-12)
    upper = diag.lemma_ratio("operator_upper", g, f, a)
    assert upper == pytest.approx(2 / (4 + 4 * np.pi), rel=1e-12)


def test_commutator_vanishes_for_constant_coefficient():
    g = Grid(32, 32)
    f = random_field(g, np.random.default_rng(0), 6)
    assert diag.lemma_ratio("commutator", g, f, np.full(g.shape, 3.0)) < 1e-12


def test_unknown_lemma():
    g = Grid(8, 8)
    with pytest.raises(UnknownLemma):
        diag.lemma_ratio("sobolev_embedding", g, np.ones(g.shape), np.ones(g.shape))
    with pytest.raises(UnknownLemma):
        diag.lemma_check("nope")
    with pytest.raises(ValueError):
        diag.lemma_check("product", trials=0)


@pytest.mark.parametrize("lid", diag.LEMMAS)
def test_lemma_check_small(lid):
    chk = diag.lemma_check(lid, trials=10, seed=3)
    assert [r.n for r in chk.reports] == [32, 48, 64]
    assert all(len(r.ratios) == 10 for r in chk.reports)
    assert chk.passed
    for r in chk.reports:
        assert 0 < r.mean <= r.max < np.inf


def test_lemma_check_is_seeded():
    a = diag.lemma_check("product", trials=5, seed=1)
    b = diag.lemma_check("product", trials=5, seed=1)
    c = diag.lemma_check("product", trials=5, seed=2)
    assert np.array_equal(a.reports[0].ratios, b.reports[0].ratios)
    assert not np.array_equal(a.reports[0].ratios, c.reports[0].ratios)


def test_lemma_check_flags_blow_up():
    rep = [diag.LemmaReport("product", 32, np.array([0.1])),
           diag.LemmaReport("product", 64, np.array([0.3]))]
    assert not diag.LemmaCheck("product", tuple(rep)).passed
    rep[1] = dataclasses.replace(rep[1], ratios=np.array([np.inf]))
    assert not diag.LemmaCheck("product", tuple(rep)).passed
