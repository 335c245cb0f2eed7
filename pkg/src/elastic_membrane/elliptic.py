"""Elliptic solves: chart velocity, surface pressure, surface reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import AuxState, FlowState, strain_rates
from .errors import CoefficientViolation, NoConvergence
from .geometry import GeometrySnapshot, check_conformal_factor, cross, dot
from .spectral import Grid


# -- chart velocity -------------------------------------------------------------

@dataclass(frozen=True)
class TangentialVelocity:
    W1: np.ndarray
    W2: np.ndarray
    mean_f1: float
    mean_f2: float
    flagged: bool


def div_curl_solve(grid: Grid, f1: np.ndarray, f2: np.ndarray):
    """Mean-zero (p, q) with p_a - q_b = f1 - mean(f1), p_b + q_a = f2 - mean(f2).

    Uses potentials p = phi_a + psi_b, q = -phi_b + psi_a with lap phi = f1,
    lap psi = f2.  Returns (p, q, mean_f1, mean_f2).
    """
    (phi, psi), means = grid.poisson_meanzero(np.stack([f1, f2]))
    pa, pb = grid.grad(phi)
    sa, sb = grid.grad(psi)
    return pa + sb, -pb + sa, float(means[0]), float(means[1])


def solve_tangential_velocity(snap: GeometrySnapshot, Un: np.ndarray,
                              tol_solvability: float = 1e-6) -> TangentialVelocity:
    g = snap.grid
    E = snap.E
    f1 = g.dealias(Un * (snap.L - snap.N) / E)
    f2 = g.dealias(2 * Un * snap.M / E)
    p, q, m1, m2 = div_curl_solve(g, f1, f2)
    scale = max(np.sqrt(g.mean(f1 * f1)), np.sqrt(g.mean(f2 * f2)))
    flagged = scale > 0 and max(abs(m1), abs(m2)) > tol_solvability * scale
    sE = np.sqrt(E)
    return TangentialVelocity(sE * p, sE * q, m1, m2, bool(flagged))


# -- pressure --------------------------------------------------------------------

def pressure_rhs_terms(snap: GeometrySnapshot, flow: FlowState, eps0: float = 1.0,
                       c0: float = 0.0) -> dict[str, np.ndarray]:
    """The four groups of the pressure source, each with its printed sign.

    Keys: ``elastic`` = H(lap H + H/(2E)((L-N)^2 + 4M^2)), ``G1``, ``G2`` and
    ``strain`` = (4 H / E)(S11 L + 2 S12 M + S22 N) (without eps0).
    """
    g = snap.grid
    check_conformal_factor(snap.E, c0)
    E = snap.E
    sE = np.sqrt(E)
    Ea, Eb = g.grad(E)
    sEa, sEb = g.grad(sE)
    L, M, N = snap.L, snap.M, snap.N
    U1, U2, Un, H = flow.U1, flow.U2, flow.Un, flow.H
    U1a, U1b = g.grad(U1)
    U2a, U2b = g.grad(U2)
    Una, Unb = g.grad(Un)

    elastic = H * (g.lap(H) + H / (2 * E) * ((L - N) ** 2 + 4 * M * M))

    X = (U1 * U1a + U2 * U1b - Un / sE * (2 * M * U2 + (L - N) * U1)
         + (U1 * U2 * Eb - U2 * U2 * Ea) / (2 * E))
    Y = (U1 * U2a + U2 * U2b - Un / sE * (2 * M * U1 + (N - L) * U2)
         + (U1 * U2 * Ea - U1 * U1 * Eb) / (2 * E))
    G1 = (g.dx(X) + g.dy(Y)
          - 4 * H * sE * (U1 * Una + U2 * Unb)
          - 2 * H * (L * U1 * U1 + 2 * M * U1 * U2 + N * U2 * U2)
          - Una**2 - Unb**2
          + Un * Un / E * (L * L + 2 * M * M + N * N - 4 * E * E * H * H))

    S11, S12, S22 = strain_rates(snap, flow)
    S11a, S11b = g.grad(S11)
    S12a, S12b = g.grad(S12)
    S22a, S22b = g.grad(S22)
    P = sEb * U2 - sEa * U1 - L * Un
    Q = sEa * U2 + sEb * U1 + M * Un
    T = sEa * U1 - sEb * U2 - N * Un
    Paa = g.hessian(P)[0]
    Qab = g.hessian(Q)[1]
    Tbb = g.hessian(T)[2]
    G2 = (-Ea / (E * E) * (S11a + S12b) - Eb / (E * E) * (S12a + S22b)
          + g.lap(2 * E * H * Un) / E + Paa / E - 2 * Qab / E + Tbb / E)

    strain = 4 * H / E * (S11 * L + 2 * S12 * M + S22 * N)
    return {"elastic": elastic, "G1": G1, "G2": G2, "strain": strain}


def assemble_pressure_rhs(snap: GeometrySnapshot, flow: FlowState, eps0: float = 1.0,
                          c0: float = 0.0) -> np.ndarray:
    """Source of -lap Pi + 4 E H^2 Pi = G.

    G = -elastic + G1 - 2 eps0 G2 + eps0 strain: the elastic and strain groups
    enter with the signs that make the pressure preserve the constraint.
    """
    t = pressure_rhs_terms(snap, flow, eps0, c0)
    G = -t["elastic"] + t["G1"] - 2 * eps0 * t["G2"] + eps0 * t["strain"]
    return snap.grid.dealias(G)


@dataclass(frozen=True)
class PressureProblem:
    coeff: np.ndarray
    rhs: np.ndarray
    tol: float = 1e-10
    max_iter: int = 500
    a0: float = 1e-8


@dataclass(frozen=True)
class PressureSolution:
    Pi: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def solve_pressure(grid: Grid, problem: PressureProblem,
                   x0: np.ndarray | None = None) -> PressureSolution:
    """Preconditioned conjugate gradients for -lap u + a u = G.

    The preconditioner is (-lap + mean(a))^-1 applied in Fourier space.
    ``history`` holds sqrt(r . z) of the preconditioned residual per iteration.
    """
    a, G = problem.coeff, problem.rhs
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(G))):
        raise NoConvergence("non-finite pressure coefficient or source", float("nan"), 0)
    if np.min(a) < -1e-12:
        raise CoefficientViolation(f"coefficient has negative values (min {np.min(a):.3e})")
    total = float(grid.integrate(a))
    if not total >= problem.a0:
        raise CoefficientViolation(f"integral of coefficient {total:.3e} below a0 = {problem.a0:.3e}")
    abar = float(np.mean(a))
    pinv = 1.0 / (grid.ksq + abar)

    def op(x):
        return -grid.lap(x) + a * x

    def prec(r):
        return grid.apply(r, pinv)

    gnorm = np.linalg.norm(G)
    if gnorm == 0:
        return PressureSolution(np.zeros_like(G), 0, 0.0, [0.0])
    x = prec(G) if x0 is None else x0.copy()
    r = G - op(x)
    z = prec(r)
    p = z.copy()
    rz = float(np.sum(r * z))
    res = np.linalg.norm(r) / gnorm
    history = [np.sqrt(abs(rz))]
    it = 0
    while res > problem.tol:
        if it >= problem.max_iter:
            raise NoConvergence(f"pressure CG stalled at relative residual {res:.3e}", res, it)
        Ap = op(p)
        alpha = rz / float(np.sum(p * Ap))
        x += alpha * p
        r -= alpha * Ap
        z = prec(r)
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        res = np.linalg.norm(r) / gnorm
        history.append(np.sqrt(abs(rz)))
    return PressureSolution(x, it, float(res), history)


def solve_aux(snap: GeometrySnapshot, flow: FlowState, eps0: float = 1.0,
              tol: float = 1e-10, max_iter: int = 500, a0: float = 1e-8,
              tol_solvability: float = 1e-6, c0: float = 0.0,
              pi_guess: np.ndarray | None = None) -> AuxState:
    """Chart velocity, pressure and strain rates for a given state."""
    tv = solve_tangential_velocity(snap, flow.Un, tol_solvability)
    coeff = 4 * snap.E * flow.H**2
    G = assemble_pressure_rhs(snap, flow, eps0, c0)
    sol = solve_pressure(snap.grid, PressureProblem(coeff, G, tol, max_iter, a0), pi_guess)
    S11, S12, S22 = strain_rates(snap, flow)
    return AuxState(tv.W1, tv.W2, sol.Pi, S11, S12, S22, sol.iterations,
                    tv.mean_f1, tv.mean_f2, tv.flagged)


# -- reconstruction chain -------------------------------------------------------

def reconstruct_surface(grid: Grid, H_prev: np.ndarray,
                        R_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """R_hat and R from (lap - 1) R_hat = 2H Rt_a x Rt_b - Rt and
    (lap - 1) R = 2H R_hat_a x R_hat_b - Rt."""
    Ra, Rb = grid.grad(R_tilde)
    R_hat = grid.inv_shifted_lap(2 * H_prev * cross(Ra, Rb) - R_tilde, 1.0)
    Ha, Hb = grid.grad(R_hat)
    R = grid.inv_shifted_lap(2 * H_prev * cross(Ha, Hb) - R_tilde, 1.0)
    return R_hat, R


def reconstruct_E(grid: Grid, R: np.ndarray) -> np.ndarray:
    """(lap - 2) E = 2(R_ab.R_ab - R_aa.R_bb) - (R_a.R_a + R_b.R_b)."""
    return grid.inv_shifted_lap(reconstruct_E_source(grid, R), 2.0)


def reconstruct_E_source(grid: Grid, R: np.ndarray) -> np.ndarray:
    Ra, Rb = grid.grad(R)
    Raa, Rab, Rbb = grid.hessian(R)
    return 2 * (dot(Rab, Rab) - dot(Raa, Rbb)) - (dot(Ra, Ra) + dot(Rb, Rb))
