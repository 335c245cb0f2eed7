"""Strain rates, forcing terms and right-hand sides of the isothermal system.

Unknowns are the unit-tangent velocity components U1, U2, the normal
velocity Un and the mean curvature H.  Products are formed pointwise and
each assembled tendency passes through the 2/3 filter once.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .geometry import GeometrySnapshot, check_conformal_factor
from .spectral import Grid, random_field


@dataclass(frozen=True)
class FlowState:
    U1: np.ndarray
    U2: np.ndarray
    Un: np.ndarray
    H: np.ndarray

    def stack(self) -> np.ndarray:
        return np.stack([self.U1, self.U2, self.Un, self.H])

    @classmethod
    def from_stack(cls, y: np.ndarray) -> "FlowState":
        return cls(y[0], y[1], y[2], y[3])


@dataclass(frozen=True)
class AuxState:
    W1: np.ndarray
    W2: np.ndarray
    Pi: np.ndarray
    S11: np.ndarray
    S12: np.ndarray
    S22: np.ndarray
    pi_iterations: int = 0
    mean_f1: float = 0.0
    mean_f2: float = 0.0
    solvability_flag: bool = False


@dataclass(frozen=True)
class Forcing:
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    F4: np.ndarray
    F5: np.ndarray
    F6: np.ndarray
    F7: np.ndarray

    def __iter__(self):
        return (getattr(self, f.name) for f in fields(self))


@dataclass(frozen=True)
class RhsBundle:
    dU1: np.ndarray
    dU2: np.ndarray
    dUn: np.ndarray
    dH: np.ndarray
    dR: np.ndarray

    def flow_stack(self) -> np.ndarray:
        return np.stack([self.dU1, self.dU2, self.dUn, self.dH])


def rest_flow(snap: GeometrySnapshot) -> FlowState:
    z = np.zeros_like(snap.E)
    return FlowState(z, z.copy(), z.copy(), snap.H.copy())


def _metric(snap: GeometrySnapshot, c0: float):
    check_conformal_factor(snap.E, c0)
    E = snap.E
    Ea, Eb = snap.grid.grad(E)
    return E, np.sqrt(E), Ea, Eb


def strain_rates(snap: GeometrySnapshot, flow: FlowState, c0: float = 0.0):
    g = snap.grid
    E, sE, Ea, Eb = _metric(snap, c0)
    U1, U2, Un = flow.U1, flow.U2, flow.Un
    a1, b1 = g.grad(sE * U1)
    a2, b2 = g.grad(sE * U2)
    S11 = a1 + (Eb * U2 - Ea * U1) / (2 * sE) - snap.L * Un
    S12 = 0.5 * b1 + 0.5 * a2 - (Ea * U2 + Eb * U1) / (2 * sE) - snap.M * Un
    S22 = b2 + (Ea * U1 - Eb * U2) / (2 * sE) - snap.N * Un
    return S11, S12, S22


def forcing_terms(snap: GeometrySnapshot, flow: FlowState, aux: AuxState,
                  eps0: float = 1.0, c0: float = 0.0) -> Forcing:
    g = snap.grid
    E, sE, Ea, Eb = _metric(snap, c0)
    L, M, N = snap.L, snap.M, snap.N
    U1, U2, Un, H = flow.U1, flow.U2, flow.Un, flow.H
    W1, W2 = aux.W1, aux.W2
    bsq = L * L + 2 * M * M + N * N
    F1 = (Eb * U2 - Ea * U1) / (2 * sE) + 0.5 * Un * (N - L)
    F2 = 0.5 * Un * Un
    F3 = (Ea * U2 + Eb * U1) / sE + 2 * M * Un
    F4 = (-U2 * g.dy(W1) / sE + (2 * M * U2 * Un + L * U1 * Un) / E
          - ((U1 - W1) * U2 * Eb - U2 * U2 * Ea) / (2 * E * sE))
    F5 = (-U1 * g.dx(W2) / sE + (2 * M * U1 * Un + N * U2 * Un) / E
          - ((U2 - W2) * U1 * Ea - U1 * U1 * Eb) / (2 * E * sE))
    F6 = (eps0 / (E * E * sE) * (L * Eb * U2 - M * Ea * U2 - M * Eb * U1 + N * Ea * U1)
          - 2 * eps0 * Un / (E * E) * bsq
          - H / (4 * E * E) * ((L - N) ** 2 + 4 * M * M)
          - (L * U1 * U1 + 2 * M * U1 * U2 + N * U2 * U2) / E)
    F7 = Un / (2 * E * E) * bsq
    return Forcing(F1, F2, F3, F4, F5, F6, F7)


def assemble_rhs(snap: GeometrySnapshot, flow: FlowState, aux: AuxState,
                 eps0: float = 1.0, c0: float = 0.0, filtered: bool = True) -> RhsBundle:
    g = snap.grid
    E, sE, Ea, Eb = _metric(snap, c0)
    L, M, N = snap.L, snap.M, snap.N
    U1, U2, Un, H = flow.U1, flow.U2, flow.Un, flow.H
    W1, W2, Pi = aux.W1, aux.W2, aux.Pi
    F = forcing_terms(snap, flow, aux, eps0)
    u1, u2, w1, w2 = U1 / sE, U2 / sE, W1 / sE, W2 / sE
    U1a, U1b = g.grad(U1)
    U2a, U2b = g.grad(U2)
    Una, Unb = g.grad(Un)
    Ha, Hb = g.grad(H)
    Pia, Pib = g.grad(Pi)
    F1a, F1b = g.grad(F.F1)
    F2a, F2b = g.grad(F.F2)
    F3a, F3b = g.grad(F.F3)
    visc = eps0 / (E * sE)

    dU1 = (visc * g.lap(sE * U1) - Pia / sE + 2 * visc * F1a + F2a / sE - visc * F3b
           - (u1 - w1) * U1a - (u2 - w2) * U1b + F.F4)
    dU2 = (visc * g.lap(sE * U2) - Pib / sE - 2 * visc * F1b + F2b / sE - visc * F3a
           - (u1 - w1) * U2a - (u2 - w2) * U2b + F.F5)
    dUn = (-g.lap(H) / (2 * E) - 2 * H * Pi - ((2 * u1 - w1) * Una + (2 * u2 - w2) * Unb)
           + 2 * visc * (L * U1a + M * U1b + M * U2a + N * U2b) + F.F6)
    dH = g.lap(Un) / (2 * E) + w1 * Ha + w2 * Hb + F.F7
    dR = Un * snap.n + (W1 / sE) * snap.Ra + (W2 / sE) * snap.Rb
    if filtered:
        dU1, dU2, dUn, dH = g.dealias(np.stack([dU1, dU2, dUn, dH]))
        dR = g.dealias(dR)
    return RhsBundle(dU1, dU2, dUn, dH, dR)


def constraint_field(snap: GeometrySnapshot, flow: FlowState) -> np.ndarray:
    g = snap.grid
    sE = np.sqrt(snap.E)
    return g.dx(sE * flow.U1) + g.dy(sE * flow.U2) - 2 * snap.E * flow.H * flow.Un


def incompressibility_residual(snap: GeometrySnapshot, flow: FlowState) -> float:
    """L2 norm of the constraint relative to the L2 norms of its three terms."""
    g = snap.grid
    sE = np.sqrt(snap.E)
    t1 = g.dx(sE * flow.U1)
    t2 = g.dy(sE * flow.U2)
    t3 = 2 * snap.E * flow.H * flow.Un
    den = g.l2_norm(t1) + g.l2_norm(t2) + g.l2_norm(t3)
    return 0.0 if den == 0 else g.l2_norm(t1 + t2 - t3) / den


def make_initial_flow(snap: GeometrySnapshot, kind: str = "rest", amplitude: float = 0.0,
                      seed: int = 0, band: int = 3) -> FlowState:
    """Initial velocity compatible with the incompressibility constraint.

    ``stream_function`` uses sqrt(E) U = (chi_b, -chi_a) with Un = 0;
    ``normal_mode`` takes a smooth Un, removes its component that violates
    the solvability condition mean(E H Un) = 0, and sets sqrt(E) U = grad phi
    with div grad phi = 2 E H Un.  ``amplitude`` is the RMS of the velocity.
    """
    g = snap.grid
    rng = np.random.default_rng(seed)
    sE = np.sqrt(snap.E)
    H = snap.H.copy()
    z = np.zeros_like(snap.E)
    if kind == "rest":
        return FlowState(z, z.copy(), z.copy(), H)
    if kind == "stream_function":
        chi = random_field(g, rng, band, decay=1.0)
        ca, cb = g.grad(chi)
        U1, U2, Un = cb / sE, -ca / sE, z
    elif kind == "normal_mode":
        Un = random_field(g, rng, band, decay=1.0)
        EH = snap.E * H
        # 2 E H Un must have no content on the modes that a divergence cannot
        # produce: the mean and the three sign patterns of the Nyquist modes
        i, j = np.indices(g.shape)
        B = np.stack([(EH * (-1.0) ** p).ravel() for p in (0 * i, i, j, i + j)], axis=1)
        coef, *_ = np.linalg.lstsq(B, Un.ravel(), rcond=None)
        Un = Un - (B @ coef).reshape(g.shape)
        phi = g.inv_div_grad(2 * EH * Un)
        pa, pb = g.grad(phi)
        U1, U2 = pa / sE, pb / sE
    else:
        raise ValueError(f"unknown initial flow kind {kind!r}")
    rms = np.sqrt(g.mean(U1**2 + U2**2 + Un**2))
    scale = amplitude / rms if rms > 0 else 0.0
    return FlowState(U1 * scale, U2 * scale, Un * scale, H)
