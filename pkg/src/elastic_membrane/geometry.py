"""Fundamental forms, curvatures and analytic initial surfaces.

Vector fields carry their Cartesian components on axis 0, so an embedding
``R`` has shape ``(3, n1, n2)``.  Products of smooth geometric fields are
formed pointwise without truncation; the 2/3 filter is applied to the
evolution tendencies instead (see ``dynamics``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import BadAspect, DegenerateChart, SmallConformalFactor
from .spectral import Grid

C0_DEFAULT = 1e-3
EPS_DEGENERATE_DEFAULT = 1e-8


@dataclass(frozen=True)
class GeometrySnapshot:
    grid: Grid
    R: np.ndarray
    Ra: np.ndarray
    Rb: np.ndarray
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    E: np.ndarray
    L: np.ndarray
    M: np.ndarray
    N: np.ndarray
    n: np.ndarray
    H: np.ndarray
    K: np.ndarray
    jac: np.ndarray  # |R_a x R_b|


@dataclass(frozen=True)
class ChristoffelField:
    e_alpha_over_2E: np.ndarray
    e_beta_over_2E: np.ndarray


def dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("i...,i...->...", u, v)


def cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.cross(u, v, axis=0)


def check_conformal_factor(E: np.ndarray, c0: float) -> None:
    m = float(np.min(E))
    if not m >= c0:
        raise SmallConformalFactor(m, c0)


def tangents(grid: Grid, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return grid.grad(R)


def first_forms(grid: Grid, R: np.ndarray):
    Ra, Rb = grid.grad(R)
    return dot(Ra, Ra), dot(Ra, Rb), dot(Rb, Rb)


def normal(grid: Grid, R: np.ndarray, eps: float = EPS_DEGENERATE_DEFAULT) -> np.ndarray:
    """Unit normal R_a x R_b / |R_a x R_b|."""
    Ra, Rb = grid.grad(R)
    return _normal_from_tangents(Ra, Rb, eps)[0]


def _normal_from_tangents(Ra, Rb, eps):
    c = cross(Ra, Rb)
    jac = np.sqrt(dot(c, c))
    mj = float(np.min(jac))
    if not mj >= eps:
        raise DegenerateChart(mj, eps)
    return c / jac, jac


def second_forms(grid: Grid, R: np.ndarray, n: np.ndarray):
    Raa, Rab, Rbb = grid.hessian(R)
    return dot(Raa, n), dot(Rab, n), dot(Rbb, n)


def curvatures(E, L, M, N, c0: float = C0_DEFAULT):
    """Mean and Gaussian curvature in isothermal coordinates."""
    check_conformal_factor(E, c0)
    return (L + N) / (2 * E), (L * N - M * M) / (E * E)


def christoffel(grid: Grid, E: np.ndarray, c0: float = C0_DEFAULT) -> ChristoffelField:
    check_conformal_factor(E, c0)
    Ea, Eb = grid.grad(E)
    return ChristoffelField(Ea / (2 * E), Eb / (2 * E))


def isothermal_residual(grid: Grid, R: np.ndarray) -> tuple[float, float]:
    a11, a12, a22 = first_forms(grid, R)
    ref = grid.l2_norm(a11)
    return grid.l2_norm(a11 - a22) / ref, grid.l2_norm(a12) / ref


def snapshot(grid: Grid, R: np.ndarray, E: np.ndarray | None = None,
             c0: float = C0_DEFAULT, eps: float = EPS_DEGENERATE_DEFAULT) -> GeometrySnapshot:
    """Populate every derived field of an embedding.

    ``E`` defaults to the isothermal average (a11 + a22)/2; the iteration
    scheme passes its reconstructed conformal factor instead.
    """
    R = np.asarray(R, dtype=float)
    Ra, Rb = grid.grad(R)
    a11, a12, a22 = dot(Ra, Ra), dot(Ra, Rb), dot(Rb, Rb)
    if E is None:
        E = 0.5 * (a11 + a22)
    n, jac = _normal_from_tangents(Ra, Rb, eps)
    L, M, N = second_forms(grid, R, n)
    H, K = curvatures(E, L, M, N, c0)
    return GeometrySnapshot(grid, R, Ra, Rb, a11, a12, a22, E, L, M, N, n, H, K, jac)


def willmore_residual(snap: GeometrySnapshot) -> np.ndarray:
    """Delta_Gamma H + 2H(H^2 - K); zero on Willmore-stationary surfaces.

    H is passed through the 2/3 filter before the Laplacian so that sampling
    noise in the top third of the spectrum is not amplified by |k|^2.
    """
    g = snap.grid
    return g.lap(g.dealias(snap.H)) / snap.E + 2 * snap.H * (snap.H**2 - snap.K)


def _rel(defect, *parts, grid):
    den = sum(grid.l2_norm(p) for p in parts)
    return 0.0 if den == 0 else grid.l2_norm(defect) / den


def gauss_codazzi_residuals(snap: GeometrySnapshot) -> tuple[float, float, float]:
    """Relative L2 defects of the Gauss equation and the two Codazzi equations."""
    g = snap.grid
    E, L, M, N, H = snap.E, snap.L, snap.M, snap.N, snap.H
    Ea, Eb = g.grad(E)
    La, Lb = g.grad(L)
    Ma, Mb = g.grad(M)
    Na, Nb = g.grad(N)
    lhs = L * N - M * M
    rhs = 0.5 * (-g.lap(E) + (Ea**2 + Eb**2) / E)
    gauss = _rel(lhs - rhs, lhs, rhs, grid=g)
    # one scale for both Codazzi equations: on a surface of revolution every
    # term of the first one vanishes identically
    parts = (La, Lb, Ma, Mb, Na, Nb, H * Ea, H * Eb)
    c1 = _rel(Na - Mb - H * Ea, *parts, grid=g)
    c2 = _rel(Lb - Ma - H * Eb, *parts, grid=g)
    return gauss, c1, c2


# -- torus of revolution in a conformal chart ---------------------------------

def torus_period(a: float, r: float) -> float:
    """Conformal period of the latitude coordinate."""
    return 2 * np.pi * r / np.sqrt(a * a - r * r)


def torus_grid(n1: int, n2: int, a: float, r: float) -> Grid:
    return Grid(n1, n2, 2 * np.pi, torus_period(a, r))


def conformal_latitude(a: float, r: float, w: np.ndarray, n_quad: int = 4096) -> np.ndarray:
    """Invert w(v) = int_0^v r / (a + r cos s) ds at the requested w.

    The integral is the periodic trapezoid rule on ``n_quad`` nodes written
    as a Fourier series, which is spectrally accurate for this integrand.
    """
    s = 2 * np.pi * np.arange(n_quad) / n_quad
    gh = np.fft.rfft(r / (a + r * np.cos(s))).real / n_quad
    g0 = gh[0]
    m = np.arange(1, gh.size)
    keep = np.abs(gh[1:]) > 1e-18 * g0
    m, coef = m[keep], 2 * gh[1:][keep] / m[keep]

    def wmap(v):
        return g0 * v + np.dot(coef, np.sin(m * v))

    period = 2 * np.pi * g0
    out = np.empty_like(np.asarray(w, dtype=float))
    for idx, wi in np.ndenumerate(np.asarray(w, dtype=float)):
        k, wr = divmod(wi, period)
        if wr == 0.0:
            out[idx] = 2 * np.pi * k
            continue
        out[idx] = 2 * np.pi * k + brentq(lambda v: wmap(v) - wr, 0.0, 2 * np.pi,
                                          xtol=1e-15, maxiter=200)
    return out


def torus_embedding(a: float, r: float, grid: Grid) -> np.ndarray:
    u, w = grid.mesh()
    v = conformal_latitude(a, r, w[0])[None, :]
    rho = a + r * np.cos(v)
    return np.stack([rho * np.cos(u), rho * np.sin(u), r * np.sin(v) + 0 * u])


def make_torus(a: float, r: float, grid: Grid, c0: float = C0_DEFAULT,
               eps: float = EPS_DEGENERATE_DEFAULT) -> GeometrySnapshot:
    """Torus of revolution with radii a > r > 0 in conformal coordinates (u, w).

    The grid must have l1 = 2 pi and l2 equal to the conformal period
    ``torus_period(a, r)``; the outward normal is R_u x R_w / |R_u x R_w|.
    """
    if not a > r > 0:
        raise BadAspect(f"need a > r > 0, got a={a}, r={r}")
    if abs(grid.l1 - 2 * np.pi) > 1e-12:
        raise BadAspect(f"l1 must be 2*pi, got {grid.l1!r}")
    lp = torus_period(a, r)
    if abs(grid.l2 - lp) > 1e-12 * max(1.0, lp):
        raise BadAspect(f"l2 must be the conformal period {lp!r}, got {grid.l2!r}")
    return snapshot(grid, torus_embedding(a, r, grid), c0=c0, eps=eps)
