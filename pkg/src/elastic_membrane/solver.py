"""Time integration: direct IMEX stepping and Picard sweeps over a window.

The stiff constant-coefficient part of the system,

    U1_t, U2_t  ~  (eps0 / Ebar) lap U
    Un_t = -(1 / 2 Ebar) lap H,   H_t = (1 / 2 Ebar) lap Un,

is treated by Crank-Nicolson; everything else is explicit and combined with
it in a Heun predictor-corrector, which makes the step second order.  Extra
corrector passes (``time.corrections``) move the step toward the implicit
trapezoidal rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics as diag
from .config import Config, n_steps
from .dynamics import (AuxState, FlowState, RhsBundle, assemble_rhs, make_initial_flow,
                       strain_rates)
from .elliptic import reconstruct_E, reconstruct_surface, solve_aux
from .errors import NumericalError, StepTooLarge
from .geometry import GeometrySnapshot, cross, make_torus, snapshot, torus_grid
from .spectral import Grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class State:
    t: float
    R: np.ndarray
    flow: FlowState


@dataclass(frozen=True)
class Evaluation:
    snap: GeometrySnapshot
    aux: AuxState
    rhs: RhsBundle


@dataclass
class Stamp:
    t: float
    snap: GeometrySnapshot
    flow: FlowState
    aux: AuxState
    R_tilde: np.ndarray | None = None
    R_hat: np.ndarray | None = None


@dataclass
class Trajectory:
    grid: Grid
    config: Config
    mode: str
    stamps: list = field(default_factory=list)
    series: dict = field(default_factory=dict)  # per time level scalars
    status: str = "ok"
    error: str | None = None
    error_type: str | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.stamps])


@dataclass
class IterationReport:
    D1: list = field(default_factory=list)
    D2: list = field(default_factory=list)
    metric: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = False
    sweeps: int = 0
    non_contraction: bool = False


# -- setup ----------------------------------------------------------------------

def initial_state(cfg: Config) -> tuple[Grid, GeometrySnapshot, FlowState]:
    grid = torus_grid(cfg.grid.n1, cfg.grid.n2, cfg.torus.a, cfg.torus.r)
    snap = make_torus(cfg.torus.a, cfg.torus.r, grid, cfg.tol.c0, cfg.tol.eps_degenerate)
    flow = make_initial_flow(snap, cfg.initial.kind, cfg.initial.amplitude,
                             cfg.run.seed, cfg.initial.band)
    return grid, snap, flow


def _aux(snap, flow, cfg, pi_guess=None):
    t = cfg.tol
    return solve_aux(snap, flow, cfg.physics.eps0, t.pressure, t.pressure_max_iter, t.a0,
                     t.solvability, t.c0, pi_guess)


def evaluate(grid: Grid, R: np.ndarray, flow: FlowState, cfg: Config,
             pi_guess: np.ndarray | None = None) -> Evaluation:
    """Geometry, elliptic solves and the full right-hand side at one state."""
    snap = snapshot(grid, R, c0=cfg.tol.c0, eps=cfg.tol.eps_degenerate)
    aux = _aux(snap, flow, cfg, pi_guess)
    rhs = assemble_rhs(snap, flow, aux, cfg.physics.eps0, cfg.tol.c0)
    return Evaluation(snap, aux, rhs)


# -- Crank-Nicolson part ----------------------------------------------------------

class LinearPart:
    """Constant-coefficient operator A in Fourier space for the stack (U1, U2, Un, H)."""

    def __init__(self, grid: Grid, Ebar: float, eps0: float):
        self.grid = grid
        self.diff = -eps0 * grid.ksq / Ebar
        self.skew = grid.ksq / (2 * Ebar)

    def apply_hat(self, Yh: np.ndarray) -> np.ndarray:
        out = np.empty_like(Yh)
        out[0] = self.diff * Yh[0]
        out[1] = self.diff * Yh[1]
        out[2] = self.skew * Yh[3]
        out[3] = -self.skew * Yh[2]
        return out

    def solve_hat(self, bh: np.ndarray, dt: float) -> np.ndarray:
        """Apply (I - dt/2 A)^-1."""
        out = np.empty_like(bh)
        out[0] = bh[0] / (1 - 0.5 * dt * self.diff)
        out[1] = bh[1] / (1 - 0.5 * dt * self.diff)
        c = 0.5 * dt * self.skew
        det = 1 + c * c
        out[2] = (bh[2] + c * bh[3]) / det
        out[3] = (bh[3] - c * bh[2]) / det
        return out

    def predictor(self, Y: np.ndarray, f: np.ndarray, dt: float) -> np.ndarray:
        g = self.grid
        return Y + dt * g.ifft(self.solve_hat(g.fft(f), dt))

    def corrector(self, Y: np.ndarray, f: np.ndarray, Ys: np.ndarray, fs: np.ndarray,
                  dt: float) -> np.ndarray:
        g = self.grid
        b = g.fft(Y + 0.5 * dt * (f + fs)) - 0.5 * dt * self.apply_hat(g.fft(Ys))
        return g.ifft(self.solve_hat(b, dt))

    def cn_step(self, Y: np.ndarray, dt: float) -> np.ndarray:
        """Pure Crank-Nicolson step of Y_t = A Y."""
        g = self.grid
        Yh = g.fft(Y)
        return g.ifft(self.solve_hat(Yh + 0.5 * dt * self.apply_hat(Yh), dt))


def dt_max(snap: GeometrySnapshot, flow: FlowState, aux: AuxState, eps0: float,
           cfl: float = 0.5) -> float:
    """Stability estimate for the explicit remainder on the retained spectrum."""
    g = snap.grid
    E = snap.E
    Ebar = float(np.mean(E))
    k = np.sqrt((g.n1 // 3 * 2 * np.pi / g.l1) ** 2 + (g.n2 // 3 * 2 * np.pi / g.l2) ** 2)
    sE = np.sqrt(E)
    u1, u2, w1, w2 = flow.U1 / sE, flow.U2 / sE, aux.W1 / sE, aux.W2 / sE
    adv = max(np.max(np.hypot(2 * u1 - w1, 2 * u2 - w2)), np.max(np.hypot(u1 - w1, u2 - w2)),
              np.max(np.hypot(w1, w2)))
    rate = (np.max(np.abs(1 / (2 * E) - 1 / (2 * Ebar))) * k * k
            + eps0 * np.max(np.abs(1 / (E * sE) - 1 / (Ebar * np.sqrt(Ebar)))) * np.sqrt(Ebar) * k * k
            + adv * k)
    return float(cfl / rate) if rate > 0 else np.inf


# -- direct mode ----------------------------------------------------------------------

def _check_tendency(f: np.ndarray, dR: np.ndarray, t: float) -> None:
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(dR))):
        raise StepTooLarge(f"non-finite tendency in step from t = {t:.6g}")


def step_imex(grid: Grid, state: State, dt: float, cfg: Config,
              ev: Evaluation | None = None) -> tuple[State, Evaluation]:
    """One IMEX step; returns the new state and the evaluation at the old one."""
    if ev is None:
        ev = evaluate(grid, state.R, state.flow, cfg)
    eps0 = cfg.physics.eps0
    if cfg.time.enforce_dt_max:
        lim = dt_max(ev.snap, state.flow, ev.aux, eps0, cfg.time.cfl)
        if dt > lim:
            raise StepTooLarge(f"dt = {dt:.3e} exceeds dt_max = {lim:.3e}")
    lin = LinearPart(grid, float(np.mean(ev.snap.E)), eps0)
    Y = state.flow.stack()
    f = ev.rhs.flow_stack()
    _check_tendency(f, ev.rhs.dR, state.t)
    Ys = lin.predictor(Y, f, dt)
    Rs = state.R + dt * ev.rhs.dR
    pi = ev.aux.Pi
    for _ in range(cfg.time.corrections):
        ev_s = evaluate(grid, Rs, FlowState.from_stack(Ys), cfg, pi)
        fs = ev_s.rhs.flow_stack()
        _check_tendency(fs, ev_s.rhs.dR, state.t)
        Ys = lin.corrector(Y, f, Ys, fs, dt)
        Rs = state.R + 0.5 * dt * (ev.rhs.dR + ev_s.rhs.dR)
        pi = ev_s.aux.Pi
    Y1, R1 = Ys, Rs
    if not (np.all(np.isfinite(Y1)) and np.all(np.isfinite(R1))):
        raise StepTooLarge(f"non-finite fields after step at t = {state.t + dt:.6g}")
    return State(state.t + dt, R1, FlowState.from_stack(Y1)), ev


def _series_row(snap, flow, aux, cfg):
    s = cfg.physics.s
    g = snap.grid
    return (diag.willmore_energy(snap, flow.H), diag.kinetic_energy(snap, flow),
            diag.dissipation(snap, aux, cfg.physics.eps0),
            g.sobolev_norm(np.stack([flow.U1, flow.U2]), s) ** 2, aux.pi_iterations)


def _finish_series(rows, times):
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return {"t": np.array(times), "willmore": arr[:, 0], "kinetic": arr[:, 1],
            "dissipation": arr[:, 2], "u_hs_sq": arr[:, 3], "pi_iters": arr[:, 4]}


def run_direct(cfg: Config) -> Trajectory:
    """Integrate from the configured initial data to t_end.

    Numerical failures stop the run; the partial trajectory is returned with
    ``status = "error"`` and the message in ``error``.
    """
    grid, snap0, flow0 = initial_state(cfg)
    traj = Trajectory(grid, cfg, "direct")
    dt = cfg.time.dt
    total = n_steps(cfg.time.t_end, dt)
    if total > cfg.time.max_steps:
        total = cfg.time.max_steps
        traj.status = "truncated"
    state = State(0.0, snap0.R, flow0)
    rows, times = [], []
    stride = cfg.output.stride
    ev = None
    pi_guess = None
    try:
        for i in range(total + 1):
            ev = evaluate(grid, state.R, state.flow, cfg, pi_guess)
            rows.append(_series_row(ev.snap, state.flow, ev.aux, cfg))
            times.append(state.t)
            if i % stride == 0 or i == total:
                traj.stamps.append(Stamp(state.t, ev.snap, state.flow, ev.aux))
            if i == total:
                break
            state, _ = step_imex(grid, state, dt, cfg, ev)
            state = replace(state, t=(i + 1) * dt)
            pi_guess = ev.aux.Pi
    except NumericalError as exc:
        traj.status = "error"
        traj.error = str(exc)
        traj.error_type = type(exc).__name__
        log.warning("direct run stopped at t=%.6g: %s", state.t, exc)
    traj.series = _finish_series(rows, times)
    return traj


# -- Picard mode --------------------------------------------------------------------------

def _frozen_linear(grid: Grid, snap: GeometrySnapshot, flow: FlowState, aux: AuxState,
                   eps0: float):
    """Return Y -> (frozen linear part of the system) at one stamp."""
    E = snap.E
    sE = np.sqrt(E)
    visc = eps0 / (E * sE)
    u1, u2 = flow.U1 / sE, flow.U2 / sE
    w1, w2 = aux.W1 / sE, aux.W2 / sE

    def op(Y):
        U1, U2, Un, H = Y
        Una, Unb = grid.grad(Un)
        Ha, Hb = grid.grad(H)
        out = np.stack([
            visc * grid.lap(sE * U1),
            visc * grid.lap(sE * U2),
            -grid.lap(H) / (2 * E) - (2 * u1 - w1) * Una - (2 * u2 - w2) * Unb,
            grid.lap(Un) / (2 * E) + w1 * Ha + w2 * Hb,
        ])
        return grid.dealias(out)

    return op


def _chart_velocity(snap: GeometrySnapshot, Un, W1, W2):
    sE = np.sqrt(snap.E)
    return snap.grid.dealias(Un * cross(snap.Ra, snap.Rb) / snap.E
                             + (W1 / sE) * snap.Ra + (W2 / sE) * snap.Rb)


def _trapezoid(values: np.ndarray, dt: float) -> float:
    if len(values) < 2:
        return 0.0
    return float(dt * (np.sum(values) - 0.5 * (values[0] + values[-1])))


def run_picard(cfg: Config) -> tuple[Trajectory, IterationReport]:
    """Picard iteration on [0, T_window] with all coefficients frozen at the previous sweep."""
    grid, snap0, flow0 = initial_state(cfg)
    eps0 = cfg.physics.eps0
    s = cfg.physics.s
    dt = cfg.time.dt
    K = n_steps(cfg.picard.T_window, dt)
    ts = dt * np.arange(K + 1)
    traj = Trajectory(grid, cfg, "picard")
    report = IterationReport()

    aux0 = _aux(snap0, flow0, cfg)
    # sweep 0 is the initial surface as the reconstruction chain represents it;
    # this differs from the sampled data only by truncation error, and makes a
    # rest state an exact fixed point of the first sweep
    Rh0, R0 = reconstruct_surface(grid, flow0.H, snap0.R)
    E0 = reconstruct_E(grid, R0)
    R = np.repeat(R0[None], K + 1, axis=0)
    E = np.repeat(E0[None], K + 1, axis=0)
    Y = np.repeat(flow0.stack()[None], K + 1, axis=0)
    W = np.repeat(np.stack([aux0.W1, aux0.W2])[None], K + 1, axis=0)
    Pi = np.repeat(aux0.Pi[None], K + 1, axis=0)
    Rt = np.repeat(snap0.R[None], K + 1, axis=0)
    Rh = np.repeat(Rh0[None], K + 1, axis=0)
    iters = np.full(K + 1, aux0.pi_iterations)

    try:
        for sweep in range(1, cfg.picard.max_sweeps + 1):
            snaps, ops, forcing = [], [], []
            W_new, Pi_new = np.empty_like(W), np.empty_like(Pi)
            for k in range(K + 1):
                snap = snapshot(grid, R[k], E=E[k], c0=cfg.tol.c0, eps=cfg.tol.eps_degenerate)
                flow = FlowState.from_stack(Y[k])
                aux = AuxState(W[k, 0], W[k, 1], Pi[k], *strain_rates(snap, flow))
                op = _frozen_linear(grid, snap, flow, aux, eps0)
                full = assemble_rhs(snap, flow, aux, eps0, cfg.tol.c0).flow_stack()
                forcing.append(full - op(Y[k]))
                ops.append(op)
                snaps.append(snap)
                nxt = _aux(snap, flow, cfg, Pi[k])
                W_new[k] = (nxt.W1, nxt.W2)
                Pi_new[k] = nxt.Pi
                iters[k] = nxt.pi_iterations

            # linear sweep with the direct-mode IMEX machinery
            Y_new = np.empty_like(Y)
            Y_new[0] = Y[0]
            for k in range(K):
                lin = LinearPart(grid, float(np.mean(E[k])), eps0)
                f = ops[k](Y_new[k]) + forcing[k]
                Ys = lin.predictor(Y_new[k], f, dt)
                for _ in range(cfg.time.corrections):
                    fs = ops[k + 1](Ys) + forcing[k + 1]
                    Ys = lin.corrector(Y_new[k], f, Ys, fs, dt)
                Y_new[k + 1] = Ys

            # surface: integrate R~, then reconstruct R^, R and E
            V = np.stack([_chart_velocity(snaps[k], Y[k, 2], W[k, 0], W[k, 1])
                          for k in range(K + 1)])
            Rt_new = np.empty_like(Rt)
            Rt_new[0] = snap0.R
            for k in range(K):
                Rt_new[k + 1] = Rt_new[k] + 0.5 * dt * (V[k] + V[k + 1])
            Rh_new, R_new = np.empty_like(R), np.empty_like(R)
            for k in range(K + 1):
                Rh_new[k], R_new[k] = reconstruct_surface(grid, Y[k, 3], Rt_new[k])
            E_new = np.stack([reconstruct_E(grid, R_new[k]) for k in range(K + 1)])
            if not all(np.all(np.isfinite(a)) for a in (Y_new, R_new, E_new)):
                raise StepTooLarge(f"non-finite fields in sweep {sweep}")

            dY = Y_new - Y
            sup1 = max(grid.sobolev_norm(dY[k], s - 3) for k in range(K + 1))
            integ = _trapezoid(np.array([grid.sobolev_norm(dY[k, :2], s - 2) ** 2
                                         for k in range(K + 1)]), dt)
            D1 = sup1 + integ
            D2 = max(grid.sobolev_norm(R_new[k] - R[k], s - 1)
                     + grid.sobolev_norm(E_new[k] - E[k], s - 1) for k in range(K + 1))
            metric = D1 + cfg.picard.delta * D2
            report.D1.append(D1)
            report.D2.append(D2)
            report.metric.append(metric)
            if len(report.metric) >= 2:
                report.ratios.append(metric / report.metric[-2])
            report.sweeps = sweep
            log.info("picard sweep %d: D1=%.3e D2=%.3e", sweep, D1, D2)

            Y, R, E, W, Pi, Rt, Rh = Y_new, R_new, E_new, W_new, Pi_new, Rt_new, Rh_new
            if metric < cfg.picard.tol:
                report.converged = True
                break
            if len(report.ratios) >= 2 and report.ratios[-1] > 1 and report.ratios[-2] > 1:
                report.non_contraction = True
                log.warning("picard iteration is not contracting; shorten T_window")
                break
    except NumericalError as exc:
        traj.status = "error"
        traj.error = str(exc)
        traj.error_type = type(exc).__name__

    rows = []
    try:
        for k in range(K + 1):
            snap = snapshot(grid, R[k], E=E[k], c0=cfg.tol.c0, eps=cfg.tol.eps_degenerate)
            flow = FlowState.from_stack(Y[k])
            aux = AuxState(W[k, 0], W[k, 1], Pi[k], *strain_rates(snap, flow), int(iters[k]))
            rows.append(_series_row(snap, flow, aux, cfg))
            if k % cfg.output.stride == 0 or k == K:
                traj.stamps.append(Stamp(float(ts[k]), snap, flow, aux, Rt[k], Rh[k]))
    except NumericalError as exc:
        traj.status = "error"
        traj.error = traj.error or str(exc)
        traj.error_type = traj.error_type or type(exc).__name__
    traj.series = _finish_series(rows, ts[:len(rows)])
    return traj, report
