"""Modal simulation of the delayed closed loop.

The plant is truncated to ``M`` eigenmodes ``z_n = <z, phi_n>`` and
coupled with the observer state ``zhat_n`` (``n <= N``).  Every modal
equation has the form

    x' = Lambda x + c x(t - h) + G(x),

with a diagonal, possibly very stiff ``Lambda = -lambda_n + q_c`` and a
non-stiff coupling ``G`` (input and output injection).  Time stepping is
the fourth-order exponential time-differencing Runge-Kutta scheme of Cox
and Matthews: the diagonal part is propagated exactly, so the step size is
set by accuracy and by ``G`` rather than by ``lambda_M``.  The delay is an
integer number of steps; half-step delayed values come from four-point
cubic interpolation of the stored history.
"""

from __future__ import annotations

import ast
import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import NumericalError, ValidationError
from .model import PlantConfig, SpectralReduction
from .spectral import EigenBasis, fd_derivative, project_all, trapezoid_weights

__all__ = [
    "InitialCondition",
    "SimConfig",
    "Trajectory",
    "DecayFit",
    "etdrk4_coefficients",
    "integrate_dde",
    "simulate_closed_loop",
    "simulate_open_loop",
    "simulate_scalar_dde",
    "reconstruct_field",
    "h1_energy",
    "energy_form",
    "sobolev_h1_sq",
    "estimate_decay_rate",
    "write_trajectory_csv",
    "write_field_csv",
]

OVERFLOW = 1e12

_IC_FUNCS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "sinh", "cosh",
                 "abs", "arctan", "where", "minimum", "maximum", "heaviside")
}
_IC_CONSTS = {"pi": np.pi, "e": np.e}
_IC_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
             ast.Constant, ast.Compare, ast.operator, ast.unaryop, ast.cmpop)


def _compile_expression(expr: str):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse initial condition {expr!r}: {exc.msg}") from exc
    allowed = set(_IC_FUNCS) | set(_IC_CONSTS) | {"tau", "x"}
    for node in ast.walk(tree):
        if not isinstance(node, _IC_NODES):
            raise ValidationError(f"initial condition: {type(node).__name__} not allowed")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise ValidationError(f"initial condition: unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not isinstance(node.func, ast.Name):
            raise ValidationError("initial condition: only plain function calls allowed")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValidationError("initial condition: only numeric constants allowed")
    return compile(tree, "<initial condition>", "eval")


@dataclass(frozen=True)
class InitialCondition:
    """Prehistory ``z0(tau, x)`` on ``[-h, 0] x [0, 1]``.

    Either an expression in ``tau`` and ``x`` (numpy functions and ``pi``
    allowed) or a table of ``x, value`` samples, held constant in ``tau``.
    """

    expression: str | None = None
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    _code: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if (self.expression is None) == (self.table is None):
            raise ValidationError("initial condition needs exactly one of expression or table")
        if self.expression is not None:
            object.__setattr__(self, "_code", _compile_expression(self.expression))
        else:
            xs, vs = (np.asarray(t, dtype=float) for t in self.table)
            if xs.size < 2 or xs.shape != vs.shape or np.any(np.diff(xs) <= 0):
                raise ValidationError("initial condition table needs increasing x and matching values")
            if xs[0] > 0 or xs[-1] < 1:
                raise ValidationError("initial condition table must cover [0, 1]")

    @classmethod
    def from_csv(cls, path: str | Path) -> "InitialCondition":
        xs, vs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    vs.append(float(row[1]))
                except (ValueError, IndexError):
                    if xs:
                        raise ValidationError(f"bad row in {path}: {row}")
        return cls(table=(tuple(xs), tuple(vs)))

    def __call__(self, tau, x) -> NDArray[np.float64]:
        """Evaluate on the outer product of ``tau`` (rows) and ``x`` (columns)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))[:, None]
        x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
        if self.expression is not None:
            env = {"__builtins__": {}, **_IC_FUNCS, **_IC_CONSTS, "tau": tau, "x": x}
            with np.errstate(all="ignore"):  # non-finite values are rejected below
                val = eval(self._code, env)  # names checked in _compile_expression
        else:
            xs, vs = (np.asarray(t, dtype=float) for t in self.table)
            val = np.interp(x, xs, vs)
        val = np.broadcast_to(np.asarray(val, dtype=float), (tau.shape[0], x.shape[1]))
        if not np.all(np.isfinite(val)):
            raise ValidationError("initial condition is not finite on the grid")
        return np.array(val)

    def describe(self) -> str:
        return self.expression if self.expression is not None else "table"


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``dt`` is snapped to ``h / round(h / dt)`` so the delay spans an exact
    number of steps (at least 10).
    """

    ic: InitialCondition
    M_modes: int = 100
    dt: float = 1e-3
    T_final: float = 10.0
    observer_init: str = "zeros"
    x_samples: int = 101

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt={self.dt} must be > 0")
        if not self.T_final > 0:
            raise ValidationError(f"T_final={self.T_final} must be > 0")
        if self.dt > self.T_final:
            raise ValidationError(f"dt={self.dt} exceeds T_final={self.T_final}")
        if self.observer_init not in ("zeros", "compatibility"):
            raise ValidationError(f"observer_init must be zeros or compatibility, got {self.observer_init!r}")
        if int(self.M_modes) != self.M_modes or self.M_modes < 1:
            raise ValidationError("M_modes must be a positive integer")
        if int(self.x_samples) != self.x_samples or self.x_samples < 2:
            raise ValidationError("x_samples must be an integer >= 2")

    def delay_steps(self, h: float) -> tuple[int, float]:
        H = int(round(h / self.dt))
        if H < 10:
            raise ValidationError(f"h/dt = {h / self.dt:.3g} must round to at least 10 steps")
        return H, h / H

    def check_against(self, N: int, h: float):
        if self.M_modes < N + 10:
            raise ValidationError(f"M_modes={self.M_modes} must be >= N + 10 = {N + 10}")
        self.delay_steps(h)


@dataclass(frozen=True)
class Trajectory:
    """Sampled closed-loop solution; arrays are read-only.

    ``z_modes`` and ``zhat`` are (steps, modes).  ``error_sq`` is
    ``sum_{n<=N} (z_n - zhat_n)^2``.
    """

    times: NDArray[np.float64]
    z_modes: NDArray[np.float64]
    zhat: NDArray[np.float64]
    u: NDArray[np.float64]
    y: NDArray[np.float64]
    h1_sq: NDArray[np.float64]
    l2_sq: NDArray[np.float64]
    error_sq: NDArray[np.float64]
    b_n: NDArray[np.float64]
    N0: int
    dt: float
    h: float
    stopped_early: bool = False
    message: str = ""

    def __post_init__(self):
        n = self.times.size
        for name in ("z_modes", "zhat", "u", "y", "h1_sq", "l2_sq", "error_sq"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise ValidationError(f"{name} has {arr.shape[0]} rows, expected {n}")
            arr.setflags(write=False)
        self.times.setflags(write=False)

    @property
    def N(self) -> int:
        return self.zhat.shape[1]

    @property
    def M(self) -> int:
        return self.z_modes.shape[1]

    @property
    def w_modes(self) -> NDArray[np.float64]:
        """Lifted coordinates ``w_n = z_n + b_n u``."""
        return self.z_modes + self.u[:, None] * self.b_n[None, : self.M]

    @property
    def error(self) -> NDArray[np.float64]:
        return self.z_modes[:, : self.N] - self.zhat


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit of an energy series.

    ``residual`` is the RMS misfit of ``0.5 log(series)`` (dimensionless).
    ``rate_residual`` converts it to a rate: the slope of a linear trend
    with that RMS over the fit window, ``residual * sqrt(12) / window``.
    """

    delta: float
    residual: float
    stderr: float
    t_start: float
    t_end: float
    samples: int

    @property
    def rate_residual(self) -> float:
        span = self.t_end - self.t_start
        return self.residual * np.sqrt(12.0) / span if span > 0 else float("inf")


def etdrk4_coefficients(Ldiag, dt: float, n_contour: int = 32):
    """Exponential integrator weights for a diagonal linear part.

    The phi-function combinations are averaged over a circle of radius one
    around each ``L dt`` in the complex plane, which avoids the
    cancellation of the closed forms for small ``|L dt|``.
    """
    Ldiag = np.asarray(Ldiag, dtype=float)
    z0 = Ldiag * dt
    roots = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    z = z0[:, None] + roots[None, :]
    ez = np.exp(z)
    Q = dt * np.real(np.mean((np.exp(z / 2) - 1) / z, axis=1))
    f1 = dt * np.real(np.mean((-4 - z + ez * (4 - 3 * z + z**2)) / z**3, axis=1))
    f2 = dt * np.real(np.mean((2 + z + ez * (z - 2)) / z**3, axis=1))
    f3 = dt * np.real(np.mean((-4 - 3 * z - z**2 + ez * (4 - z)) / z**3, axis=1))
    return np.exp(z0), np.exp(z0 / 2), Q, f1, f2, f3


def _half_step(hist, j, kink):
    """Value midway between history rows ``j`` and ``j + 1``.

    Four-point cubic interpolation.  The stencil never straddles row
    ``kink`` (the end of the prehistory), where the solution generally has a
    derivative jump.
    """
    if j == kink - 1 and j >= 2:
        return (hist[j - 2] - 5 * hist[j - 1] + 15 * hist[j] + 5 * hist[j + 1]) / 16
    if j == 0 or j == kink:
        return (5 * hist[j] + 15 * hist[j + 1] - 5 * hist[j + 2] + hist[j + 3]) / 16
    return (-hist[j - 1] + 9 * hist[j] + 9 * hist[j + 1] - hist[j + 2]) / 16


def integrate_dde(Ldiag, c: float, coupling: Callable | None, prehistory, dt: float,
                  n_steps: int, overflow: float = OVERFLOW):
    """Integrate ``x' = diag(L) x + c x(t - H dt) + G(x)``.

    ``prehistory`` holds the states at ``t = -H dt, ..., 0`` (H + 1 rows,
    with ``H >= 3``); ``c = 0`` means no delay term and a single row is
    enough.  Returns ``(states, steps_done)`` where ``states`` has the
    prehistory followed by one row per step.
    """
    Ldiag = np.asarray(Ldiag, dtype=float)
    pre = np.atleast_2d(np.asarray(prehistory, dtype=float))
    dim = Ldiag.size
    if pre.shape[1] != dim:
        raise ValidationError(f"prehistory has {pre.shape[1]} columns, expected {dim}")
    H = pre.shape[0] - 1
    delayed = c != 0
    if delayed and H < 3:
        raise ValidationError("a delayed system needs at least 4 prehistory rows")
    E, E2, Q, f1, f2, f3 = etdrk4_coefficients(Ldiag, dt)
    G = coupling if coupling is not None else (lambda x: 0.0)

    hist = np.empty((H + 1 + n_steps, dim))
    hist[: H + 1] = pre
    zero = np.zeros(dim)
    done = 0
    for k in range(n_steps):
        i = H + k  # row of the current state
        x = hist[i]
        if delayed:
            j = i - H
            d0, dh, d1 = c * hist[j], c * _half_step(hist, j, H), c * hist[j + 1]
        else:
            d0 = dh = d1 = zero
        Nx = G(x) + d0
        a = E2 * x + Q * Nx
        Na = G(a) + dh
        b = E2 * x + Q * Na
        Nb = G(b) + dh
        cc = E2 * a + Q * (2 * Nb - Nx)
        Nc = G(cc) + d1
        new = E * x + f1 * Nx + 2 * f2 * (Na + Nb) + f3 * Nc
        hist[i + 1] = new
        done = k + 1
        if not np.all(np.abs(new) < overflow):
            break
    return hist[: H + 1 + done], done


def coupling_step_limit(coupling: Callable, dim: int, c: float = 0.0) -> float:
    """Largest step keeping the explicit part within the RK4 stability disc.

    The coupling is linear, so its matrix is read off column by column;
    the bound is ``2 / rho(G)`` (``rho`` the spectral radius, with ``|c|``
    added for the delayed term).
    """
    G = np.column_stack([coupling(e) for e in np.eye(dim)])
    rho = float(np.max(np.abs(np.linalg.eigvals(G)))) if dim else 0.0
    rho += abs(c)
    return 2.0 / rho if rho > 0 else np.inf


def _prehistory_modes(ic: InitialCondition, basis: EigenBasis, M: int, H: int, dt: float,
                      chunk: int = 512):
    """Project ``z0(tau, .)`` at ``tau = -H dt .. 0`` onto the first ``M`` modes."""
    taus = dt * np.arange(-H, 1)
    sub = basis.truncate(M)
    out = np.empty((taus.size, M))
    for s in range(0, taus.size, chunk):
        out[s : s + chunk] = project_all(ic(taus[s : s + chunk], basis.grid), sub)
    return taus, out


def boundary_input(ic: InitialCondition, plant: PlantConfig, tau) -> NDArray[np.float64]:
    """``u0(tau) = cos(theta2) z0(tau, 1) + sin(theta2) z0_x(tau, 1)``."""
    grid = plant.sl.grid
    vals = ic(tau, grid)
    dz1 = np.array([fd_derivative(row, grid)[-1] for row in vals])
    th2 = plant.sl.theta2
    return np.cos(th2) * vals[:, -1] + np.sin(th2) * dz1


def _series(z, zhat, u, g_plant, g_obs, b_plant, lam, N):
    w = z + u[:, None] * b_plant[None, :]
    y = w @ g_plant
    h1 = np.sum(lam[None, :] * w**2, axis=1) + u**2
    l2 = np.sum(z**2, axis=1)
    err = np.sum((z[:, :N] - zhat) ** 2, axis=1)
    return y, h1, l2, err


def simulate_closed_loop(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction,
                         K, L, N0: int, N: int, simcfg: SimConfig,
                         plant_modes: int | None = None, zhat0=None) -> Trajectory:
    """Delayed plant modes ``n <= M`` with the observer-based controller.

    ``plant_modes`` overrides ``simcfg.M_modes`` without the ``M >= N + 10``
    check; with ``plant_modes = N`` the observer sees an exact model of
    the plant, which is the setting of the internal-model test.  ``zhat0``
    sets the observer's initial state directly, bypassing
    ``simcfg.observer_init``.
    """
    M = simcfg.M_modes if plant_modes is None else int(plant_modes)
    if plant_modes is None:
        simcfg.check_against(N, plant.h)
    elif M < N:
        raise ValidationError(f"plant_modes={M} must be >= N={N}")
    if M > len(basis):
        raise ValidationError(f"M={M} exceeds the {len(basis)} computed modes")
    K = np.asarray(K, dtype=float).reshape(-1)
    L = np.asarray(L, dtype=float).reshape(-1)
    if K.size != N0 or L.size != N0 or not 1 <= N0 < N:
        raise ValidationError(f"gains must have N0={N0} entries with N0 < N={N}")

    H, dt = simcfg.delay_steps(plant.h)
    if abs(dt - simcfg.dt) > 1e-12 * simcfg.dt:
        warnings.warn(f"dt adjusted from {simcfg.dt:.6g} to {dt:.6g} so that h is {H} steps",
                      stacklevel=2)

    lam = basis.lambdas
    q_c = plant.sl.q_c
    c = plant.c
    beta = reduction.beta_n
    bn = reduction.b_n
    g = plant.output_traces(basis)
    gM, gN, bM, bN = g[:M], g[:N], bn[:M], bn[:N]
    betaM, betaN = beta[:M], beta[:N]
    Lpad = np.zeros(N)
    Lpad[:N0] = L
    Ldiag = np.concatenate([-lam[:M] + q_c, -lam[:N] + q_c])

    def coupling(x):
        z, zh = x[:M], x[M:]
        u = K @ zh[:N0]
        innov = (zh + bN * u) @ gN - (z + bM * u) @ gM
        return np.concatenate([betaM * u, betaN * u - Lpad * innov])

    limit = coupling_step_limit(coupling, M + N, c)
    if dt > limit:
        refine = int(np.ceil(dt / limit))
        if H * refine > 10_000_000:
            raise NumericalError(f"coupling needs dt <= {limit:.3g}; refinement too costly")
        warnings.warn(f"dt={dt:.6g} exceeds the explicit coupling bound {limit:.6g}; "
                      f"refining by {refine}", stacklevel=2)
        H, dt = H * refine, dt / refine
    n_steps = int(round(simcfg.T_final / dt))

    _, zpre = _prehistory_modes(simcfg.ic, basis, M, H, dt)
    u00 = float(boundary_input(simcfg.ic, plant, [0.0])[0])
    if zhat0 is not None:
        zhat0 = np.asarray(zhat0, dtype=float).reshape(-1)
        if zhat0.size != N:
            raise ValidationError(f"zhat0 needs {N} entries, got {zhat0.size}")
    elif simcfg.observer_init == "compatibility":
        if K[0] == 0:
            raise ValidationError("compatibility initialization needs k_1 != 0")
        zhat0 = np.zeros(N)
        zhat0[0] = u00 / K[0]
    else:
        zhat0 = np.zeros(N)
    mismatch = abs(u00 - float(K @ zhat0[:N0]))
    if mismatch > 1e-12 * max(1.0, float(np.max(np.abs(zpre)))):
        warnings.warn(f"compatibility condition u0(0) = K zhat(0) fails "
                      f"(u0(0) = {u00:.6g}, K zhat(0) = {float(K @ zhat0[:N0]):.6g})",
                      stacklevel=2)
    pre = np.hstack([zpre, np.broadcast_to(zhat0, (H + 1, N))])
    states, done = integrate_dde(Ldiag, c, coupling, pre, dt, n_steps)
    run = states[H:]
    z, zh = run[:, :M], run[:, M:]
    u = zh[:, :N0] @ K
    y, h1, l2, err = _series(z, zh, u, gM, gN, bM, lam[:M], N)
    stopped = done < n_steps
    msg = ""
    if stopped:
        msg = f"state exceeded {OVERFLOW:.0e} at t = {done * dt:.6g}; run stopped"
        warnings.warn(msg, stacklevel=2)
    return Trajectory(dt * np.arange(done + 1), z.copy(), zh.copy(), u, y, h1, l2, err,
                      np.asarray(bn, dtype=float).copy(), N0, dt, plant.h, stopped, msg)


def simulate_open_loop(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction,
                       simcfg: SimConfig, delay_free: bool = False) -> Trajectory:
    """Plant modes with ``u = 0``.

    ``delay_free=True`` replaces the delayed reaction by its undelayed
    value (``c`` moves into the diagonal), i.e. the ``h = 0`` system.
    """
    M = simcfg.M_modes
    if M > len(basis):
        raise ValidationError(f"M={M} exceeds the {len(basis)} computed modes")
    H, dt = simcfg.delay_steps(plant.h)
    n_steps = int(round(simcfg.T_final / dt))
    lam = basis.lambdas[:M]
    q_c, c = plant.sl.q_c, plant.c
    _, zpre = _prehistory_modes(simcfg.ic, basis, M, H, dt)
    if delay_free:
        states, done = integrate_dde(-lam + q_c + c, 0.0, None, zpre[-1:], dt, n_steps)
        z = states
    else:
        states, done = integrate_dde(-lam + q_c, c, None, zpre, dt, n_steps)
        z = states[H:]
    g = plant.output_traces(basis)[:M]
    u = np.zeros(done + 1)
    zh = np.zeros((done + 1, 0))
    y, h1, l2, err = _series(z, zh, u, g, g[:0], reduction.b_n[:M], lam, 0)
    stopped = done < n_steps
    msg = f"state exceeded {OVERFLOW:.0e}; run stopped" if stopped else ""
    return Trajectory(dt * np.arange(done + 1), z.copy(), zh, u, y, h1, l2, err,
                      np.asarray(reduction.b_n, dtype=float).copy(), 0, dt, plant.h, stopped, msg)


def simulate_scalar_dde(a: float, c: float, h: float, dt: float, T_final: float,
                        history: Callable | float = 1.0):
    """``x' = a x + c x(t - h)`` with a given prehistory; returns ``(t, x)``."""
    H = int(round(h / dt))
    if H < 10:
        raise ValidationError("h/dt must round to at least 10 steps")
    dt = h / H
    taus = dt * np.arange(-H, 1)
    pre = (np.full(taus.size, float(history)) if not callable(history)
           else np.asarray(history(taus), dtype=float))
    n_steps = int(round(T_final / dt))
    states, done = integrate_dde(np.array([a]), c, None, pre[:, None], dt, n_steps)
    return dt * np.arange(done + 1), states[H:, 0].copy()


def _resample_modes(basis: EigenBasis, n: int, x: NDArray[np.float64]):
    return np.array([np.interp(x, basis.grid, basis.modes[k]) for k in range(n)])


def reconstruct_field(traj: Trajectory, basis: EigenBasis, simcfg: SimConfig | None = None,
                      which: str = "state", plant: PlantConfig | None = None,
                      x=None, t_stride: int = 1):
    """Space-time field on ``x`` (default ``x_samples`` uniform points).

    ``which="state"`` gives ``z = sum w_n phi_n + x^2 u / (cos th2 + 2 sin th2)``
    (needs ``plant`` for the lift), ``which="error"`` gives
    ``sum_{n<=N} (z_n - zhat_n) phi_n``.  Returns ``(t, x, values)``.
    """
    if x is None:
        n_x = simcfg.x_samples if simcfg is not None else 101
        x = np.linspace(0.0, 1.0, n_x)
    x = np.asarray(x, dtype=float)
    rows = slice(None, None, t_stride)
    if which == "state":
        if plant is None:
            raise ValidationError("state reconstruction needs the plant for the lift")
        phi = _resample_modes(basis, traj.M, x)
        vals = traj.w_modes[rows] @ phi
        vals = vals + np.outer(traj.u[rows], x**2 / plant.lift_denominator)
    elif which == "error":
        phi = _resample_modes(basis, traj.N, x)
        vals = traj.error[rows] @ phi
    else:
        raise ValidationError(f"which must be state or error, got {which!r}")
    return traj.times[rows], x, vals


def h1_energy(traj: Trajectory, basis: EigenBasis, reduction: SpectralReduction | None = None):
    """``sum_{n<=M} lambda_n w_n^2 + u^2`` at every stored step."""
    lam = basis.lambdas[: traj.M]
    w = traj.w_modes
    return np.sum(lam[None, :] * w**2, axis=1) + traj.u**2


def energy_form(w_field, plant: PlantConfig, grid=None) -> NDArray[np.float64]:
    """Quadrature of the operator's energy form on sampled fields.

    ``int (p w_x^2 + q w^2) + p(0) cot(theta1) w(0)^2 + p(1) cot(theta2) w(1)^2``,
    where a boundary term is dropped at a Dirichlet end.  For ``w`` in the
    operator domain this equals ``sum lambda_n <w, phi_n>^2``.
    """
    sl = plant.sl
    x = sl.grid if grid is None else np.asarray(grid, dtype=float)
    W = np.atleast_2d(np.asarray(w_field, dtype=float))
    wt = trapezoid_weights(x)
    p, q = sl.p(x), sl.q(x)
    dW = np.array([fd_derivative(row, x) for row in W])
    val = (dW**2 * p + W**2 * q) @ wt
    for th, idx in ((sl.theta1, 0), (sl.theta2, -1)):
        if np.sin(th) > 1e-14:
            val = val + p[idx] * np.cos(th) / np.sin(th) * W[:, idx] ** 2
    return val


def sobolev_h1_sq(z_field, grid) -> NDArray[np.float64]:
    """``int z^2 + z_x^2`` by trapezoid quadrature and fourth-order differences."""
    Z = np.atleast_2d(np.asarray(z_field, dtype=float))
    x = np.asarray(grid, dtype=float)
    wt = trapezoid_weights(x)
    dZ = np.array([fd_derivative(row, x) for row in Z])
    return (Z**2 + dZ**2) @ wt


def estimate_decay_rate(times, series, t_start: float | None = None,
                        t_end: float | None = None, min_samples: int = 10) -> DecayFit:
    """Fit ``series ~ C exp(-2 delta t)`` by least squares on ``log``.

    If the series is not positive on the whole window, the window ends just
    before the first non-positive sample.  ``residual`` is the RMS
    deviation of ``0.5 log(series)`` from the fitted line.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(series, dtype=float)
    if t.shape != s.shape:
        raise ValidationError("times and series must have equal length")
    t0 = t[0] if t_start is None else t_start
    t1 = t[-1] if t_end is None else t_end
    mask = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    idx = np.flatnonzero(mask)
    if idx.size:
        bad = np.flatnonzero(~(s[idx] > 0) | ~np.isfinite(s[idx]))
        if bad.size:
            idx = idx[: bad[0]]
    if idx.size < min_samples:
        raise ValidationError(f"decay-rate window has {idx.size} usable samples (< {min_samples})")
    tt, yy = t[idx], 0.5 * np.log(s[idx])
    A = np.vstack([tt, np.ones_like(tt)]).T
    coef, *_ = np.linalg.lstsq(A, yy, rcond=None)
    resid = yy - A @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    dof = max(idx.size - 2, 1)
    sxx = float(np.sum((tt - tt.mean()) ** 2))
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if sxx > 0 else float("inf")
    return DecayFit(float(-coef[0]), rms, stderr, float(tt[0]), float(tt[-1]), int(idx.size))


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path: str | Path, k_modes: int = 10,
                         stride: int = 1):
    """Columns ``t,u,y,h1_sq,l2_sq,z_1..z_k,zhat_1..zhat_N``."""
    k = min(k_modes, traj.M)
    header = ["t", "u", "y", "h1_sq", "l2_sq"] + [f"z_{i}" for i in range(1, k + 1)] \
        + [f"zhat_{i}" for i in range(1, traj.N + 1)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(0, traj.times.size, stride):
            vals = [traj.times[i], traj.u[i], traj.y[i], traj.h1_sq[i], traj.l2_sq[i],
                    *traj.z_modes[i, :k], *traj.zhat[i]]
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def write_field_csv(t, x, values, path: str | Path):
    """Long format ``t,x,value``."""
    with open(path, "w", newline="") as fh:
        fh.write("t,x,value\n")
        for i, ti in enumerate(t):
            st = _fmt(ti)
            for j, xj in enumerate(x):
                fh.write(f"{st},{_fmt(xj)},{_fmt(values[i, j])}\n")
