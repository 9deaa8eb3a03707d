"""Finite-difference eigendecomposition of a Robin Sturm-Liouville operator.

The operator is ``A f = -(p f')' + q f`` on (0, 1) with boundary conditions

    cos(theta1) f(0) - sin(theta1) f'(0) = 0
    cos(theta2) f(1) + sin(theta2) f'(1) = 0

Discretization is second-order central differences on a uniform grid.
Robin ends are closed with a half cell (equivalently, ghost-point
elimination); Dirichlet ends drop the boundary node.  Multiplying the
rows by the trapezoid weights gives a symmetric matrix, so the discrete
problem ``S f = lambda W f`` is a symmetric tridiagonal eigenproblem after
the similarity ``W^{-1/2} S W^{-1/2}``.  Eigenvectors come out orthonormal
in the trapezoid inner product, which is the inner product used for every
projection in the package.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import NumericalError, ValidationError

__all__ = [
    "Coefficient",
    "SLProblem",
    "EigenBasis",
    "WeylReport",
    "compute_eigenbasis",
    "trapezoid_weights",
    "inner",
    "project",
    "project_all",
    "validate_weyl_bounds",
    "fd_derivative",
]

_ZERO_ANGLE = 1e-7  # below this, Robin is indistinguishable from Dirichlet in double precision


@dataclass(frozen=True)
class Coefficient:
    """A coefficient function on [0, 1].

    ``kind`` is one of ``"constant"``, ``"polynomial"`` (``values`` holds
    the coefficients in increasing degree) or ``"table"`` (``table`` holds
    the sampled ``(x, value)`` pairs, interpolated by a cubic spline).
    """

    kind: str
    values: tuple[float, ...] = ()
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    @classmethod
    def constant(cls, value: float) -> "Coefficient":
        return cls("constant", (float(value),))

    @classmethod
    def polynomial(cls, coeffs) -> "Coefficient":
        coeffs = tuple(float(c) for c in coeffs)
        if not coeffs:
            raise ValidationError("polynomial coefficient needs at least one term")
        return cls("polynomial", coeffs)

    @classmethod
    def from_table(cls, x, values) -> "Coefficient":
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != values.shape or x.size < 4:
            raise ValidationError("coefficient table needs >= 4 matching (x, value) rows")
        if np.any(np.diff(x) <= 0) or x[0] > 0 or x[-1] < 1:
            raise ValidationError("coefficient table abscissae must increase and cover [0, 1]")
        return cls("table", (), (tuple(x), tuple(values)))

    @classmethod
    def from_csv(cls, path: str | Path) -> "Coefficient":
        xs, vs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    xv, vv = float(row[0]), float(row[1])
                except (ValueError, IndexError):
                    if xs:
                        raise ValidationError(f"bad row in {path}: {row}")
                    continue  # header line
                xs.append(xv)
                vs.append(vv)
        return cls.from_table(xs, vs)

    @property
    def closed_form(self) -> bool:
        return self.kind in ("constant", "polynomial")

    def __call__(self, x) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.values[0])
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, self.values)
        if self.kind == "table":
            return CubicSpline(*self.table)(x)
        raise ValidationError(f"unknown coefficient kind {self.kind!r}")

    def derivative(self, x) -> NDArray[np.float64]:
        """Analytic derivative; only defined for closed-form kinds."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(
                x, np.polynomial.polynomial.polyder(self.values)
            )
        raise ValidationError("table coefficients have no analytic derivative")


@dataclass(frozen=True)
class SLProblem:
    p: Coefficient
    q: Coefficient
    q_c: float = 0.0
    theta1: float = 0.0
    theta2: float = 0.0
    grid_points: int = 2001

    def __post_init__(self):
        if int(self.grid_points) != self.grid_points or self.grid_points < 3:
            raise ValidationError("grid_points must be an integer >= 3")
        for name in ("theta1", "theta2"):
            th = getattr(self, name)
            if not (0.0 <= th <= np.pi / 2 + 1e-15):
                raise ValidationError(f"{name}={th} outside [0, pi/2]")
        x = self.grid
        if np.min(self.p(x)) <= 0:
            raise ValidationError("p must be strictly positive on [0, 1]")
        if np.min(self.q(x)) < 0:
            raise ValidationError("q must be non-negative on [0, 1] (choose q_c accordingly)")

    @property
    def grid(self) -> NDArray[np.float64]:
        return np.linspace(0.0, 1.0, int(self.grid_points))

    def q_tilde(self, x) -> NDArray[np.float64]:
        """Reaction coefficient of the plant, ``q(x) - q_c``."""
        return self.q(x) - self.q_c

    def bounds(self) -> tuple[float, float, float]:
        """Sampled envelopes ``(p_low, p_high, q_high)``."""
        x = self.grid
        pv = self.p(x)
        return float(pv.min()), float(pv.max()), float(self.q(x).max())

    def with_grid(self, grid_points: int) -> "SLProblem":
        return SLProblem(self.p, self.q, self.q_c, self.theta1, self.theta2, grid_points)


@dataclass(frozen=True)
class EigenBasis:
    """First eigenpairs of the operator, sampled on ``grid``.

    ``modes[n-1]`` is the unit-norm eigenfunction for ``lambdas[n-1]``;
    ``traces[n-1]`` is ``(phi(0), phi'(0), phi(1), phi'(1))``.
    """

    lambdas: NDArray[np.float64]
    modes: NDArray[np.float64]
    traces: NDArray[np.float64]
    grid: NDArray[np.float64]
    theta1: float = 0.0
    theta2: float = 0.0
    p0: float = 1.0
    p1: float = 1.0
    raw_lambdas: NDArray[np.float64] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.lambdas)

    @property
    def weights(self) -> NDArray[np.float64]:
        return trapezoid_weights(self.grid)

    @property
    def phi0(self):
        return self.traces[:, 0]

    @property
    def dphi0(self):
        return self.traces[:, 1]

    @property
    def phi1(self):
        return self.traces[:, 2]

    @property
    def dphi1(self):
        return self.traces[:, 3]

    def truncate(self, n_modes: int) -> "EigenBasis":
        raw = None if self.raw_lambdas is None else self.raw_lambdas[:n_modes]
        return EigenBasis(self.lambdas[:n_modes], self.modes[:n_modes], self.traces[:n_modes],
                          self.grid, self.theta1, self.theta2, self.p0, self.p1, raw)

    def gram(self) -> NDArray[np.float64]:
        return (self.modes * self.weights) @ self.modes.T


def trapezoid_weights(grid) -> NDArray[np.float64]:
    grid = np.asarray(grid, dtype=float)
    w = np.empty_like(grid)
    dx = np.diff(grid)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


def _assemble(problem: SLProblem):
    """Symmetric tridiagonal form of the discrete operator.

    Returns ``(diag, offdiag, weights, lo, hi)`` where the unknowns are the
    grid nodes ``lo..hi`` inclusive.
    """
    x = problem.grid
    m = x.size
    dx = 1.0 / (m - 1)
    c1, s1 = np.cos(problem.theta1), np.sin(problem.theta1)
    c2, s2 = np.cos(problem.theta2), np.sin(problem.theta2)
    dirichlet0 = s1 < _ZERO_ANGLE
    dirichlet1 = s2 < _ZERO_ANGLE

    p_half = problem.p((x[:-1] + x[1:]) / 2)  # p at i + 1/2
    qv = problem.q(x)

    diag = np.empty(m)
    diag[1:-1] = (p_half[:-1] + p_half[1:]) / dx + qv[1:-1] * dx
    w = np.full(m, dx)
    # Robin ends: half cell, flux p f' replaced through the boundary relation
    w[0] = w[-1] = dx / 2
    if not dirichlet0:
        diag[0] = p_half[0] / dx + problem.p(0.0) * (c1 / s1) + qv[0] * dx / 2
    if not dirichlet1:
        diag[-1] = p_half[-1] / dx + problem.p(1.0) * (c2 / s2) + qv[-1] * dx / 2
    off = -p_half / dx

    lo = 1 if dirichlet0 else 0
    hi = m - 2 if dirichlet1 else m - 1
    return diag[lo:hi + 1], off[lo:hi], w[lo:hi + 1], lo, hi


def _tridiag_eigs(problem: SLProblem, n_modes: int, vectors: bool):
    d, e, w, lo, hi = _assemble(problem)
    if n_modes > d.size:
        raise ValidationError(
            f"n_modes={n_modes} exceeds the {d.size} unknowns of a {problem.grid_points}-point grid"
        )
    sw = np.sqrt(w)
    dd = d / w
    ee = e / (sw[:-1] * sw[1:])
    try:
        if vectors:
            lam, v = eigh_tridiagonal(dd, ee, select="i", select_range=(0, n_modes - 1))
            return lam, v / sw[:, None], lo, hi
        lam = eigh_tridiagonal(dd, ee, eigvals_only=True, select="i",
                               select_range=(0, n_modes - 1))
        return lam, None, lo, hi
    except LinAlgError as exc:
        raise NumericalError(f"tridiagonal eigensolver failed on {d.size} unknowns: {exc}") from exc


def compute_eigenbasis(problem: SLProblem, n_modes: int, richardson: bool = True) -> EigenBasis:
    """First ``n_modes`` eigenpairs of the operator.

    With ``richardson`` (and an even number of grid intervals) the
    eigenvalues are extrapolated from this grid and the grid with twice the
    spacing, ``(4 lam_h - lam_2h) / 3``.  Eigenfunctions and traces always
    come from the fine grid.
    """
    if n_modes < 1:
        raise ValidationError("n_modes must be >= 1")
    lam, vecs, lo, hi = _tridiag_eigs(problem, n_modes, vectors=True)
    raw = lam.copy()
    m = problem.grid_points
    if richardson and (m - 1) % 2 == 0 and (m - 1) // 2 - 1 >= n_modes:
        coarse, _, _, _ = _tridiag_eigs(problem.with_grid((m - 1) // 2 + 1), n_modes, vectors=False)
        lam = (4.0 * lam - coarse) / 3.0

    modes = np.zeros((n_modes, m))
    modes[:, lo:hi + 1] = vecs.T
    # sign convention: first interior sample positive
    signs = np.sign(modes[:, 1])
    signs[signs == 0] = 1.0
    modes *= signs[:, None]

    x = problem.grid
    dx = x[1] - x[0]
    c1, s1 = np.cos(problem.theta1), np.sin(problem.theta1)
    c2, s2 = np.cos(problem.theta2), np.sin(problem.theta2)
    f0, f1 = modes[:, 0], modes[:, -1]
    if s1 < _ZERO_ANGLE:
        df0 = (-3 * modes[:, 0] + 4 * modes[:, 1] - modes[:, 2]) / (2 * dx)
    else:
        df0 = (c1 / s1) * f0
    if s2 < _ZERO_ANGLE:
        df1 = (3 * modes[:, -1] - 4 * modes[:, -2] + modes[:, -3]) / (2 * dx)
    else:
        df1 = -(c2 / s2) * f1
    traces = np.column_stack([f0, df0, f1, df1])

    if np.any(np.diff(lam) <= 0):
        raise NumericalError("computed eigenvalues are not strictly increasing; refine the grid")
    return EigenBasis(
        lambdas=lam,
        modes=modes,
        traces=traces,
        grid=x,
        theta1=problem.theta1,
        theta2=problem.theta2,
        p0=float(problem.p(0.0)),
        p1=float(problem.p(1.0)),
        raw_lambdas=raw,
    )


def inner(f, g, grid) -> float:
    """Trapezoid L2 inner product on ``grid``."""
    return float(np.sum(trapezoid_weights(grid) * np.asarray(f) * np.asarray(g)))


def _check_grid_fn(f, basis: EigenBasis) -> NDArray[np.float64]:
    f = np.asarray(f, dtype=float)
    if f.shape != basis.grid.shape:
        raise ValidationError(
            f"grid function has shape {f.shape}, basis grid has {basis.grid.shape}"
        )
    return f


def project(f, basis: EigenBasis, n: int) -> float:
    """``<f, phi_n>`` for 1-based mode index ``n``."""
    f = _check_grid_fn(f, basis)
    if not 1 <= n <= len(basis):
        raise ValidationError(f"mode index {n} outside 1..{len(basis)}")
    return float(np.sum(basis.weights * f * basis.modes[n - 1]))


def project_all(f, basis: EigenBasis) -> NDArray[np.float64]:
    """Projection coefficients onto every computed mode.

    ``f`` may also be a 2-D array of grid functions stacked along axis 0.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != basis.grid.size:
        raise ValidationError(
            f"grid function has {f.shape[-1]} samples, basis grid has {basis.grid.size}"
        )
    return (f * basis.weights) @ basis.modes.T


@dataclass(frozen=True)
class WeylReport:
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    lower_margin: NDArray[np.float64]
    upper_margin: NDArray[np.float64]
    passed: NDArray[np.bool_]

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def failures(self) -> list[int]:
        return [int(i) + 1 for i in np.flatnonzero(~self.passed)]


def validate_weyl_bounds(basis: EigenBasis, p_low: float, p_high: float, q_high: float,
                         rtol: float = 1e-8) -> WeylReport:
    """Check ``pi^2 (n-1)^2 p_low <= lambda_n <= pi^2 n^2 p_high + q_high`` mode by mode."""
    n = np.arange(1, len(basis) + 1)
    lower = np.pi**2 * (n - 1) ** 2 * p_low
    upper = np.pi**2 * n**2 * p_high + q_high
    lam = basis.lambdas
    lo_m = lam - lower
    up_m = upper - lam
    slack = rtol * np.maximum(1.0, np.abs(upper))
    passed = (lo_m >= -slack) & (up_m >= -slack) & (lam >= -slack)
    return WeylReport(lower, upper, lo_m, up_m, passed)


def fd_derivative(f, grid) -> NDArray[np.float64]:
    """Fourth-order central differences with one-sided fourth-order ends."""
    f = np.asarray(f, dtype=float)
    dx = grid[1] - grid[0]
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dx)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dx)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dx)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * dx)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * dx)
    return d
