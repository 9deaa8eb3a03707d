"""Spectral reduction of the delayed plant and the truncated closed-loop model."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError
from .spectral import EigenBasis, SLProblem, fd_derivative, project_all, trapezoid_weights

__all__ = [
    "Measurement",
    "PlantConfig",
    "SpectralReduction",
    "TruncatedModel",
    "build_shape_functions",
    "build_reduction",
    "choose_N0",
    "assemble_truncated",
    "residual_norm",
]


class Measurement(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class PlantConfig:
    sl: SLProblem
    c: float
    h: float
    measurement: Measurement = Measurement.DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "measurement", Measurement(self.measurement))
        if self.c == 0:
            raise ValidationError("reaction-delay gain c must be nonzero")
        if not self.h > 0:
            raise ValidationError(f"delay h={self.h} must be > 0")
        if np.min(self.sl.q(self.sl.grid)) <= 0:
            raise ValidationError("q must be strictly positive after the q / q_c split")
        th1 = self.sl.theta1
        if self.measurement is Measurement.DIRICHLET and not th1 > 0:
            raise ValidationError("Dirichlet measurement needs theta1 in (0, pi/2]")
        if self.measurement is Measurement.NEUMANN and not th1 < np.pi / 2:
            raise ValidationError("Neumann measurement needs theta1 in [0, pi/2)")

    @property
    def lift_denominator(self) -> float:
        """``cos(theta2) + 2 sin(theta2)``, the scaling of the x^2 lift."""
        return float(np.cos(self.sl.theta2) + 2 * np.sin(self.sl.theta2))

    def output_traces(self, basis: EigenBasis) -> NDArray[np.float64]:
        """``phi_n(0)`` or ``phi_n'(0)`` depending on the measurement."""
        return basis.phi0 if self.measurement is Measurement.DIRICHLET else basis.dphi0


@dataclass(frozen=True)
class SpectralReduction:
    """Projection data of the lifted plant.

    ``residual_a[N]`` / ``residual_b[N]`` hold ``||R_N a||^2`` and
    ``||R_N b||^2`` for ``N = 0..n_modes``.
    """

    a_fn: NDArray[np.float64]
    b_fn: NDArray[np.float64]
    a_n: NDArray[np.float64]
    b_n: NDArray[np.float64]
    beta_n: NDArray[np.float64]
    beta_n_projection: NDArray[np.float64]
    residual_a: NDArray[np.float64]
    residual_b: NDArray[np.float64]

    def residuals(self, N: int) -> tuple[float, float]:
        return float(self.residual_a[N]), float(self.residual_b[N])


def build_shape_functions(plant: PlantConfig, grid=None):
    """Sample ``a(x)`` and ``b(x)`` of the homogeneous representation."""
    sl = plant.sl
    x = sl.grid if grid is None else np.asarray(grid, dtype=float)
    d = plant.lift_denominator
    p = sl.p(x)
    if sl.p.closed_form:
        dp = sl.p.derivative(x)
    else:
        dp = fd_derivative(p, x)
    a = (2 * p + 2 * x * dp - x**2 * sl.q_tilde(x)) / d
    b = -(x**2) / d
    return a, b


def residual_norm(f_fn, coeffs, N: int, grid) -> float:
    """Parseval tail ``max(0, ||f||^2 - sum_{n<=N} f_n^2)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if N > coeffs.size:
        raise ValidationError(f"only {coeffs.size} coefficients available, asked for N={N}")
    total = float(np.sum(trapezoid_weights(grid) * np.asarray(f_fn) ** 2))
    return max(0.0, total - float(np.sum(coeffs[:N] ** 2)))


def _tails(f_fn, coeffs, grid) -> NDArray[np.float64]:
    total = float(np.sum(trapezoid_weights(grid) * f_fn**2))
    partial = np.concatenate([[0.0], np.cumsum(coeffs**2)])
    return np.maximum(0.0, total - partial)


def build_reduction(plant: PlantConfig, basis: EigenBasis) -> SpectralReduction:
    a, b = build_shape_functions(plant, basis.grid)
    a_n = project_all(a, basis)
    b_n = project_all(b, basis)
    th2 = plant.sl.theta2
    beta_boundary = basis.p1 * (-np.cos(th2) * basis.dphi1 + np.sin(th2) * basis.phi1)
    beta_proj = a_n + (-basis.lambdas + plant.sl.q_c) * b_n
    return SpectralReduction(
        a_fn=a,
        b_fn=b,
        a_n=a_n,
        b_n=b_n,
        beta_n=beta_boundary,
        beta_n_projection=beta_proj,
        residual_a=_tails(a, a_n, basis.grid),
        residual_b=_tails(b, b_n, basis.grid),
    )


def choose_N0(lambdas, q_c: float, c: float) -> int:
    """Smallest ``N0 >= 1`` with ``-lambda_n + q_c + |c| < 0`` for every computed ``n > N0``."""
    lam = np.asarray(getattr(lambdas, "lambdas", lambdas), dtype=float)
    bad = np.flatnonzero(-lam + q_c + abs(c) >= 0)
    if bad.size and bad[-1] == lam.size - 1:
        raise ValidationError(
            f"-lambda_n + q_c + |c| >= 0 up to the last computed mode n={lam.size}; compute more modes"
        )
    last_bad = int(bad[-1]) + 1 if bad.size else 0
    return max(1, last_bad)


@dataclass(frozen=True)
class TruncatedModel:
    N0: int
    N: int
    measurement: Measurement
    A0: NDArray[np.float64]
    A1: NDArray[np.float64]
    B0: NDArray[np.float64]
    C0: NDArray[np.float64]
    C1t: NDArray[np.float64]
    K: NDArray[np.float64]
    L: NDArray[np.float64]
    F1: NDArray[np.float64]
    F2: NDArray[np.float64]
    F3: NDArray[np.float64]
    Lcal: NDArray[np.float64]
    Ktilde: NDArray[np.float64]
    E: NDArray[np.float64]

    _BLOCKS = ("A0", "A1", "B0", "C0", "C1t", "K", "L", "F1", "F2", "F3", "Lcal", "Ktilde", "E")

    def dump(self) -> str:
        """Plain-text dump, one labeled block per matrix, row-major, 17 significant digits."""
        out = [f"# TruncatedModel N0={self.N0} N={self.N} measurement={self.measurement.value}"]
        for name in self._BLOCKS:
            m = np.atleast_2d(getattr(self, name))
            out.append(f"[{name}] {m.shape[0]} {m.shape[1]}")
            for row in m:
                out.append(" ".join(format(v, ".17g") for v in row))
        return "\n".join(out) + "\n"

    @staticmethod
    def parse_dump(text: str) -> dict[str, NDArray[np.float64]]:
        blocks: dict[str, NDArray[np.float64]] = {}
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        i = 0
        while i < len(lines):
            name, r, c = lines[i].split()
            r, c = int(r), int(c)
            rows = [[float(v) for v in lines[i + 1 + k].split()] for k in range(r)]
            blocks[name.strip("[]")] = np.array(rows).reshape(r, c)
            i += 1 + r
        return blocks


def assemble_truncated(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction,
                       K, L, N0: int, N: int) -> TruncatedModel:
    if N < N0 + 1:
        raise ValidationError(f"need N >= N0 + 1, got N={N}, N0={N0}")
    if N > len(basis):
        raise ValidationError(f"N={N} exceeds the {len(basis)} computed modes")
    K = np.atleast_2d(np.asarray(K, dtype=float)).reshape(1, -1)
    L = np.asarray(L, dtype=float).reshape(-1, 1)
    if K.shape != (1, N0) or L.shape != (N0, 1):
        raise ValidationError(f"gains must be 1x{N0} and {N0}x1, got {K.shape} and {L.shape}")

    lam = basis.lambdas
    q_c = plant.sl.q_c
    g = plant.output_traces(basis)
    if plant.measurement is Measurement.DIRICHLET:
        scale = np.sqrt(lam[N0:N])
    else:
        scale = lam[N0:N]

    A0 = np.diag(-lam[:N0] + q_c)
    A1 = np.diag(-lam[N0:N] + q_c)
    B0 = reduction.beta_n[:N0].reshape(-1, 1)
    C0 = g[:N0].reshape(1, -1)
    C1t = (g[N0:N] / scale).reshape(1, -1)

    zero = np.zeros((N0, N0))
    F1 = np.block([[A0 + B0 @ K, L @ C0], [zero, A0 - L @ C0]])
    F2 = np.vstack([L @ C1t, -L @ C1t])
    F3 = A1
    Lcal = np.vstack([L, -L])
    Ktilde = np.hstack([K, np.zeros((1, N0))])
    E = Ktilde @ np.hstack([F1, F2, Lcal])
    return TruncatedModel(N0, N, plant.measurement, A0, A1, B0, C0, C1t, K, L,
                          F1, F2, F3, Lcal, Ktilde, E)
