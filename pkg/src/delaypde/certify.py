"""Stability certificates for the truncated closed loop.

For a fixed observer order ``N`` the stability conditions are linear
matrix inequalities in ``(P, Q1, Q2, r1, r2, beta, gamma)``:

    Psi < 0, Theta1 < 0, Theta2 < 0, Theta3 < 0, Theta4 < 0  (Dirichlet output)
    ... and additionally Theta5 > 0                            (Neumann output)

with ``P > 0`` and ``Q1, Q2 >= 0``.  Rather than an interior-point SDP
solver, candidates are built from the explicit Lyapunov-based recipe
(``constructive_candidate``) and then improved by a deterministic
coordinate search over multiplicative knobs (``refine_search``).  The
full problem can be exported in SDPA sparse format for an external solver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.special import polygamma

from .errors import NumericalError, ValidationError
from .linalg import eig_general, solve_lyapunov
from .model import (Measurement, PlantConfig, SpectralReduction, TruncatedModel,
                    assemble_truncated, choose_N0)
from .spectral import EigenBasis

__all__ = [
    "AlphaSet",
    "TailConstants",
    "CertProblem",
    "DecisionVars",
    "Recipe",
    "Certificate",
    "CertifyResult",
    "tail_constants",
    "build_problem",
    "assemble_constraints",
    "constraint_margins",
    "constructive_candidate",
    "refine_search",
    "certify",
    "revalidate",
    "gamma_chain",
    "export_sdpa",
    "read_sdpa",
    "SDPAProblem",
]

STRICT_REL_GAP = 1e-7
PSD_TOL = 1e-10
MATRIX_CONSTRAINTS = ("Psi", "Theta1", "Theta2")
SCALAR_CONSTRAINTS = ("Theta3", "Theta4", "Theta5")


@dataclass(frozen=True)
class AlphaSet:
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    abs_c: float

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3, self.alpha4) <= 0:
            raise ValidationError("alpha_i must be positive")
        if not self.c_frak > 0:
            raise ValidationError(f"alpha choice gives c_frak={self.c_frak:.6g} <= 0")

    @classmethod
    def default(cls, c: float) -> "AlphaSet":
        a = abs(c)
        return cls(4 * a, 4.0, 4.0, 4 * a, a)

    @property
    def c_frak(self) -> float:
        a = self.abs_c
        return 1.0 - 0.5 * (a / self.alpha1 + 1 / self.alpha2 + 1 / self.alpha3 + a / self.alpha4)


@dataclass(frozen=True)
class TailConstants:
    M_phi: float
    M_phi_eps: float
    epsilon: float | None
    terms_computed: int
    tail_bound: float
    partial_sum: float
    envelope: float

    @property
    def value(self) -> float:
        return self.M_phi if self.epsilon is None else self.M_phi_eps


def tail_constants(basis: EigenBasis, N: int, measurement, epsilon: float | None = None,
                   p_low: float = 1.0, n_series: int | None = None,
                   safety: float = 2.0) -> TailConstants:
    """Upper bound of the boundary-trace tail series beyond mode ``N``.

    Dirichlet output: ``sum_{n>N} phi_n(0)^2 / lambda_n``.
    Neumann output: ``sum_{n>N} phi_n'(0)^2 / lambda_n^{3/2+eps}``.

    Terms ``N+1..n_series`` are summed from the basis.  Beyond that, the
    analytic majorant uses ``lambda_n >= pi^2 (n-1)^2 p_low`` together with
    a trace envelope taken over the upper half of the computed terms and
    inflated by ``safety``.
    """
    measurement = Measurement(measurement)
    if n_series is None:
        n_series = min(max(10 * N, 200), len(basis))
    if n_series <= N:
        raise ValidationError(f"n_series={n_series} must exceed N={N}")
    if n_series > len(basis):
        raise ValidationError(f"n_series={n_series} exceeds the {len(basis)} computed modes")
    lam = basis.lambdas[N:n_series]
    half = slice(max(0, (n_series - N) // 2), n_series - N)
    pi2p = np.pi**2 * p_low
    if measurement is Measurement.DIRICHLET:
        tr = basis.phi0[N:n_series]
        partial = float(np.sum(tr**2 / lam))
        env = safety * float(np.max(np.abs(tr[half])))
        # sum_{m >= n_series} 1/m^2 = trigamma(n_series)
        tail = env**2 / pi2p * float(polygamma(1, n_series))
        total = partial + tail
        return TailConstants(total, math.nan, None, n_series - N, tail, partial, env)

    eps = 1.0 / 8 if epsilon is None else float(epsilon)
    if not 0 < eps <= 0.5:
        raise ValidationError(f"epsilon={eps} outside (0, 1/2]")
    tr = basis.dphi0[N:n_series]
    partial = float(np.sum(tr**2 / lam ** (1.5 + eps)))
    env = safety * float(np.max(np.abs(tr[half]) / np.sqrt(lam[half])))
    s = 1.0 + 2 * eps
    m0 = float(n_series)
    # sum_{m >= m0} m^{-s} <= m0^{-s} + m0^{1-s} / (s - 1)
    zeta_bound = m0 ** (-s) + m0 ** (1 - s) / (s - 1)
    tail = env**2 * pi2p ** (-(0.5 + eps)) * zeta_bound
    total = partial + tail
    return TailConstants(math.nan, total, eps, n_series - N, tail, partial, env)


@dataclass(frozen=True)
class CertProblem:
    """Everything the constraints depend on at a fixed ``N``."""

    model: TruncatedModel
    alphas: AlphaSet
    tails: TailConstants
    res_a: float
    res_b: float
    q_c: float
    c: float
    lambda_next: float
    lambda_N0_next: float

    @property
    def N(self) -> int:
        return self.model.N

    @property
    def measurement(self) -> Measurement:
        return self.model.measurement

    @property
    def neumann(self) -> bool:
        return self.model.measurement is Measurement.NEUMANN

    @property
    def sizes(self) -> dict[str, int]:
        n0, n = self.model.N0, self.model.N
        return {"P": 2 * n0, "Q1": 2 * n0, "Q2": n - n0, "Psi": n + n0 + 1}


def build_problem(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction,
                  K, L, N0: int, N: int, alphas: AlphaSet | None = None,
                  epsilon: float | None = None, n_series: int | None = None) -> CertProblem:
    if N + 1 > len(basis):
        raise ValidationError(f"need lambda_(N+1); only {len(basis)} modes computed for N={N}")
    model = assemble_truncated(plant, basis, reduction, K, L, N0, N)
    alphas = alphas or AlphaSet.default(plant.c)
    p_low = plant.sl.bounds()[0]
    if plant.measurement is Measurement.DIRICHLET:
        epsilon = None
    elif epsilon is None:
        epsilon = 1.0 / 8
    tails = tail_constants(basis, N, plant.measurement, epsilon, p_low, n_series)
    ra, rb = reduction.residuals(N)
    return CertProblem(model, alphas, tails, ra, rb, plant.sl.q_c, plant.c,
                       float(basis.lambdas[N]), float(basis.lambdas[N0]))


@dataclass(frozen=True)
class DecisionVars:
    P: NDArray[np.float64]
    Q1: NDArray[np.float64]
    Q2: NDArray[np.float64]
    r1: float
    r2: float
    beta: float
    gamma: float

    def scaled(self, s: float) -> "DecisionVars":
        return DecisionVars(s * self.P, s * self.Q1, s * self.Q2, s * self.r1, s * self.r2,
                            s * self.beta, s * self.gamma)

    def to_vector(self) -> NDArray[np.float64]:
        parts = [M[np.triu_indices(M.shape[0])] for M in (self.P, self.Q1, self.Q2)]
        return np.concatenate(parts + [np.array([self.r1, self.r2, self.beta, self.gamma])])

    @classmethod
    def from_vector(cls, x, sizes: dict[str, int]) -> "DecisionVars":
        x = np.asarray(x, dtype=float)
        mats = []
        k = 0
        for name in ("P", "Q1", "Q2"):
            n = sizes[name]
            cnt = n * (n + 1) // 2
            M = np.zeros((n, n))
            M[np.triu_indices(n)] = x[k:k + cnt]
            M = M + np.triu(M, 1).T
            mats.append(M)
            k += cnt
        r1, r2, beta, gamma = x[k:k + 4]
        return cls(*mats, float(r1), float(r2), float(beta), float(gamma))


def _check_dims(problem: CertProblem, v: DecisionVars):
    s = problem.sizes
    for name in ("P", "Q1", "Q2"):
        if getattr(v, name).shape != (s[name], s[name]):
            raise ValidationError(f"{name} must be {s[name]}x{s[name]}, got {getattr(v, name).shape}")


def assemble_constraints(problem: CertProblem, v: DecisionVars) -> dict:
    """Numeric constraint matrices ``Psi, Theta1, Theta2`` and scalars ``Theta3..Theta5``.

    The diagonal blocks ``Psi1``, ``Psi2`` (before the ``E^T E`` term) are
    returned as well.
    """
    _check_dims(problem, v)
    m = problem.model
    al = problem.alphas
    ac = abs(problem.c)
    P = v.P
    KtK = m.Ktilde.T @ m.Ktilde
    n1 = m.F1.shape[0]
    n2 = m.F3.shape[0]

    psi1 = m.F1.T @ P + P @ m.F1 + ac * P + v.Q1 + al.alpha2 * v.gamma * problem.res_a * KtK
    psi2 = v.r1 * (2 * m.F3 + ac * np.eye(n2)) + v.Q2
    psi = np.zeros((n1 + n2 + 1, n1 + n2 + 1))
    psi[:n1, :n1] = psi1
    psi[:n1, n1:n1 + n2] = P @ m.F2
    psi[n1:n1 + n2, :n1] = (P @ m.F2).T
    psi[:n1, -1:] = P @ m.Lcal
    psi[-1:, :n1] = (P @ m.Lcal).T
    psi[n1:n1 + n2, n1:n1 + n2] = psi2
    psi[-1, -1] = -v.beta
    psi += 2 * al.alpha3 * v.gamma * problem.res_b * (m.E.T @ m.E)

    theta1 = ac * P - v.Q1 + (2 * al.alpha3 * ac + al.alpha4) * v.gamma * ac * problem.res_b * KtK
    theta2 = v.r1 * ac * np.eye(n2) - v.Q2
    theta3 = v.gamma * al.alpha1 * ac - v.r2

    lam = problem.lambda_next
    cf = al.c_frak
    M = problem.tails.value
    out = {"Psi": psi, "Psi1": psi1, "Psi2": psi2,
           "Theta1": theta1, "Theta2": theta2, "Theta3": theta3}
    if problem.neumann:
        eps = problem.tails.epsilon
        out["Theta4"] = (2 * v.gamma * (-cf * lam + problem.q_c)
                         + v.beta * M * lam ** (0.5 + eps) + v.r2 / lam)
        out["Theta5"] = 2 * v.gamma * cf - v.beta * M / lam ** (0.5 - eps)
    else:
        out["Theta4"] = 2 * v.gamma * (-cf * lam + problem.q_c) + v.beta * M + v.r2 / lam
    return out


def _eig_extremes(S) -> tuple[float, float]:
    w = np.linalg.eigvalsh((S + S.T) / 2)
    return float(w[0]), float(w[-1])


def constraint_margins(problem: CertProblem, v: DecisionVars,
                       constraints: dict | None = None) -> tuple[dict, dict]:
    """Signed margins (positive means satisfied) and the gap each must clear.

    Strict inequalities must clear ``1e-7 (1 + max|entry|)``; ``Q1, Q2``
    only need ``lambda_min >= -1e-10 (1 + max|entry|)``.
    """
    cons = constraints if constraints is not None else assemble_constraints(problem, v)
    margins, gaps = {}, {}
    for name in MATRIX_CONSTRAINTS:
        M = cons[name]
        margins[name] = -_eig_extremes(M)[1]
        gaps[name] = STRICT_REL_GAP * (1 + float(np.max(np.abs(M))))
    for name in SCALAR_CONSTRAINTS:
        if name not in cons:
            continue
        val = float(cons[name])
        margins[name] = val if name == "Theta5" else -val
        gaps[name] = STRICT_REL_GAP * (1 + abs(val))
    margins["P"] = _eig_extremes(v.P)[0]
    gaps["P"] = STRICT_REL_GAP * (1 + float(np.max(np.abs(v.P))))
    for name in ("Q1", "Q2"):
        Q = getattr(v, name)
        margins[name] = _eig_extremes(Q)[0]
        gaps[name] = -PSD_TOL * (1 + float(np.max(np.abs(Q))))
    for name in ("r1", "r2", "beta", "gamma"):
        margins[name] = float(getattr(v, name))
        gaps[name] = 0.0
    return margins, gaps


def _feasible(margins: dict, gaps: dict) -> bool:
    return all(margins[k] > gaps[k] if gaps[k] >= 0 else margins[k] >= gaps[k] for k in margins)


def _var_scale(v: DecisionVars) -> float:
    return max(float(np.max(np.abs(v.P))), float(np.max(np.abs(v.Q1), initial=0.0)),
               float(np.max(np.abs(v.Q2), initial=0.0)), abs(v.r1), abs(v.r2),
               abs(v.beta), abs(v.gamma))


def _score(margins: dict, gaps: dict, v: DecisionVars) -> float:
    """Worst slack over the size of the decision variables.

    The constraints are homogeneous of degree one, so this score is
    invariant under joint scaling; it is positive iff every constraint
    holds with its gap.
    """
    scale = _var_scale(v)
    return min((margins[k] - gaps[k]) / scale for k in margins)


@dataclass(frozen=True)
class Recipe:
    """Constructive candidate and the knobs the refinement search scales."""

    P0: NDArray[np.float64]
    eps1: float
    eps2: float
    delta_star: float
    beta: float
    gamma: float
    r1: float
    r2: float

    def build(self, problem: CertProblem, mult: dict | None = None) -> DecisionVars:
        mult = mult or {}
        g = lambda k: mult.get(k, 1.0)  # noqa: E731
        m = problem.model
        al = problem.alphas
        ac = abs(problem.c)
        P = g("s") * self.P0
        gamma = g("gamma") * self.gamma
        r1 = g("r1") * self.r1
        e1 = g("eps1") * self.eps1
        e2 = g("eps2") * self.eps2
        KtK = m.Ktilde.T @ m.Ktilde
        Q1 = (1 + e1) * ac * (P + (2 * al.alpha3 * ac + al.alpha4) * gamma * problem.res_b * KtK)
        Q2 = (1 + e2) * r1 * ac * np.eye(m.F3.shape[0])
        return DecisionVars(P, Q1, Q2, r1, g("r2") * self.r2, g("beta") * self.beta, gamma)


def constructive_candidate(problem: CertProblem, tau_r: float = 0.1) -> Recipe:
    """Candidate from the explicit Lyapunov recipe.

    ``P`` solves ``F1^T P + P F1 + 2|c| P = -I``; ``beta = sqrt(N)``,
    ``gamma = 1/N`` (Neumann: ``beta = N^{1/8}``, ``gamma = N^{-3/16}``),
    ``r1 = beta / delta*``, ``r2 = (1 + tau_r) alpha1 |c|``.
    """
    m = problem.model
    ac = abs(problem.c)
    n1 = m.F1.shape[0]
    shifted = m.F1 + ac * np.eye(n1)
    if not np.all(eig_general(shifted).real < 0):
        raise NumericalError("gains do not satisfy Re mu_i < -|c|")
    P0 = solve_lyapunov(shifted, np.eye(n1))
    delta_star = problem.lambda_N0_next - problem.q_c - ac
    if not delta_star > 0:
        raise ValidationError(f"lambda_(N0+1) - q_c - |c| = {delta_star:.6g} must be > 0")
    eps1 = 1.0 / (2 * ac * np.linalg.norm(P0, 2))
    eps2 = delta_star / ac
    N = m.N
    if problem.neumann:
        beta, gamma = N ** (1 / 8), N ** (-3 / 16)
    else:
        beta, gamma = math.sqrt(N), 1.0 / N
    r1 = beta / delta_star
    r2 = (1 + tau_r) * problem.alphas.alpha1 * ac
    return Recipe(P0, eps1, eps2, delta_star, beta, gamma, r1, r2)


@dataclass
class Certificate:
    N: int
    vars: DecisionVars
    margins: dict
    gaps: dict
    feasible: bool
    score: float
    epsilon: float | None = None
    multipliers: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        v = self.vars
        return {
            "schema": "delaypde.certificate/1",
            "N": self.N,
            "feasible": self.feasible,
            "score": self.score,
            "epsilon": self.epsilon,
            "variables": {
                "P": v.P.tolist(), "Q1": v.Q1.tolist(), "Q2": v.Q2.tolist(),
                "r1": v.r1, "r2": v.r2, "beta": v.beta, "gamma": v.gamma,
            },
            "margins": self.margins,
            "gaps": self.gaps,
            "multipliers": self.multipliers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        va = d["variables"]
        v = DecisionVars(np.array(va["P"], dtype=float).reshape(len(va["P"]), -1),
                         np.array(va["Q1"], dtype=float).reshape(len(va["Q1"]), -1),
                         np.array(va["Q2"], dtype=float).reshape(len(va["Q2"]), -1),
                         va["r1"], va["r2"], va["beta"], va["gamma"])
        return cls(d["N"], v, d["margins"], d["gaps"], d["feasible"], d["score"],
                   d.get("epsilon"), d.get("multipliers", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Certificate":
        return cls.from_dict(json.loads(text))


def evaluate(problem: CertProblem, v: DecisionVars, multipliers: dict | None = None) -> Certificate:
    cons = assemble_constraints(problem, v)
    margins, gaps = constraint_margins(problem, v, cons)
    return Certificate(problem.N, v, margins, gaps, _feasible(margins, gaps),
                       _score(margins, gaps, v), problem.tails.epsilon,
                       dict(multipliers or {}))


_KNOBS = ("beta", "gamma", "r1", "r2", "s", "eps1", "eps2")
_FACTORS = (0.125, 0.25, 0.5, 2**-0.5, 2**0.5, 2.0, 4.0, 8.0)


def refine_search(problem: CertProblem, seed: Recipe, max_rounds: int = 40) -> Certificate:
    """Coordinate search over log-spaced multipliers of the recipe knobs.

    Each round tries every factor on every knob (``beta, gamma, r1, r2``,
    a scale ``s`` on ``P`` and the two recipe slacks) and keeps the single
    move with the best worst-case normalized margin.  Deterministic; the
    identity multiplier is always the starting point, so the result is
    never worse than the seed.
    """
    mult = {k: 1.0 for k in _KNOBS}
    best = evaluate(problem, seed.build(problem, mult), mult)
    for _ in range(max_rounds):
        move = None
        for k in _KNOBS:
            for f in _FACTORS:
                trial = dict(mult)
                trial[k] *= f
                cert = evaluate(problem, seed.build(problem, trial), trial)
                if cert.score > (move[1].score if move else best.score):
                    move = (trial, cert)
        if move is None:
            break
        mult, best = move
    return best


@dataclass
class CertifyResult:
    N_feasible: int | None
    certificate: Certificate | None
    problem: CertProblem | None
    trace: list = field(default_factory=list)
    N0: int = 1


def certify(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction, K, L,
            alphas: AlphaSet | None = None, N_max: int = 64, epsilon: float | None = None,
            refine: bool = True, N0: int | None = None) -> CertifyResult:
    """Sweep ``N = N0+1 .. N_max`` and return the first certified order.

    ``trace`` records ``(N, constructive score, refined score, feasible)``
    for every order tried.
    """
    if N0 is None:
        N0 = choose_N0(basis, plant.sl.q_c, plant.c)
    alphas = alphas or AlphaSet.default(plant.c)
    trace = []
    best = None
    for N in range(N0 + 1, N_max + 1):
        if N + 1 > len(basis):
            break
        problem = build_problem(plant, basis, reduction, K, L, N0, N, alphas, epsilon)
        seed = constructive_candidate(problem)
        seed_cert = evaluate(problem, seed.build(problem))
        cert = refine_search(problem, seed) if refine else seed_cert
        trace.append((N, seed_cert.score, cert.score, cert.feasible))
        if best is None or cert.score > best[1].score:
            best = (problem, cert)
        if cert.feasible:
            return CertifyResult(N, cert, problem, trace, N0)
    if best is None:
        return CertifyResult(None, None, None, trace, N0)
    return CertifyResult(None, best[1], best[0], trace, N0)


def revalidate(problem: CertProblem, cert: Certificate, tol: float = 1e-10) -> tuple[bool, float]:
    """Re-assemble from the stored variables; returns ``(feasible, max margin deviation)``."""
    fresh = evaluate(problem, cert.vars)
    dev = max(abs(fresh.margins[k] - cert.margins[k]) / max(1.0, abs(cert.margins[k]))
              for k in cert.margins)
    return fresh.feasible and dev <= tol, dev


def gamma_chain(problem: CertProblem, v: DecisionVars, lambdas) -> dict:
    """Per-mode tail coefficients ``Gamma_n`` for ``n >= N+1`` against ``Theta4``.

    For Neumann output the intermediate bound ``-Theta5 lambda_n + 2 gamma q_c + r2/lambda_n``
    is reported as well; it dominates ``Gamma_n`` only when ``Theta5 > 0``.
    """
    lam = np.asarray(lambdas, dtype=float)[problem.N:]
    cons = assemble_constraints(problem, v)
    cf = problem.alphas.c_frak
    M = problem.tails.value
    if problem.neumann:
        eps = problem.tails.epsilon
        g = 2 * v.gamma * (-cf * lam + problem.q_c) + v.beta * M * lam ** (0.5 + eps) + v.r2 / lam
        mid = -cons["Theta5"] * lam + 2 * v.gamma * problem.q_c + v.r2 / lam
        return {"Gamma": g, "intermediate": mid, "Theta4": cons["Theta4"], "Theta5": cons["Theta5"]}
    g = 2 * v.gamma * (-cf * lam + problem.q_c) + v.beta * M + v.r2 / lam
    return {"Gamma": g, "Theta4": cons["Theta4"]}


# ---------------------------------------------------------------- SDPA export

def _affine_maps(problem: CertProblem):
    """Constraint expressions are linear in the decision vector; recover the columns."""
    sizes = problem.sizes
    nvar = sum(sizes[k] * (sizes[k] + 1) // 2 for k in ("P", "Q1", "Q2")) + 4
    cols = []
    for i in range(nvar):
        x = np.zeros(nvar)
        x[i] = 1.0
        v = DecisionVars.from_vector(x, sizes)
        cols.append((assemble_constraints(problem, v), v))
    return nvar, cols


def _block_layout(problem: CertProblem):
    s = problem.sizes
    scal = ["-Theta3", "-Theta4"] + (["Theta5"] if problem.neumann else []) + ["r1", "r2", "beta", "gamma"]
    return [("-Psi", s["Psi"]), ("-Theta1", s["P"]), ("-Theta2", s["Q2"]), ("P", s["P"]),
            ("Q1", s["Q1"]), ("Q2", s["Q2"])], scal


def _block_values(problem: CertProblem, cons: dict, v: DecisionVars):
    """The homogeneous part of every block, in export order."""
    mats = [-cons["Psi"], -cons["Theta1"], -cons["Theta2"], v.P, v.Q1, v.Q2]
    diag = [-cons["Theta3"], -cons["Theta4"]]
    if problem.neumann:
        diag.append(cons["Theta5"])
    diag += [v.r1, v.r2, v.beta, v.gamma]
    return mats, np.array(diag, dtype=float)


def export_sdpa(problem: CertProblem, path, eps: float = 1e-6) -> Path:
    """Write the feasibility problem in SDPA sparse format.

    Constraint form is ``sum_i x_i F_i - F_0 >= 0``; every strict
    inequality gets the gap ``eps`` (``F_0 = eps I`` on that block), the
    ``Q`` blocks get none.  The header comment lists the variable ordering.
    """
    path = Path(path)
    sizes = problem.sizes
    nvar, cols = _affine_maps(problem)
    mat_layout, scal_names = _block_layout(problem)
    n_mat = len(mat_layout)
    nscal = len(scal_names)
    lines = [
        f'"delaypde feasibility problem: N={problem.N} N0={problem.model.N0} '
        f'measurement={problem.measurement.value}',
        f'* m = {nvar} decision variables, objective zero (pure feasibility)',
        f'* x[1..{sizes["P"] * (sizes["P"] + 1) // 2}]: P upper triangle row-major (i <= j)',
        f'* then Q1 ({sizes["Q1"]}x{sizes["Q1"]}) and Q2 ({sizes["Q2"]}x{sizes["Q2"]}) upper triangles, '
        f'then r1, r2, beta, gamma',
        "* blocks: " + ", ".join(f"{i + 1}:{n}" for i, (n, _) in enumerate(mat_layout))
        + f", {n_mat + 1}:diag[{', '.join(scal_names)}]",
        f"* strict gap eps = {eps:.17g} on -Psi, -Theta1, -Theta2, P and every diagonal entry",
        str(nvar),
        str(n_mat + 1),
        " ".join([str(n) for _, n in mat_layout] + [str(-nscal)]),
        " ".join(["0"] * nvar),
    ]
    strict_blocks = {0, 1, 2, 3}
    for b, (_, n) in enumerate(mat_layout):
        if b in strict_blocks and n > 0:
            for i in range(n):
                lines.append(f"0 {b + 1} {i + 1} {i + 1} {eps:.17g}")
    for i in range(nscal):
        lines.append(f"0 {n_mat + 1} {i + 1} {i + 1} {eps:.17g}")
    for k, (cons, v) in enumerate(cols):
        mats, diag = _block_values(problem, cons, v)
        for b, M in enumerate(mats):
            iu, ju = np.nonzero(np.triu(M))
            for i, j in zip(iu, ju):
                lines.append(f"{k + 1} {b + 1} {i + 1} {j + 1} {M[i, j]:.17g}")
        for i in np.flatnonzero(diag):
            lines.append(f"{k + 1} {n_mat + 1} {i + 1} {i + 1} {diag[i]:.17g}")
    path.write_text("\n".join(lines) + "\n")
    return path


@dataclass
class SDPAProblem:
    m: int
    block_sizes: list
    c: NDArray[np.float64]
    entries: list

    def evaluate(self, x) -> list:
        """Blocks of ``sum_i x_i F_i - F_0`` (diagonal blocks as 1-D arrays)."""
        x = np.asarray(x, dtype=float)
        blocks = [np.zeros(-s) if s < 0 else np.zeros((s, s)) for s in self.block_sizes]
        for mat, blk, i, j, val in self.entries:
            coef = -1.0 if mat == 0 else x[mat - 1]
            B = blocks[blk - 1]
            if B.ndim == 1:
                B[i - 1] += coef * val
            else:
                B[i - 1, j - 1] += coef * val
                if i != j:
                    B[j - 1, i - 1] += coef * val
        return blocks

    def min_eigs(self, x) -> list:
        out = []
        for B in self.evaluate(x):
            out.append(float(B.min()) if B.ndim == 1 else float(np.linalg.eigvalsh(B)[0]) if B.size else math.inf)
        return out


def read_sdpa(path) -> SDPAProblem:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    body = [ln for ln in lines if ln and ln[0] not in '"*']
    clean = lambda s: s.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ")  # noqa: E731
    m = int(clean(body[0]).split()[0])
    nblocks = int(clean(body[1]).split()[0])
    sizes = [int(t) for t in clean(body[2]).split()[:nblocks]]
    c = np.array([float(t) for t in clean(body[3]).split()[:m]])
    entries = []
    for ln in body[4:]:
        t = clean(ln).split()
        entries.append((int(t[0]), int(t[1]), int(t[2]), int(t[3]), float(t[4])))
    return SDPAProblem(m, sizes, c, entries)


def sdpa_margins(problem: CertProblem, sdpa: SDPAProblem, v: DecisionVars, eps: float) -> dict:
    """Constraint margins recomputed from a parsed SDPA file at ``v``."""
    blocks = sdpa.evaluate(v.to_vector())
    mat_layout, scal_names = _block_layout(problem)
    out = {}
    names = ["Psi", "Theta1", "Theta2", "P", "Q1", "Q2"]
    strict = {"Psi", "Theta1", "Theta2", "P"}
    for name, B in zip(names, blocks[:len(mat_layout)]):
        lam = float(np.linalg.eigvalsh(B)[0]) if B.size else math.inf
        out[name] = lam + (eps if name in strict else 0.0)
    for name, val in zip(scal_names, blocks[-1]):
        out[name.lstrip("-")] = float(val) + eps
    return out


def save_certificate(cert: Certificate, problem: CertProblem, path) -> Path:
    path = Path(path)
    d = cert.to_dict()
    d["problem"] = {
        "N0": problem.model.N0,
        "measurement": problem.measurement.value,
        "alphas": [problem.alphas.alpha1, problem.alphas.alpha2, problem.alphas.alpha3,
                   problem.alphas.alpha4],
        "c_frak": problem.alphas.c_frak,
        "tail_constant": problem.tails.value,
        "tail_bound": problem.tails.tail_bound,
        "res_a": problem.res_a,
        "res_b": problem.res_b,
        "lambda_next": problem.lambda_next,
        "q_c": problem.q_c,
        "c": problem.c,
        "K": problem.model.K.ravel().tolist(),
        "L": problem.model.L.ravel().tolist(),
    }
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return path
