"""Small dense linear-algebra kernels.

LAPACK (through numpy/scipy) does the heavy lifting; this module adds the
contracts the pipeline relies on: quantified strictness margins, Hurwitz
checks before Lyapunov solves, and self-verifying pole placement.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .errors import NumericalError, ValidationError

__all__ = [
    "eig_general",
    "is_negative_definite",
    "max_eig_sym",
    "solve_lyapunov",
    "place_poles_siso",
    "kalman_rank",
]


def _square(M, name="matrix") -> NDArray[np.float64]:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


def eig_general(M) -> NDArray[np.complex128]:
    """Eigenvalues of a real square matrix (balanced Hessenberg QR), sorted by real part."""
    M = _square(M)
    try:
        ev = sla.eigvals(M, check_finite=False)
    except sla.LinAlgError as exc:
        raise NumericalError(f"QR iteration did not converge: {exc}") from exc
    return ev[np.lexsort((ev.imag, ev.real))]


def _symmetrize(S, tol=1e-10) -> NDArray[np.float64]:
    S = _square(S, "symmetric matrix")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > tol * scale:
        raise ValidationError("matrix is not symmetric within tolerance")
    return (S + S.T) / 2


def max_eig_sym(S) -> float:
    S = _symmetrize(S)
    return float(sla.eigvalsh(S, subset_by_index=[S.shape[0] - 1, S.shape[0] - 1])[0])


def is_negative_definite(S, margin: float | None = None) -> tuple[bool, float]:
    """Test ``S <= -margin I`` by Cholesky of ``-S - margin I``.

    The default margin is ``1e-9 * max|S_ij|`` so that a strict inequality
    is always checked with a quantified gap.  Returns ``(ok, largest eigenvalue)``.
    """
    S = _symmetrize(S)
    if margin is None:
        margin = 1e-9 * float(np.max(np.abs(S)))
    if margin < 0:
        raise ValidationError("margin must be >= 0")
    n = S.shape[0]
    try:
        np.linalg.cholesky(-S - margin * np.eye(n))
        ok = True
    except np.linalg.LinAlgError:
        ok = False
    lmax = max_eig_sym(S)
    if ok and not lmax < 0:
        # singular-but-factorizable corner (zero margin on a PSD-zero matrix)
        ok = False
    return ok, lmax


def solve_lyapunov(A, Q) -> NDArray[np.float64]:
    """Solve ``A^T P + P A = -Q`` for Hurwitz ``A``.

    Kronecker vectorization with a dense solve up to n = 40, Bartels-Stewart
    above that.
    """
    A = _square(A, "A")
    Q = _symmetrize(Q)
    n = A.shape[0]
    if Q.shape != A.shape:
        raise ValidationError(f"Q shape {Q.shape} does not match A shape {A.shape}")
    ev = eig_general(A)
    if not np.all(ev.real < 0):
        raise NumericalError(f"A is not Hurwitz (max real part {ev.real.max():.6g})")
    if n <= 40:
        eye = np.eye(n)
        # row-major vec: vec(A^T P) = (A^T kron I) vec(P), vec(P A) = (I kron A^T) vec(P)
        big = np.kron(A.T, eye) + np.kron(eye, A.T)
        P = np.linalg.solve(big, -Q.reshape(-1)).reshape(n, n)
    else:
        P = sla.solve_continuous_lyapunov(A.T, -Q)
    P = (P + P.T) / 2
    resid = np.max(np.abs(A.T @ P + P @ A + Q))
    if resid > 1e-8 * max(1.0, float(np.max(np.abs(Q)))):
        raise NumericalError(f"Lyapunov residual {resid:.3g} above tolerance")
    return P


def _ctrb(A, B) -> NDArray[np.float64]:
    n = A.shape[0]
    cols = [B]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    return np.hstack(cols)


def kalman_rank(A, B, tol: float = 1e-10) -> tuple[int, float]:
    """Rank of ``[B, AB, ..., A^{n-1}B]`` by column-pivoted QR.

    Columns are normalized first.  Returns the numerical rank and the
    smallest ``|R_ii| / |R_00|`` of the pivoted factorization.
    """
    A = _square(A, "A")
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = _ctrb(A, B)
    norms = np.linalg.norm(C, axis=0)
    norms[norms == 0] = 1.0
    _, R, _ = sla.qr(C / norms, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0:
        return 0, 0.0
    rel = d / d[0]
    rank = int(np.sum(rel > tol))
    return rank, float(rel.min())


def place_poles_siso(A, b, targets, mode: str = "feedback") -> NDArray[np.float64]:
    """Single-input pole placement by Ackermann's formula.

    ``mode="feedback"``: ``b`` is the input column, returns row ``K`` with
    ``eig(A + b K) = targets``.
    ``mode="observer"``: ``b`` is the output row ``C``, returns column ``L``
    with ``eig(A - L C) = targets`` (solved on the dual pair internally).
    """
    A = _square(A, "A")
    n = A.shape[0]
    targets = np.asarray(targets, dtype=complex).ravel()
    if targets.size != n:
        raise ValidationError(f"need {n} targets, got {targets.size}")
    poly = np.poly(targets)
    if np.max(np.abs(poly.imag)) > 1e-9 * max(1.0, np.max(np.abs(poly))):
        raise ValidationError("targets must be closed under conjugation")
    poly = poly.real

    if mode == "feedback":
        Ad, bd = A, np.asarray(b, dtype=float).reshape(n, 1)
    elif mode == "observer":
        Ad, bd = A.T, np.asarray(b, dtype=float).reshape(n, 1)
    else:
        raise ValidationError(f"unknown mode {mode!r}")

    rank, smin = kalman_rank(Ad, bd)
    if rank < n:
        raise NumericalError(
            f"pair is not {'controllable' if mode == 'feedback' else 'observable'}: "
            f"rank {rank} < {n} (deficient direction {rank + 1}, scaled pivot {smin:.3g})"
        )
    ctrb = _ctrb(Ad, bd)
    phiA = np.zeros_like(Ad)
    for coef in poly:
        phiA = phiA @ Ad + coef * np.eye(n)
    en = np.zeros((1, n))
    en[0, -1] = 1.0
    # Ackermann for A - b k; our convention is A + b K
    k = en @ np.linalg.solve(ctrb, phiA)
    gain = -k

    closed = Ad + bd @ gain
    got = np.sort_complex(eig_general(closed))
    want = np.sort_complex(targets)
    scale = np.maximum(1.0, np.abs(want))
    if np.max(np.abs(got - want) / scale) > 1e-6:
        raise NumericalError(f"pole placement check failed: got {got}, wanted {want}")
    if mode == "feedback":
        return gain.reshape(1, n)
    # A^T + C^T g has the spectrum of A + g^T C, so L = -g^T
    return (-gain).reshape(n, 1)
