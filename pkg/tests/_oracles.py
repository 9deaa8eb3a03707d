"""Reference computations that share no code with the package.

Each oracle re-derives a quantity from first principles (bisection on a
scalar equation, closed forms, or a second hand-written assembly) so that
tests compare two independent routes.
"""

from __future__ import annotations

import math

import numpy as np


def bisect(f, lo: float, hi: float, tol: float = 1e-15, max_iter: int = 400) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < tol * max(1.0, abs(mid)):
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


def robin_dirichlet_mu(theta1: float, n: int = 1) -> float:
    """n-th eigenvalue of ``-f''`` with ``cos(t) f(0) - sin(t) f'(0) = 0`` and ``f(1) = 0``.

    With ``f = sin(k (1 - x))`` the left condition reads
    ``cos(t) sin(k) + sin(t) k cos(k) = 0``; the n-th positive root lies in
    ``((n - 1/2) pi, n pi]`` when ``t`` is in ``(0, pi/2]``.
    """
    s, c = math.sin(theta1), math.cos(theta1)

    def g(k):
        return c * math.sin(k) + s * k * math.cos(k)

    k = bisect(g, (n - 0.5) * math.pi, n * math.pi)
    return k * k


def scalar_dde_root(a: float, c: float, h: float) -> float:
    """Real root of ``s = a + c exp(-s h)`` for ``c > 0`` (unique and rightmost)."""
    if c <= 0:
        raise ValueError("oracle covers c > 0 only")

    def f(s):
        return s - a - c * math.exp(-s * h)

    lo, hi = a, a + c
    while f(hi) < 0:
        hi += abs(hi) + 1.0
    return bisect(f, lo, hi)


def c_frak(alphas, abs_c: float) -> float:
    a1, a2, a3, a4 = alphas
    return 1.0 - 0.5 * (abs_c / a1 + 1.0 / a2 + 1.0 / a3 + abs_c / a4)


def truncated_blocks(lam, q_c, beta, trace0, K, L, N0, N, neumann):
    """Closed-loop blocks written out entry by entry."""
    K = [float(k) for k in np.ravel(K)]
    L = [float(v) for v in np.ravel(L)]
    n1 = 2 * N0
    F1 = np.zeros((n1, n1))
    for i in range(N0):
        for j in range(N0):
            F1[i, j] = beta[i] * K[j] + (q_c - lam[i] if i == j else 0.0)
            F1[i, N0 + j] = L[i] * trace0[j]
            F1[N0 + i, N0 + j] = (q_c - lam[i] if i == j else 0.0) - L[i] * trace0[j]
    n2 = N - N0
    C1 = np.zeros(n2)
    for k in range(n2):
        n = N0 + k
        C1[k] = trace0[n] / (lam[n] if neumann else math.sqrt(lam[n]))
    F2 = np.zeros((n1, n2))
    for i in range(N0):
        for k in range(n2):
            F2[i, k] = L[i] * C1[k]
            F2[N0 + i, k] = -L[i] * C1[k]
    F3 = np.zeros((n2, n2))
    for k in range(n2):
        F3[k, k] = q_c - lam[N0 + k]
    Lcal = np.array(L + [-v for v in L]).reshape(n1, 1)
    Kt = np.array(K + [0.0] * N0).reshape(1, n1)
    E = np.zeros((1, n1 + n2 + 1))
    for j in range(n1):
        E[0, j] = sum(Kt[0, i] * F1[i, j] for i in range(n1))
    for j in range(n2):
        E[0, n1 + j] = sum(Kt[0, i] * F2[i, j] for i in range(n1))
    E[0, -1] = sum(Kt[0, i] * Lcal[i, 0] for i in range(n1))
    return F1, F2, F3, Lcal, Kt, E


def constraint_oracle(blocks, alphas, abs_c, q_c, res_a, res_b, M_tail, lam_next,
                      P, Q1, Q2, r1, r2, beta, gamma, neumann=False, eps=None):
    """Second, independent assembly of the matrix inequalities."""
    F1, F2, F3, Lcal, Kt, E = blocks
    a1, a2, a3, a4 = alphas
    n2 = F3.shape[0]
    KK = Kt.T @ Kt
    psi11 = F1.T @ P + P @ F1 + abs_c * P + Q1 + a2 * gamma * res_a * KK
    psi22 = r1 * (2 * F3 + abs_c * np.eye(n2)) + Q2
    top = np.hstack([psi11, P @ F2, P @ Lcal])
    mid = np.hstack([(P @ F2).T, psi22, np.zeros((n2, 1))])
    bot = np.hstack([(P @ Lcal).T, np.zeros((1, n2)), [[-beta]]])
    psi = np.vstack([top, mid, bot]) + 2 * a3 * gamma * res_b * E.T @ E
    theta1 = abs_c * P - Q1 + (2 * a3 * abs_c + a4) * gamma * abs_c * res_b * KK
    theta2 = r1 * abs_c * np.eye(n2) - Q2
    theta3 = gamma * a1 * abs_c - r2
    cf = c_frak(alphas, abs_c)
    out = {"Psi": psi, "Theta1": theta1, "Theta2": theta2, "Theta3": theta3}
    if neumann:
        out["Theta4"] = (2 * gamma * (q_c - cf * lam_next)
                         + beta * M_tail * lam_next ** (0.5 + eps) + r2 / lam_next)
        out["Theta5"] = 2 * gamma * cf - beta * M_tail * lam_next ** (eps - 0.5)
    else:
        out["Theta4"] = 2 * gamma * (q_c - cf * lam_next) + beta * M_tail + r2 / lam_next
    return out
