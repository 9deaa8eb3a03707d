"""Feedback and observer gains for the first ``N0`` modes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError
from .linalg import eig_general, kalman_rank, place_poles_siso
from .model import PlantConfig, SpectralReduction
from .spectral import EigenBasis

__all__ = ["GainReport", "default_targets", "synthesize_gains", "verify_gains"]


@dataclass(frozen=True)
class GainReport:
    N0: int
    K: NDArray[np.float64]
    L: NDArray[np.float64]
    spectrum: NDArray[np.complex128]
    bound: float
    ctrb_rank: tuple[int, float]
    obsv_rank: tuple[int, float]

    @property
    def ok(self) -> bool:
        return bool(np.all(self.spectrum.real < self.bound))

    @property
    def margin(self) -> float:
        """Distance of the rightmost closed-loop pole to ``-|c|``."""
        return float(self.bound - np.max(self.spectrum.real))

    def text(self) -> str:
        lines = [f"N0 = {self.N0}",
                 "K = " + ", ".join(repr(float(v)) for v in self.K.ravel()),
                 "L = " + ", ".join(repr(float(v)) for v in self.L.ravel()),
                 f"controllability rank {self.ctrb_rank[0]} (smallest pivot {self.ctrb_rank[1]:.3g})",
                 f"observability rank {self.obsv_rank[0]} (smallest pivot {self.obsv_rank[1]:.3g})",
                 f"required: Re mu < {self.bound:.17g}"]
        for mu in self.spectrum:
            lines.append(f"  mu = {mu.real:.17g} {mu.imag:+.17g}j")
        lines.append(f"margin = {self.margin:.6g}")
        lines.append("verification: " + ("pass" if self.ok else "FAIL"))
        return "\n".join(lines) + "\n"


def default_targets(N0: int, c: float) -> NDArray[np.float64]:
    """Real, distinct targets ``-(|c| + 0.5 + 0.5 j)``, ``j = 0..N0-1``."""
    return -(abs(c) + 0.5 + 0.5 * np.arange(N0))


def _blocks(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction, N0: int):
    lam = basis.lambdas[:N0]
    A0 = np.diag(-lam + plant.sl.q_c)
    B0 = reduction.beta_n[:N0].reshape(-1, 1)
    C0 = plant.output_traces(basis)[:N0].reshape(1, -1)
    return A0, B0, C0


def verify_gains(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction,
                 K, L, N0: int) -> GainReport:
    """Spectrum of the ``(zhat, e)`` block against the bound ``-|c|``."""
    A0, B0, C0 = _blocks(plant, basis, reduction, N0)
    K = np.asarray(K, dtype=float).reshape(1, -1)
    L = np.asarray(L, dtype=float).reshape(-1, 1)
    if K.shape[1] != N0 or L.shape[0] != N0:
        raise ValidationError(f"gains must have N0={N0} entries, got K {K.shape}, L {L.shape}")
    F1 = np.block([[A0 + B0 @ K, L @ C0], [np.zeros((N0, N0)), A0 - L @ C0]])
    return GainReport(N0, K, L, eig_general(F1), -abs(plant.c),
                      kalman_rank(A0, B0), kalman_rank(A0.T, C0.T))


def synthesize_gains(plant: PlantConfig, basis: EigenBasis, reduction: SpectralReduction,
                     N0: int, poles_K=None, poles_L=None) -> GainReport:
    """Place ``eig(A0 + B0 K)`` and ``eig(A0 - L C0)`` at the targets."""
    bound = -abs(plant.c)
    pk = default_targets(N0, plant.c) if poles_K is None or len(poles_K) == 0 else np.asarray(poles_K)
    pl = default_targets(N0, plant.c) if poles_L is None or len(poles_L) == 0 else np.asarray(poles_L)
    for name, poles in (("poles_K", pk), ("poles_L", pl)):
        poles = np.asarray(poles, dtype=complex)
        if poles.size != N0:
            raise ValidationError(f"{name}: need {N0} targets, got {poles.size}")
        if np.any(poles.real >= bound):
            raise ValidationError(
                f"{name}: targets {poles} must satisfy Re < -|c| = {bound:.6g}; otherwise the "
                "delayed term cannot be dominated"
            )
    A0, B0, C0 = _blocks(plant, basis, reduction, N0)
    K = place_poles_siso(A0, B0, pk, mode="feedback")
    L = place_poles_siso(A0, C0, pl, mode="observer")
    return verify_gains(plant, basis, reduction, K, L, N0)
