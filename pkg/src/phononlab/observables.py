"""Measurable quantities of many-body phonon states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDistributionError, InvalidParameterError, InvalidStateError
from .manybody import ManyBodyState, _delta


@dataclass(frozen=True)
class SidebandProbe:
    g: float
    pulse_time: float

    def __post_init__(self):
        if self.g < 0 or self.pulse_time < 0:
            raise InvalidParameterError("sideband coupling and pulse time must be >= 0")


@dataclass(frozen=True)
class DensityReport:
    mean_n: np.ndarray
    var_n: np.ndarray
    number_dist: np.ndarray
    condensate_fraction: float
    obdm: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mean_n.sum())


def one_body_density_matrix(state: ManyBodyState) -> np.ndarray:
    """``rho_ij = <a_i^dag a_j>``."""
    basis = state.basis
    psi = state.amplitudes
    n = basis.n_sites
    occ = basis.states.astype(float)
    prob = np.abs(psi) ** 2
    rho = np.zeros((n, n), dtype=complex)
    rho[np.diag_indices(n)] = prob @ occ
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            src, tgt, amp, _ = basis.transitions(_delta(n, a=(i, 1), b=(j, -1)))
            rho[i, j] = np.sum(np.conj(psi[tgt]) * amp * psi[src])
    return rho


def density_report(state: ManyBodyState) -> DensityReport:
    norm = state.norm()
    if not norm > 0:
        raise InvalidStateError("state has zero norm")
    if abs(norm - 1.0) > 1e-8:
        state = state.normalized()
    basis = state.basis
    prob = np.abs(state.amplitudes) ** 2
    occ = basis.states
    mean = prob @ occ
    var = prob @ (occ.astype(float) ** 2) - mean**2
    var = np.maximum(var, 0.0)

    n_levels = basis.cap + 1
    dist = np.zeros((basis.n_sites, n_levels))
    for site in range(basis.n_sites):
        dist[site] = np.bincount(occ[:, site], weights=prob, minlength=n_levels)

    rho = one_body_density_matrix(state)
    total = float(np.trace(rho).real)
    if total > 1e-12:
        lam = np.linalg.eigvalsh(rho)
        cf = float(lam[-1] / total)
    else:
        cf = 0.0
    if not np.iscomplexobj(state.amplitudes):
        rho = rho.real
    return DensityReport(mean, var, dist, cf, rho)


def sideband_signal(number_dist_row, probe: SidebandProbe) -> float:
    """Red-sideband excitation probability ``sum_n sin^2(sqrt(n) g t) P(n)``."""
    p = np.asarray(number_dist_row, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-6:
        raise InvalidDistributionError(f"P(n) must be a normalized distribution (sum={p.sum():.8g})")
    n = np.arange(len(p))
    val = float(np.sum(np.sin(np.sqrt(n) * probe.g * probe.pulse_time) ** 2 * p))
    return min(max(val, 0.0), 1.0)
