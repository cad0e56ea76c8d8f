"""Single-phonon tight-binding problem of the radial modes.

All energies are in units of omega_x and measured relative to omega_x, so the
on-site entries are only the Coulomb shifts omega_{x,i}.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .equilibrium import IonChain, solve_equilibrium
from .errors import DegenerateGeometryError, InsufficientDataError, InvalidParameterError

FULL = "full"
NEAREST = "nn"
RANGE_MODES = (FULL, NEAREST)
N_GAPS = 5


@dataclass(frozen=True)
class PhononLattice:
    onsite: np.ndarray
    hopping: np.ndarray
    beta_x: float
    range_mode: str = FULL

    @property
    def n_sites(self) -> int:
        return len(self.onsite)

    def matrix(self) -> np.ndarray:
        m = self.hopping.copy()
        m[np.diag_indices_from(m)] = self.onsite
        return m


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    omega_c_fit: float
    omega_c_estimate: float
    gaps: np.ndarray


def _normalize_mode(range_mode: str) -> str:
    mode = {"nearest-neighbor": NEAREST, "nearest": NEAREST}.get(range_mode, range_mode)
    if mode not in RANGE_MODES:
        raise InvalidParameterError(f"range_mode must be one of {RANGE_MODES}, got {range_mode!r}")
    return mode


def build_lattice(chain: IonChain, beta_x: float, range_mode: str = FULL) -> PhononLattice:
    """Hopping ``t_ij = (beta_x/2) (d0/|u_i - u_j|)^3`` and on-site ``-sum_j t_ij``."""
    mode = _normalize_mode(range_mode)
    if not beta_x > 0:
        raise InvalidParameterError(f"beta_x must be positive, got {beta_x!r}")
    pos = np.asarray(chain.positions, dtype=float)
    n = len(pos)
    if n == 1:
        return PhononLattice(np.zeros(1), np.zeros((1, 1)), float(beta_x), mode)

    d0 = float(chain.d0) if np.isfinite(chain.d0) else float(np.mean(np.diff(np.sort(pos))))
    dist = np.abs(pos[:, None] - pos[None, :])
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] == 0.0):
        raise DegenerateGeometryError("two ions share a position")
    np.fill_diagonal(dist, np.inf)
    hop = 0.5 * beta_x * (d0 / dist) ** 3
    if mode == NEAREST:
        hop[np.abs(np.subtract.outer(np.arange(n), np.arange(n))) != 1] = 0.0
    np.fill_diagonal(hop, 0.0)
    hop = 0.5 * (hop + hop.T)
    onsite = -hop.sum(axis=1)
    return PhononLattice(onsite=onsite, hopping=hop, beta_x=float(beta_x), range_mode=mode)


def lattice_for(n_ions: int, beta_x: float, range_mode: str = FULL) -> PhononLattice:
    return build_lattice(solve_equilibrium(n_ions), beta_x, range_mode)


def confinement_estimate(n_ions: int, beta_x: float, alpha: float = 3.4, gamma: float = 18.0) -> float:
    """Harmonic phonon-trap frequency ``sqrt(alpha*gamma) * beta_x / N``.

    Continuum limit of the nearest-neighbour model: band curvature
    ``J = alpha beta_x / 2`` and potential curvature ``K = gamma beta_x / N^2``
    give ``omega_c = sqrt(2 J K)``.
    """
    if min(n_ions, beta_x, alpha, gamma) <= 0:
        raise InvalidParameterError("confinement_estimate needs positive inputs")
    return float(np.sqrt(alpha * gamma) / n_ions * beta_x)


def single_particle_spectrum(
    lattice: PhononLattice, alpha: float = 3.4, gamma: float = 18.0
) -> SpectrumResult:
    m = lattice.matrix()
    vals, vecs = np.linalg.eigh(m)
    # deterministic eigenvector sign: largest-magnitude component positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    gaps = np.diff(vals[: N_GAPS + 1])
    fit = float(np.mean(gaps)) if len(gaps) else 0.0
    est = confinement_estimate(lattice.n_sites, lattice.beta_x, alpha, gamma)
    return SpectrumResult(vals, vecs, fit, est, gaps)


def lowest_mode_density(lattice: PhononLattice, n_phonons: int) -> np.ndarray:
    """Site occupations with all ``n_phonons`` in the minimum-energy mode."""
    if n_phonons < 1:
        raise InvalidParameterError(f"n_phonons must be >= 1, got {n_phonons!r}")
    _, vecs = np.linalg.eigh(lattice.matrix())
    psi = vecs[:, 0]
    return n_phonons * psi**2 / float(psi @ psi)


def rms_width(density: np.ndarray) -> float:
    """Root-mean-square spread of a site profile about its centroid, in sites."""
    w = np.asarray(density, dtype=float)
    w = w / w.sum()
    sites = np.arange(len(w))
    mu = float(w @ sites)
    return float(np.sqrt(w @ (sites - mu) ** 2))


def width_scaling_exponent(
    n_list: Sequence[int], beta_x: float, range_mode: str = FULL
) -> float:
    """Log-log slope of the lowest-mode rms width (in units of N) against N."""
    ns = np.asarray(list(n_list), dtype=float)
    if len(ns) < 3:
        raise InsufficientDataError("need at least three chain lengths")
    if len(np.unique(ns)) < 2:
        raise InsufficientDataError("chain lengths must not all be equal")
    if np.any(ns < 20):
        raise InsufficientDataError("chain lengths must be >= 20")
    widths = []
    for n in ns.astype(int):
        lat = lattice_for(int(n), beta_x, range_mode)
        widths.append(rms_width(lowest_mode_density(lat, 1)) / n)
    slope, _ = np.polyfit(np.log(ns), np.log(widths), 1)
    return float(slope)


def trapping_potential(lattice: PhononLattice) -> np.ndarray:
    """On-site shifts relative to their minimum, in units of beta_x omega_x."""
    return (lattice.onsite - lattice.onsite.min()) / lattice.beta_x
