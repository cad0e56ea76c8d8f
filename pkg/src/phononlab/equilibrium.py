"""Axial equilibrium of an ion chain in a harmonic trap.

Lengths are in units of ``l = (e^2 / (4 pi eps0 m omega_z^2))**(1/3)``, where the
dimensionless potential is

    V(u) = sum_i u_i**2 / 2 + sum_{i<j} 1 / |u_i - u_j|
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InsufficientDataError, InvalidParameterError

DEFAULT_TOL = 1e-12
MAX_ITER = 200
FIT_WINDOW = 0.35


@dataclass(frozen=True)
class IonChain:
    positions: np.ndarray
    d0: float
    residual: float
    iterations: int = 0
    tol_effective: float = 0.0

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)


@dataclass(frozen=True)
class DensityFit:
    alpha: float
    gamma: float
    rms_error: float
    window: float = FIT_WINDOW
    n_points: int = 0


def potential(u: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    diff = np.abs(u[:, None] - u[None, :])
    iu = np.triu_indices(len(u), k=1)
    return 0.5 * float(u @ u) + float(np.sum(1.0 / diff[iu]))


def gradient(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, 1.0)
    force = np.sign(diff) / diff**2
    np.fill_diagonal(force, 0.0)
    return u - force.sum(axis=1)


def hessian(u: np.ndarray) -> np.ndarray:
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, 1.0)
    k = 2.0 / diff**3
    np.fill_diagonal(k, 0.0)
    h = -k
    h[np.diag_indices_from(h)] = 1.0 + k.sum(axis=1)
    return h


def _rescale(q: np.ndarray) -> np.ndarray:
    # V(s q) = s^2 A/2 + B/s is minimised at s^3 = B/A
    a = float(q @ q)
    diff = np.abs(q[:, None] - q[None, :])
    iu = np.triu_indices(len(q), k=1)
    b = float(np.sum(1.0 / diff[iu]))
    return q * (b / a) ** (1.0 / 3.0)


def initial_guess(n_ions: int, continuum: bool = True) -> np.ndarray:
    """Mirror-symmetric starting positions.

    The continuum guess places ions at the quantiles of the large-N density
    ``n(z) ~ 1 - z^2`` on [-1, 1]; the fallback is an arithmetic progression.
    Either is then rescaled to the optimal overall length.
    """
    if n_ions == 1:
        return np.zeros(1)
    if continuum:
        # cumulative of (1 - z^2) normalised: F(z) = (2 + 3z - z^3) / 4
        targets = (np.arange(n_ions) + 0.5) / n_ions
        z = np.zeros(n_ions)
        for _ in range(60):
            f = (2.0 + 3.0 * z - z**3) / 4.0 - targets
            z = np.clip(z - f / (0.75 * (1.0 - z**2) + 1e-300), -1.0, 1.0)
        q = z
    else:
        q = np.linspace(-1.0, 1.0, n_ions)
    q = 0.5 * (q - q[::-1])
    return _rescale(q)


def roundoff_floor(u: np.ndarray) -> float:
    """Gradient noise from rounding the positions themselves: eps * || |H| |u| ||."""
    return float(np.finfo(float).eps * np.linalg.norm(np.abs(hessian(u)) @ np.abs(u)))


def _newton(u: np.ndarray, tol: float, max_iter: int):
    history = []
    v = potential(u)
    for it in range(max_iter + 1):
        g = gradient(u)
        res = float(np.linalg.norm(g))
        history.append(res)
        tol_eff = max(tol, roundoff_floor(u))
        if res <= tol_eff:
            return u, res, it, tol_eff
        if it == max_iter:
            break
        step = np.linalg.solve(hessian(u), -g)
        lam = 1.0
        while lam > 1e-12:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0):
                # near the minimum V is flat to roundoff; the gradient still resolves progress
                if potential(trial) < v or np.linalg.norm(gradient(trial)) < res:
                    break
            lam *= 0.5
        u = 0.5 * (trial - trial[::-1])
        v = potential(u)
    raise ConvergenceError(
        f"equilibrium solve did not converge in {max_iter} iterations",
        residual=history[-1],
        history=history,
    )


def solve_equilibrium(n_ions: int, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> IonChain:
    """Newton iteration for the equilibrium positions of ``n_ions`` ions.

    Converged when the gradient norm drops below ``max(tol, roundoff_floor)``;
    for long chains the floor exceeds 1e-12.
    """
    if int(n_ions) != n_ions or n_ions < 1:
        raise InvalidParameterError(f"n_ions must be a positive integer, got {n_ions!r}")
    if not tol > 0:
        raise InvalidParameterError(f"tol must be positive, got {tol!r}")
    n_ions = int(n_ions)
    if n_ions == 1:
        return IonChain(positions=np.zeros(1), d0=float("nan"), residual=0.0)

    try:
        u, res, it, tol_eff = _newton(initial_guess(n_ions, continuum=True), tol, max_iter)
    except ConvergenceError:
        u, res, it, tol_eff = _newton(initial_guess(n_ions, continuum=False), tol, max_iter)
    return IonChain(
        positions=u,
        d0=float(np.mean(np.diff(u))),
        residual=res,
        iterations=it,
        tol_effective=tol_eff,
    )


def mean_spacing(chain: IonChain, center: bool = False) -> float:
    """Mean nearest-neighbour gap, or the gap closest to the chain centre."""
    pos = np.asarray(chain.positions, dtype=float)
    if len(pos) < 2:
        raise InsufficientDataError("spacing is undefined for a single ion")
    gaps = np.diff(pos)
    if center:
        return float(gaps[(len(gaps) - 1) // 2])
    return float(np.mean(gaps))


def fit_density_profile(chain: IonChain, window: float = FIT_WINDOW) -> DensityFit:
    """Least-squares fit of ``(d0/d)^3 = alpha - gamma (i'/N)^2`` over interior gaps.

    The gap between ions i and i+1 (1-based) sits at ``i' = i - N/2``.
    """
    pos = np.asarray(chain.positions, dtype=float)
    n = len(pos)
    if n < 10:
        raise InsufficientDataError(f"density fit needs at least 10 ions, got {n}")
    gaps = np.diff(pos)
    d0 = float(np.mean(gaps))
    i_prime = np.arange(1, n) - n / 2.0
    x = (i_prime / n) ** 2
    y = (d0 / gaps) ** 3
    mask = np.abs(i_prime) / n <= window
    design = np.column_stack([np.ones(mask.sum()), x[mask]])
    coef, *_ = np.linalg.lstsq(design, y[mask], rcond=None)
    resid = y[mask] - design @ coef
    return DensityFit(
        alpha=float(coef[0]),
        gamma=float(-coef[1]),
        rms_error=float(np.sqrt(np.mean(resid**2))),
        window=window,
        n_points=int(mask.sum()),
    )
