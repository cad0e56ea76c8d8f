"""Exact diagonalization of the phonon Bose-Hubbard model.

Two Hilbert spaces are supported:

* ``conserving``: fixed total phonon number, energies measured relative to
  ``omega_x * N_ph``;
* ``full``: every site truncated at ``n_max`` phonons, with the complete
  quadratic Coulomb coupling ``t_ij (a_i + a_i^dag)(a_j + a_j^dag)``, the
  on-site squeezing terms and the explicit ``omega_x sum_i n_i``.

The Hamiltonian is applied matrix-free from cached transition tables of the
basis; an explicit sparse matrix is assembled from the same tables for the
dense oracle and for shift-invert solves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import CapacityError, ConvergenceError, InvalidParameterError
from .lattice import PhononLattice

CONSERVING = "conserving"
FULL = "full"

DEFAULT_MAX_DIM = 2_000_000
DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-9
TIE_BREAK = 1e-10


def sector_dimension(n_sites: int, n_phonons: int) -> int:
    return math.comb(n_phonons + n_sites - 1, n_sites - 1)


def _compositions(n_sites: int, total: int) -> np.ndarray:
    """All occupation vectors of ``total`` bosons on ``n_sites``, lexicographic order."""
    if n_sites == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = _compositions(n_sites - 1, total - first)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(blocks)


class FockBasis:
    """Occupation-number basis, either a fixed-``N_ph`` sector or a ``n_max`` box.

    States are rows of ``states``; ``keys`` encodes each row in base
    ``cap + 1`` with site 0 most significant, so lexicographic order of the
    rows is ascending key order and lookups are a binary search.
    """

    def __init__(self, n_sites: int, n_phonons: Optional[int] = None, n_max: Optional[int] = None,
                 max_dim: int = DEFAULT_MAX_DIM):
        if n_sites < 1:
            raise InvalidParameterError(f"n_sites must be >= 1, got {n_sites}")
        if (n_phonons is None) == (n_max is None):
            raise InvalidParameterError("give exactly one of n_phonons (conserving) or n_max (full)")
        self.n_sites = int(n_sites)
        if n_phonons is not None:
            if n_phonons < 0:
                raise InvalidParameterError(f"n_phonons must be >= 0, got {n_phonons}")
            self.mode = CONSERVING
            self.n_phonons = int(n_phonons)
            self.cap = self.n_phonons
            dim = sector_dimension(self.n_sites, self.n_phonons)
        else:
            if n_max < 1:
                raise InvalidParameterError(f"n_max must be >= 1, got {n_max}")
            self.mode = FULL
            self.n_phonons = None
            self.cap = int(n_max)
            dim = (self.cap + 1) ** self.n_sites
        if dim > max_dim:
            raise CapacityError(f"basis dimension {dim} exceeds the cap {max_dim}", dimension=dim)
        self.base = self.cap + 1
        if self.n_sites * math.log2(self.base + 2) > 62:
            raise CapacityError("occupation keys overflow 64-bit integers", dimension=dim)
        self.weights = self.base ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)

        if self.mode == CONSERVING:
            self.states = _compositions(self.n_sites, self.n_phonons)
        else:
            grids = np.indices((self.base,) * self.n_sites).reshape(self.n_sites, -1).T
            self.states = np.ascontiguousarray(grids, dtype=np.int64)
        self.keys = self.states @ self.weights
        self.dimension = len(self.keys)
        self._tables = {}

    @property
    def n_max(self) -> int:
        return self.cap

    def __len__(self) -> int:
        return self.dimension

    def index(self, states) -> np.ndarray:
        """Dense indices of occupation vectors; -1 for vectors outside the basis."""
        arr = np.atleast_2d(np.asarray(states, dtype=np.int64))
        out = np.full(len(arr), -1, dtype=np.int64)
        ok = np.all((arr >= 0) & (arr <= self.cap), axis=1)
        keys = arr[ok] @ self.weights
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, self.dimension - 1)
        hit = self.keys[pos] == keys
        sub = np.full(len(keys), -1, dtype=np.int64)
        sub[hit] = pos[hit]
        out[ok] = sub
        return out

    def state(self, idx: int) -> tuple:
        return tuple(int(v) for v in self.states[idx])

    def transitions(self, delta: tuple):
        """Table for a product of ladder operators shifting occupations by ``delta``.

        ``delta`` is a length-``n_sites`` tuple with entries in {-1, +1, +2}.
        Returns ``(src, tgt, amp, dropped)`` where ``dropped`` holds
        ``(src, amp, ext_key)`` for moves leaving the truncated box.
        """
        if delta in self._tables:
            return self._tables[delta]
        d = np.asarray(delta, dtype=np.int64)
        new = self.states + d
        amp = np.ones(self.dimension)
        for site in np.nonzero(d)[0]:
            n = self.states[:, site].astype(float)
            if d[site] == -1:
                amp *= np.sqrt(n)
            elif d[site] == 1:
                amp *= np.sqrt(n + 1.0)
            elif d[site] == 2:
                amp *= np.sqrt((n + 1.0) * (n + 2.0))
            else:
                raise InvalidParameterError(f"unsupported ladder shift {d[site]}")
        nonneg = np.all(new >= 0, axis=1)
        inside = nonneg & np.all(new <= self.cap, axis=1)
        src = np.nonzero(inside)[0]
        tgt = np.searchsorted(self.keys, new[inside] @ self.weights)
        out_src = np.nonzero(nonneg & ~inside)[0]
        ext_w = (self.base + 2) ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        dropped = (out_src, amp[out_src], new[out_src] @ ext_w)
        table = (src, tgt, amp[src], dropped)
        self._tables[delta] = table
        return table


@lru_cache(maxsize=32)
def build_basis(n_sites: int, n_phonons: Optional[int] = None, n_max: Optional[int] = None,
                max_dim: int = DEFAULT_MAX_DIM) -> FockBasis:
    return FockBasis(n_sites, n_phonons=n_phonons, n_max=n_max, max_dim=max_dim)


def _delta(n: int, **moves) -> tuple:
    d = [0] * n
    for site, v in moves.values():
        d[site] += v
    return tuple(d)


@dataclass(frozen=True)
class ManyBodyState:
    basis: FockBasis
    amplitudes: np.ndarray
    energy: float = float("nan")
    diagnostics: dict = field(default_factory=dict)
    leakage: float = 0.0

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "ManyBodyState":
        return replace(self, amplitudes=self.amplitudes / self.norm())


@dataclass(frozen=True)
class BoseHubbardProblem:
    """Bose-Hubbard Hamiltonian on a phonon lattice (units of omega_x).

    ``f_eta_sq`` only enters the full model: it adds the number-changing
    ``F eta^2 (a^2 + a^dag^2)`` and, when ``sw_number_shift`` is set, the
    number-conserving ``2 F eta^2 n`` from the same ``(a + a^dag)^2`` term.
    """

    lattice: PhononLattice
    hubbard_u: float = 0.0
    mode: str = CONSERVING
    n_phonons: Optional[int] = None
    n_max: Optional[int] = None
    f_eta_sq: float = 0.0
    sw_number_shift: bool = True
    onsite_squeezing: bool = True
    tie_break: float = TIE_BREAK
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        if not np.isfinite(self.hubbard_u):
            raise InvalidParameterError("hubbard_u must be finite")
        if self.mode == CONSERVING and self.n_phonons is None:
            raise InvalidParameterError("conserving mode needs n_phonons")
        if self.mode == FULL and self.n_max is None:
            raise InvalidParameterError("full mode needs n_max")
        if self.mode not in (CONSERVING, FULL):
            raise InvalidParameterError(f"unknown mode {self.mode!r}")

    @property
    def basis(self) -> FockBasis:
        if self.mode == CONSERVING:
            return build_basis(self.lattice.n_sites, n_phonons=self.n_phonons, max_dim=self.max_dim)
        return build_basis(self.lattice.n_sites, n_max=self.n_max, max_dim=self.max_dim)

    def onsite(self) -> np.ndarray:
        """On-site energies including the mirror-symmetric tie-break perturbation."""
        n = self.lattice.n_sites
        x = (np.arange(n) - (n - 1) / 2.0) / n
        eps = self.lattice.onsite + self.tie_break * x**2
        if self.mode == FULL:
            eps = eps + 1.0
            if self.sw_number_shift:
                eps = eps + 2.0 * self.f_eta_sq
        return eps

    def squeezing(self) -> np.ndarray:
        """Coefficients of ``a_i^2 + a_i^dag^2`` (full mode only)."""
        s = np.full(self.lattice.n_sites, float(self.f_eta_sq))
        if self.onsite_squeezing:
            s = s + 0.5 * self.lattice.onsite
        return s

    def with_u(self, u: float) -> "BoseHubbardProblem":
        return replace(self, hubbard_u=float(u))


def _terms(problem: BoseHubbardProblem):
    """(coef, table) pairs; each term is applied together with its Hermitian conjugate."""
    basis = problem.basis
    n = basis.n_sites
    hop = problem.lattice.hopping
    terms = []
    for i in range(n):
        for j in range(i + 1, n):
            t = hop[i, j]
            if t == 0.0:
                continue
            terms.append((t, basis.transitions(_delta(n, a=(i, 1), b=(j, -1)))))
            if problem.mode == FULL:
                terms.append((t, basis.transitions(_delta(n, a=(i, 1), b=(j, 1)))))
    if problem.mode == FULL:
        for i, s in enumerate(problem.squeezing()):
            if s != 0.0:
                terms.append((s, basis.transitions(_delta(n, a=(i, 2)))))
    return terms


def _escapes(problem: BoseHubbardProblem, terms) -> list:
    """(coef, dropped) pairs for every move that can leave the truncated box.

    Number-raising terms only leak forward, but a hop ``a_i^dag a_j`` also leaks
    through its conjugate ``a_j^dag a_i`` when site ``j`` is already at the cap.
    """
    out = [(coef, table[3]) for coef, table in terms]
    if problem.mode == FULL:
        basis = problem.basis
        n = basis.n_sites
        hop = problem.lattice.hopping
        for i in range(n):
            for j in range(i + 1, n):
                if hop[i, j] != 0.0:
                    out.append((hop[i, j], basis.transitions(_delta(n, a=(j, 1), b=(i, -1)))[3]))
    return out


def diagonal(problem: BoseHubbardProblem) -> np.ndarray:
    occ = problem.basis.states.astype(float)
    return occ @ problem.onsite() + problem.hubbard_u * np.sum(occ * (occ - 1.0), axis=1)


class HamiltonianOperator:
    """Matrix-free ``H psi`` bound to a problem."""

    def __init__(self, problem: BoseHubbardProblem):
        self.problem = problem
        self.basis = problem.basis
        self.diag = diagonal(problem)
        self.terms = _terms(problem)
        self.escapes = _escapes(problem, self.terms)
        self.dimension = self.basis.dimension
        self.truncation_events = 0

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi)
        out = self.diag * psi
        for coef, (src, tgt, amp, _) in self.terms:
            c = coef * amp
            out[tgt] += c * psi[src]
            out[src] += c * psi[tgt]
        return out

    __call__ = matvec

    def leakage(self, psi: np.ndarray) -> float:
        """Squared norm of the part of ``H psi`` pushed beyond the occupation cap."""
        keys, vals = [], []
        for coef, (dsrc, damp, dkey) in self.escapes:
            if len(dsrc):
                keys.append(dkey)
                vals.append(coef * damp * psi[dsrc])
        if not keys:
            return 0.0
        keys = np.concatenate(keys)
        vals = np.concatenate(vals)
        uniq, inv = np.unique(keys, return_inverse=True)
        summed = np.bincount(inv, weights=vals.real, minlength=len(uniq)).astype(complex)
        if np.iscomplexobj(vals):
            summed += 1j * np.bincount(inv, weights=vals.imag, minlength=len(uniq))
        leak = float(np.sum(np.abs(summed) ** 2))
        if leak > 0.0:
            self.truncation_events += 1
        return leak

    def to_sparse(self) -> sp.csr_matrix:
        rows = [np.arange(self.dimension)]
        cols = [np.arange(self.dimension)]
        data = [self.diag]
        for coef, (src, tgt, amp, _) in self.terms:
            rows += [tgt, src]
            cols += [src, tgt]
            data += [coef * amp, coef * amp]
        m = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dimension, self.dimension),
        )
        return m.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def as_linear_operator(self, dtype=float) -> LinearOperator:
        return LinearOperator((self.dimension, self.dimension), matvec=self.matvec, dtype=dtype)


def hamiltonian(problem: BoseHubbardProblem) -> HamiltonianOperator:
    return HamiltonianOperator(problem)


def apply_hamiltonian(problem: BoseHubbardProblem, state: ManyBodyState) -> ManyBodyState:
    """``H |state>`` (unnormalized); truncation losses are reported in ``leakage``."""
    op = HamiltonianOperator(problem)
    if state.basis is not op.basis and state.basis.dimension != op.dimension:
        raise InvalidParameterError("state basis does not match the problem")
    out = op.matvec(state.amplitudes)
    leak = op.leakage(state.amplitudes) if problem.mode == FULL else 0.0
    return ManyBodyState(op.basis, out, leakage=leak,
                         diagnostics={"truncation_events": op.truncation_events})


def fix_gauge(vec: np.ndarray) -> np.ndarray:
    """Rotate so the first component of (near-)maximal modulus is real positive."""
    mag = np.abs(vec)
    idx = int(np.argmax(mag >= mag.max() * (1.0 - 1e-6)))
    phase = vec[idx] / mag[idx]
    out = vec / phase
    return out.real.copy() if np.isrealobj(vec) or np.allclose(out.imag, 0.0, atol=1e-14) else out


def start_vector(dim: int) -> np.ndarray:
    return np.full(dim, 1.0 / math.sqrt(dim))


def ground_state(problem: BoseHubbardProblem, method: str = "auto",
                 v0: Optional[np.ndarray] = None, dense_limit: int = DENSE_LIMIT) -> ManyBodyState:
    """Lowest eigenpair.

    ``method`` is ``"dense"``, ``"iterative"`` (implicitly restarted Lanczos on
    the matrix-free operator) or ``"auto"``: dense up to ``dense_limit``.
    """
    op = HamiltonianOperator(problem)
    dim = op.dimension
    if method == "auto":
        method = "dense" if dim <= dense_limit else "iterative"
    if method not in ("dense", "iterative"):
        raise InvalidParameterError(f"unknown method {method!r}")
    if dim <= 3:
        method = "dense"

    if method == "dense":
        vals, vecs = np.linalg.eigh(op.to_dense())
        energy, vec = float(vals[0]), vecs[:, 0]
        info = {"solver": "dense", "iterations": 0,
                "gap": float(vals[1] - vals[0]) if dim > 1 else float("inf")}
    else:
        start = start_vector(dim) if v0 is None else np.asarray(v0, dtype=float)
        counter = {"n": 0}

        def mv(x):
            counter["n"] += 1
            return op.matvec(x)

        lin = LinearOperator((dim, dim), matvec=mv, dtype=float)
        try:
            vals, vecs = eigsh(lin, k=1, which="SA", v0=start, tol=0.0, maxiter=max(1000, dim))
        except ArpackNoConvergence as exc:
            raise ConvergenceError("Lanczos ground-state solve did not converge",
                                   residual=float("nan")) from exc
        energy, vec = float(vals[0]), vecs[:, 0]
        info = {"solver": "lanczos", "iterations": counter["n"]}

    vec = fix_gauge(vec / np.linalg.norm(vec))
    residual = float(np.linalg.norm(op.matvec(vec) - energy * vec))
    info["residual"] = residual
    info["tie_break"] = problem.tie_break
    if residual > RESIDUAL_TOL:
        raise ConvergenceError(f"ground-state residual {residual:.3e} above {RESIDUAL_TOL}",
                               residual=residual, history=[residual])
    leak = op.leakage(vec) if problem.mode == FULL else 0.0
    return ManyBodyState(op.basis, vec, energy=energy, diagnostics=info, leakage=leak)


def lowest_states(problem: BoseHubbardProblem, k: int = 2,
                  v0: Optional[np.ndarray] = None) -> tuple:
    """Lowest ``k`` eigenvalues and eigenvectors (dense up to the dense limit)."""
    op = HamiltonianOperator(problem)
    dim = op.dimension
    k = min(k, dim)
    if dim <= DENSE_LIMIT or k >= dim - 1:
        vals, vecs = np.linalg.eigh(op.to_dense())
        return vals[:k], vecs[:, :k]
    start = start_vector(dim) if v0 is None else np.asarray(v0, dtype=float)
    vals, vecs = eigsh(op.as_linear_operator(), k=k, which="SA", v0=start, tol=0.0)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def embed(state: ManyBodyState, basis: FockBasis) -> np.ndarray:
    """Copy amplitudes onto the matching occupation vectors of a larger basis."""
    idx = basis.index(state.basis.states)
    if np.any(idx < 0) and np.any(state.amplitudes[idx < 0] != 0):
        raise CapacityError("target basis cannot hold the reference state", dimension=basis.dimension)
    out = np.zeros(basis.dimension, dtype=np.result_type(state.amplitudes, float))
    ok = idx >= 0
    out[idx[ok]] = state.amplitudes[ok]
    return out


@dataclass(frozen=True)
class ConsistencyResult:
    overlap: float
    n_max: int
    history: list
    energy: float
    leakage: float


def _max_overlap(problem: BoseHubbardProblem, ref: np.ndarray, k: int, degeneracy_tol: float):
    op = HamiltonianOperator(problem)
    mat = op.to_sparse()
    sigma = float(ref @ (mat @ ref))
    dim = op.dimension
    if dim <= DENSE_LIMIT:
        vals, vecs = np.linalg.eigh(mat.toarray())
    else:
        vals, vecs = eigsh(mat.tocsc(), k=min(k, dim - 2), sigma=sigma, which="LM",
                           v0=start_vector(dim))
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    proj = vecs.T @ ref
    best, best_e, best_vec = -1.0, float("nan"), None
    # a degenerate eigenspace counts as one eigenstate: the normalized projection of ref onto it
    start = 0
    while start < len(vals):
        stop = start + 1
        while stop < len(vals) and vals[stop] - vals[start] <= degeneracy_tol:
            stop += 1
        w = float(np.sum(proj[start:stop] ** 2))
        if w > best:
            best, best_e = w, float(vals[start])
            best_vec = vecs[:, start:stop] @ proj[start:stop]
        start = stop
    leak = op.leakage(best_vec / np.linalg.norm(best_vec)) if best_vec is not None else 0.0
    return best, best_e, leak


def conserving_full_consistency(problem_full: BoseHubbardProblem, reference: ManyBodyState,
                                change_tol: float = 1e-3, max_n_max: int = 16, k: int = 40,
                                degeneracy_tol: float = 1e-9) -> ConsistencyResult:
    """Largest squared overlap between ``reference`` and an eigenstate of the full model.

    ``n_max`` starts at the reference's maximum occupation + 2, or at the
    problem's ``n_max`` if that is larger, and grows until the overlap
    changes by less than ``change_tol``.
    """
    if problem_full.mode != FULL:
        raise InvalidParameterError("conserving_full_consistency needs a full-mode problem")
    ref_state = reference.normalized()
    occupied = ref_state.basis.states[np.abs(ref_state.amplitudes) > 0]
    n_max = max(int(occupied.max()) + 2, int(problem_full.n_max or 0))
    history = []
    prev = None
    while n_max <= max_n_max:
        prob = replace(problem_full, n_max=n_max)
        basis = prob.basis
        ref = embed(ref_state, basis).real
        ov, energy, leak = _max_overlap(prob, ref, k, degeneracy_tol)
        history.append((n_max, ov))
        if prev is not None and abs(ov - prev) < change_tol:
            return ConsistencyResult(ov, n_max, history, energy, leak)
        prev = ov
        n_max += 1
    raise CapacityError(f"overlap not converged up to n_max={max_n_max}", dimension=None)


@dataclass(frozen=True)
class ScanPoint:
    hubbard_u: float
    state: ManyBodyState
    report: object


def mott_superfluid_scan(lattice: PhononLattice, u_values: Sequence[float], n_phonons: int,
                         threads: int = 1, method: str = "auto",
                         max_dim: int = DEFAULT_MAX_DIM) -> list:
    """Ground state and density report for each interaction strength, in input order."""
    from .observables import density_report

    base = BoseHubbardProblem(lattice, mode=CONSERVING, n_phonons=n_phonons, max_dim=max_dim)
    base.basis  # raise capacity errors before spawning work

    def solve(u):
        st = ground_state(base.with_u(u), method=method)
        return ScanPoint(float(u), st, density_report(st))

    if threads > 1 and len(u_values) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(solve, u_values))
    return [solve(u) for u in u_values]
