import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phononlab.equilibrium import solve_equilibrium
from phononlab.errors import CapacityError, InvalidParameterError
from phononlab.lattice import PhononLattice, build_lattice, lattice_for
from phononlab.manybody import (
    CONSERVING,
    FULL,
    BoseHubbardProblem,
    FockBasis,
    HamiltonianOperator,
    ManyBodyState,
    apply_hamiltonian,
    build_basis,
    conserving_full_consistency,
    embed,
    ground_state,
    mott_superfluid_scan,
)
from phononlab.observables import density_report


def bare_lattice(onsite, hopping, beta=0.01):
    return PhononLattice(np.asarray(onsite, float), np.asarray(hopping, float), beta)


def basis_vector(basis, occ):
    v = np.zeros(basis.dimension)
    v[basis.index([occ])[0]] = 1.0
    return v


@pytest.mark.parametrize("n, nph, dim", [(6, 6, 462), (4, 4, 35), (1, 7, 1), (3, 0, 1)])
def test_sector_dimension(n, nph, dim):
    basis = FockBasis(n, n_phonons=nph)
    assert basis.dimension == dim == math.comb(nph + n - 1, n - 1)
    assert np.all(basis.states.sum(axis=1) == nph)


def test_basis_matches_bruteforce_enumeration():
    basis = FockBasis(4, n_phonons=3)
    brute = [s for s in itertools.product(range(4), repeat=4) if sum(s) == 3]
    assert [basis.state(i) for i in range(basis.dimension)] == sorted(brute)


def test_full_basis_dimension():
    basis = FockBasis(3, n_max=4)
    assert basis.dimension == 125
    assert basis.states.max() == 4


@pytest.mark.parametrize("kwargs", [dict(n_phonons=5), dict(n_max=3)])
def test_index_round_trip(kwargs):
    basis = FockBasis(4, **kwargs)
    idx = basis.index(basis.states)
    assert np.array_equal(idx, np.arange(basis.dimension))
    assert basis.index([[9, 0, 0, 0]])[0] == -1


def test_capacity_error_carries_dimension():
    with pytest.raises(CapacityError) as info:
        FockBasis(12, n_phonons=12, max_dim=1000)
    assert info.value.dimension == math.comb(23, 11)


def test_basis_arguments_are_exclusive():
    with pytest.raises(InvalidParameterError):
        FockBasis(3)
    with pytest.raises(InvalidParameterError):
        FockBasis(3, n_phonons=2, n_max=2)


def test_diagonal_action_of_interaction():
    lat = bare_lattice([0.0, 0.0], [[0, 0], [0, 0]])
    prob = BoseHubbardProblem(lat, hubbard_u=0.3, n_phonons=2, tie_break=0.0)
    basis = prob.basis
    psi = basis_vector(basis, (2, 0))
    out = apply_hamiltonian(prob, ManyBodyState(basis, psi)).amplitudes
    np.testing.assert_allclose(out, 2 * 0.3 * psi, atol=1e-15)


def test_single_phonon_hop():
    t = 0.004
    lat = bare_lattice([0.0, 0.0], [[0, t], [t, 0]])
    prob = BoseHubbardProblem(lat, n_phonons=1, tie_break=0.0)
    basis = prob.basis
    out = apply_hamiltonian(prob, ManyBodyState(basis, basis_vector(basis, (1, 0)))).amplitudes
    np.testing.assert_allclose(out, t * basis_vector(basis, (0, 1)), atol=1e-15)


def test_bosonic_enhancement_of_hopping():
    t = 1.0
    lat = bare_lattice([0.0, 0.0], [[0, t], [t, 0]])
    prob = BoseHubbardProblem(lat, n_phonons=3, tie_break=0.0)
    basis = prob.basis
    out = HamiltonianOperator(prob).matvec(basis_vector(basis, (2, 1)))
    # a_0^dag a_1 |2,1> = sqrt(1*3)|3,0>, a_1^dag a_0 |2,1> = sqrt(2*2)|1,2>
    assert out[basis.index([(3, 0)])[0]] == pytest.approx(math.sqrt(3))
    assert out[basis.index([(1, 2)])[0]] == pytest.approx(2.0)


@pytest.mark.parametrize("mode", [CONSERVING, FULL])
def test_hermiticity_on_random_vectors(mode, small_lattice):
    kw = dict(n_phonons=4) if mode == CONSERVING else dict(n_max=3, f_eta_sq=0.1)
    prob = BoseHubbardProblem(small_lattice, 0.02, mode=mode, **kw)
    op = HamiltonianOperator(prob)
    rng = np.random.default_rng(7)
    for _ in range(5):
        psi = rng.normal(size=op.dimension) + 1j * rng.normal(size=op.dimension)
        phi = rng.normal(size=op.dimension) + 1j * rng.normal(size=op.dimension)
        lhs = np.vdot(psi, op.matvec(phi))
        rhs = np.conj(np.vdot(phi, op.matvec(psi)))
        assert abs(lhs - rhs) < 1e-12


def test_explicit_matrix_matches_matrix_free(small_lattice):
    prob = BoseHubbardProblem(small_lattice, 0.01, mode=FULL, n_max=3, f_eta_sq=0.05)
    op = HamiltonianOperator(prob)
    rng = np.random.default_rng(3)
    v = rng.normal(size=op.dimension)
    np.testing.assert_allclose(op.to_sparse() @ v, op.matvec(v), atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=5),
       st.integers(min_value=0, max_value=2**31))
def test_conserving_hamiltonian_never_changes_phonon_number(n, nph, seed):
    prob = BoseHubbardProblem(lattice_for(n, 0.05), 0.01, n_phonons=nph)
    op = HamiltonianOperator(prob)
    psi = np.random.default_rng(seed).normal(size=op.dimension)
    out = op.matvec(psi)
    assert np.all(op.basis.states.sum(axis=1) == nph)
    assert out.shape == psi.shape


def test_full_mode_truncation_is_accounted(small_lattice):
    prob = BoseHubbardProblem(small_lattice, 0.02, mode=FULL, n_max=2, f_eta_sq=0.1)
    basis = prob.basis
    psi = basis_vector(basis, (2, 2, 2, 2))
    out = apply_hamiltonian(prob, ManyBodyState(basis, psi))
    assert out.leakage > 0
    assert out.diagnostics["truncation_events"] == 1
    vac = apply_hamiltonian(prob, ManyBodyState(basis, basis_vector(basis, (0, 0, 0, 0))))
    assert vac.leakage == 0.0


def test_full_mode_leakage_matches_larger_box(small_lattice):
    # dropped amplitude equals the weight H puts outside the small box when computed in a larger one
    small = BoseHubbardProblem(small_lattice, 0.02, mode=FULL, n_max=2, f_eta_sq=0.1)
    big = BoseHubbardProblem(small_lattice, 0.02, mode=FULL, n_max=4, f_eta_sq=0.1)
    rng = np.random.default_rng(11)
    psi = rng.normal(size=small.basis.dimension)
    leak = apply_hamiltonian(small, ManyBodyState(small.basis, psi)).leakage
    st_small = ManyBodyState(small.basis, psi)
    big_out = HamiltonianOperator(big).matvec(embed(st_small, big.basis))
    outside = np.any(big.basis.states > 2, axis=1)
    assert leak == pytest.approx(float(np.sum(big_out[outside] ** 2)), rel=1e-12)


def test_noninteracting_energy_is_condensate_energy(fig3_lattice):
    prob = BoseHubbardProblem(fig3_lattice, 0.0, n_phonons=6)
    gs = ground_state(prob)
    single = fig3_lattice.hopping.copy()
    single[np.diag_indices_from(single)] = prob.onsite()
    lam = np.linalg.eigvalsh(single)[0]
    assert gs.energy == pytest.approx(6 * lam, abs=1e-12)


def test_iterative_matches_dense_on_random_lattice():
    rng = np.random.default_rng(5)
    hop = rng.uniform(0, 0.01, size=(4, 4))
    hop = np.triu(hop, 1) + np.triu(hop, 1).T
    lat = bare_lattice(-hop.sum(axis=1), hop)
    prob = BoseHubbardProblem(lat, 0.007, n_phonons=4)
    dense = ground_state(prob, "dense")
    lanczos = ground_state(prob, "iterative")
    assert abs(dense.energy - lanczos.energy) < 1e-10
    np.testing.assert_allclose(density_report(dense).mean_n, density_report(lanczos).mean_n, atol=1e-8)
    assert lanczos.diagnostics["residual"] <= 1e-9


def test_iterative_path_above_dense_limit():
    prob = BoseHubbardProblem(lattice_for(8, 0.01), 0.01, n_phonons=8)
    gs = ground_state(prob)
    assert prob.basis.dimension == 6435
    assert gs.diagnostics["solver"] == "lanczos"
    assert gs.diagnostics["residual"] <= 1e-9
    assert abs(gs.norm() - 1) < 1e-10


def test_ground_state_is_deterministic(fig3_lattice):
    prob = BoseHubbardProblem(fig3_lattice, 0.01, n_phonons=6)
    a = ground_state(prob, "iterative").amplitudes
    b = ground_state(prob, "iterative").amplitudes
    assert np.array_equal(a, b)


def test_fig3_profiles(fig3_lattice):
    points = mott_superfluid_scan(fig3_lattice, [0.0, 0.005, 0.01, 0.02], 6)
    centre = [p.report.mean_n[2] for p in points]
    assert all(a >= b for a, b in zip(centre, centre[1:]))
    assert centre[-1] == pytest.approx(1.0, abs=0.15)


def test_deep_mott_limit(fig3_lattice):
    rep = mott_superfluid_scan(fig3_lattice, [1.0], 6)[0].report
    assert np.max(np.abs(rep.mean_n - 1)) < 1e-3
    assert np.max(rep.var_n) < 1e-2


def test_single_site_density_is_phonon_number():
    lat = lattice_for(1, 0.01)
    for p in mott_superfluid_scan(lat, [0.0, 0.05, 1.0], 3):
        assert p.report.mean_n[0] == pytest.approx(3.0)


def test_scan_threads_do_not_change_results(fig3_lattice):
    a = mott_superfluid_scan(fig3_lattice, [0.0, 0.005, 0.01, 0.02], 6, threads=1)
    b = mott_superfluid_scan(fig3_lattice, [0.0, 0.005, 0.01, 0.02], 6, threads=4)
    for x, y in zip(a, b):
        assert np.array_equal(x.state.amplitudes, y.state.amplitudes)


@pytest.mark.parametrize("mode", ["full", "nn"])
def test_energy_non_decreasing_in_u(mode):
    prob = BoseHubbardProblem(lattice_for(5, 0.02, mode), n_phonons=5)
    energies = [ground_state(prob.with_u(u)).energy for u in np.linspace(0, 0.05, 10)]
    assert all(b >= a for a, b in zip(energies, energies[1:]))


def test_density_mirror_symmetry(fig3_lattice):
    for u in (0.0, 0.007, 0.02):
        mean = density_report(ground_state(BoseHubbardProblem(fig3_lattice, u, n_phonons=6))).mean_n
        assert np.max(np.abs(mean - mean[::-1])) < 1e-8


def test_nearest_neighbour_ground_state_positive_after_staggering():
    prob = BoseHubbardProblem(lattice_for(5, 0.01, "nn"), 0.004, n_phonons=5)
    gs = ground_state(prob)
    sites = np.arange(5)
    stagger = (-1.0) ** (gs.basis.states @ sites)
    amps = stagger * gs.amplitudes
    amps *= np.sign(amps[np.argmax(np.abs(amps))])
    assert np.all(amps > -1e-12)


def test_consistency_is_exact_without_number_changing_terms():
    lat = bare_lattice(np.zeros(4), np.zeros((4, 4)), beta=0.0)
    ref = ground_state(BoseHubbardProblem(lat, 0.02, n_phonons=4))
    res = conserving_full_consistency(BoseHubbardProblem(lat, 0.02, mode=FULL, n_max=1), ref)
    assert res.overlap == pytest.approx(1.0, abs=1e-12)


def test_consistency_at_reference_laser_parameters(small_lattice):
    ref = ground_state(BoseHubbardProblem(small_lattice, 0.02, n_phonons=4))
    res = conserving_full_consistency(
        BoseHubbardProblem(small_lattice, 0.02, mode=FULL, n_max=1, f_eta_sq=0.1), ref)
    assert res.overlap > 0.95
    assert abs(res.history[-1][1] - res.history[-2][1]) < 1e-3
    assert res.n_max >= 6
    assert res.leakage < 1e-3


def test_consistency_falls_with_beta_from_coulomb_terms():
    overlaps = []
    for beta in (0.01, 0.05, 0.1):
        lat = lattice_for(4, beta)
        ref = ground_state(BoseHubbardProblem(lat, 0.02, n_phonons=4))
        res = conserving_full_consistency(BoseHubbardProblem(lat, 0.02, mode=FULL, n_max=1), ref)
        overlaps.append(res.overlap)
    assert overlaps[0] >= overlaps[1] >= overlaps[2]


def test_consistency_needs_full_problem(small_lattice):
    ref = ground_state(BoseHubbardProblem(small_lattice, 0.02, n_phonons=4))
    with pytest.raises(InvalidParameterError):
        conserving_full_consistency(BoseHubbardProblem(small_lattice, 0.02, n_phonons=4), ref)


def test_problem_validation(small_lattice):
    with pytest.raises(InvalidParameterError):
        BoseHubbardProblem(small_lattice, float("inf"), n_phonons=2)
    with pytest.raises(InvalidParameterError):
        BoseHubbardProblem(small_lattice, 0.0)
    with pytest.raises(InvalidParameterError):
        BoseHubbardProblem(small_lattice, 0.0, mode=FULL)


def test_build_basis_is_cached():
    assert build_basis(5, n_phonons=3) is build_basis(5, n_phonons=3)


def test_lattice_from_chain_feeds_problem():
    lat = build_lattice(solve_equilibrium(3), 0.02)
    gs = ground_state(BoseHubbardProblem(lat, 0.0, n_phonons=0))
    assert gs.basis.dimension == 1
    assert gs.energy == 0.0
