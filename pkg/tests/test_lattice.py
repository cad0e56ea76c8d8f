import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phononlab.equilibrium import IonChain, solve_equilibrium
from phononlab.errors import DegenerateGeometryError, InsufficientDataError, InvalidParameterError
from phononlab.lattice import (
    build_lattice,
    confinement_estimate,
    lattice_for,
    lowest_mode_density,
    rms_width,
    single_particle_spectrum,
    trapping_potential,
    width_scaling_exponent,
)


def test_pair_at_mean_spacing_hops_half_beta():
    chain = IonChain(positions=np.array([-0.65, 0.65]), d0=1.3, residual=0.0)
    lat = build_lattice(chain, 0.01)
    assert lat.hopping[0, 1] == pytest.approx(0.005, rel=1e-14)


@pytest.mark.parametrize("n", [2, 3, 17, 50, 101, 200])
@pytest.mark.parametrize("mode", ["full", "nn"])
def test_sum_rule_exact(n, mode):
    lat = lattice_for(n, 0.01, mode)
    assert np.all(lat.onsite + lat.hopping.sum(axis=1) == 0.0)


def test_hopping_structure():
    lat = lattice_for(20, 0.03)
    h = lat.hopping
    assert np.array_equal(h, h.T)
    assert np.all(h >= 0)
    assert np.all(np.diag(h) == 0)
    # everything is O(beta_x)
    assert np.max(np.abs(lat.onsite)) < 10 * lat.beta_x
    assert np.max(h) < 10 * lat.beta_x


def test_three_ion_cubic_law():
    lat = lattice_for(3, 0.01)
    assert lat.hopping[0, 2] / lat.hopping[0, 1] == pytest.approx(1 / 8, rel=1e-12)


def test_nearest_neighbour_mode_keeps_only_adjacent_pairs():
    lat = lattice_for(6, 0.01, "nn")
    i, j = np.nonzero(lat.hopping)
    assert np.all(np.abs(i - j) == 1)


def test_duplicate_positions_rejected():
    chain = IonChain(positions=np.array([0.0, 0.0, 1.0]), d0=0.5, residual=0.0)
    with pytest.raises(DegenerateGeometryError):
        build_lattice(chain, 0.01)


def test_bad_inputs():
    chain = solve_equilibrium(3)
    with pytest.raises(InvalidParameterError):
        build_lattice(chain, 0.0)
    with pytest.raises(InvalidParameterError):
        build_lattice(chain, 0.01, "diagonal")


def test_two_site_spectrum():
    lat = lattice_for(2, 0.01)
    t = lat.hopping[0, 1]
    spec = single_particle_spectrum(lat)
    np.testing.assert_allclose(spec.eigenvalues, [-2 * t, 0.0], atol=1e-15)


@pytest.mark.parametrize("mode", ["full", "nn"])
def test_spectrum_invariants(mode):
    lat = lattice_for(30, 0.02, mode)
    spec = single_particle_spectrum(lat)
    v = spec.eigenvectors
    assert np.max(np.abs(v.T @ v - np.eye(30))) < 1e-10
    assert np.all(np.diff(spec.eigenvalues) >= 0)
    assert abs(spec.eigenvalues.sum() - np.trace(lat.matrix())) < 1e-9


def test_spectrum_translation_invariant():
    chain = solve_equilibrium(12)
    moved = IonChain(positions=chain.positions + 3.7, d0=chain.d0, residual=chain.residual)
    a = single_particle_spectrum(build_lattice(chain, 0.01)).eigenvalues
    b = single_particle_spectrum(build_lattice(moved, 0.01)).eigenvalues
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_fifty_ion_confinement():
    spec = single_particle_spectrum(lattice_for(50, 0.01))
    target = 8 / 50 * 0.01
    assert abs(spec.omega_c_fit - target) <= 0.25 * target
    assert np.std(spec.gaps) / np.mean(spec.gaps) < 0.2


def test_nearest_neighbour_lowest_mode_is_staggered_with_central_envelope():
    lat = lattice_for(40, 0.01, "nn")
    psi = single_particle_spectrum(lat).eigenvectors[:, 0]
    # oracle: dense diagonalization directly on the assembled matrix
    _, vecs = np.linalg.eigh(lat.matrix())
    np.testing.assert_allclose(np.abs(psi), np.abs(vecs[:, 0]), atol=1e-12)
    bulk = np.abs(psi) > 1e-3 * np.abs(psi).max()
    signs = np.sign(psi[bulk])
    assert np.all(signs[1:] == -signs[:-1])
    assert np.argmax(np.abs(psi)) in (19, 20)


def test_confinement_estimate_values():
    est = confinement_estimate(50, 0.01, 3.4, 18)
    assert est == pytest.approx(np.sqrt(61.2) / 50 * 0.01, rel=1e-15)
    assert est == pytest.approx(1.5646e-3, rel=1e-4)
    assert est == pytest.approx(8 / 50 * 0.01, rel=0.03)
    assert confinement_estimate(100, 0.01) == pytest.approx(est / 2, rel=1e-15)
    assert confinement_estimate(50, 0.02) == pytest.approx(2 * est, rel=1e-15)
    with pytest.raises(InvalidParameterError):
        confinement_estimate(50, -0.01)


def test_two_site_mode_density():
    np.testing.assert_allclose(lowest_mode_density(lattice_for(2, 0.01), 2), [1.0, 1.0], atol=1e-12)


@pytest.mark.parametrize("mode", ["full", "nn"])
def test_fifty_ion_mode_density(mode):
    dens = lowest_mode_density(lattice_for(50, 0.01, mode), 50)
    assert abs(dens.sum() - 50) < 1e-10
    assert np.max(np.abs(dens - dens[::-1])) < 1e-8
    peak = int(np.argmax(dens))
    assert peak in (24, 25)
    # bell shape: monotone rise to the centre, negligible at the edges
    assert np.all(np.diff(dens[: peak + 1]) >= -1e-12)
    assert dens[0] < 1e-3 * dens[peak]


def test_mode_density_needs_a_phonon():
    with pytest.raises(InvalidParameterError):
        lowest_mode_density(lattice_for(5, 0.01), 0)


def test_width_scaling_slope():
    slope = width_scaling_exponent([20, 40, 80, 160], 0.01)
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_width_scaling_independent_of_beta():
    a = width_scaling_exponent([20, 40, 80], 0.01)
    b = width_scaling_exponent([20, 40, 80], 0.05)
    assert abs(a - b) < 0.02


def test_width_scaling_rejects_degenerate_inputs():
    with pytest.raises(InsufficientDataError):
        width_scaling_exponent([20, 40], 0.01)
    with pytest.raises(InsufficientDataError):
        width_scaling_exponent([40, 40, 40], 0.01)
    with pytest.raises(InsufficientDataError):
        width_scaling_exponent([10, 40, 80], 0.01)


def test_rms_width_of_point_and_pair():
    assert rms_width(np.array([0.0, 1.0, 0.0])) == 0.0
    assert rms_width(np.array([1.0, 0.0, 1.0])) == pytest.approx(1.0)


def test_trapping_potential_is_lowest_at_centre():
    pot = trapping_potential(lattice_for(50, 0.01))
    assert pot.min() == 0.0
    assert np.argmin(pot) in (24, 25)
    assert pot[0] > pot[12] > pot[24]


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=2, max_value=60), st.floats(min_value=1e-3, max_value=0.2))
def test_both_ranges_give_mirror_symmetric_density(n, beta):
    for mode in ("full", "nn"):
        dens = lowest_mode_density(lattice_for(n, beta, mode), 1)
        assert np.max(np.abs(dens - dens[::-1])) < 1e-8
