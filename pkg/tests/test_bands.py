import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinorbell.bands import (
    BandConvergenceError,
    KRangeError,
    band_hamiltonian,
    bands_table,
    dispersion_at,
    solve_bands,
)


@pytest.fixture(scope="module")
def he_bands(helium):
    return solve_bands(helium)


def test_hamiltonian_hermitian():
    h = band_hamiltonian(np.linspace(-3, 3, 7), 0.725, 6)
    assert np.array_equal(h, np.conj(np.swapaxes(h, 1, 2)))


def test_coefficients_normalized(he_bands):
    norms = np.sum(np.abs(he_bands.coefficients) ** 2, axis=1)
    assert np.abs(norms - 1).max() <= 1e-10


def test_gauge_c0_non_negative(he_bands):
    c0 = he_bands.coefficients[:, he_bands.n_max, :]
    assert np.all(c0 >= -1e-12)  # odd bands at k = 0 have C_0 = 0 up to roundoff


def test_periodic_in_quasimomentum(he_bands):
    per_zone = (he_bands.k.size - 1) // 3
    e = he_bands.energies
    assert np.abs(e[2 * per_zone :] - e[: per_zone + 1]).max() <= 1e-10


def test_even_in_quasimomentum(he_bands):
    assert np.abs(he_bands.energies - he_bands.energies[::-1]).max() <= 1e-10


def test_free_particle_extended_branch():
    bands = solve_bands(depth=0.0, n_max=12, n_bands=4)
    k = bands.k[np.abs(bands.k) < 3 * np.pi]
    e = dispersion_at(bands, k, branch="extended")
    assert np.abs(e - (k / np.pi) ** 2).max() <= 1e-10
    assert dispersion_at(bands, 2.04, branch="extended") == pytest.approx((2.04 / np.pi) ** 2, abs=1e-8)


def test_zone_edge_gap_weak_lattice():
    u0 = 0.1
    bands = solve_bands(depth=u0, n_max=12, n_bands=4)
    i = int(np.argmin(np.abs(bands.k - np.pi)))
    gap = bands.energies[i, 1] - bands.energies[i, 0]
    assert gap == pytest.approx(u0 / 2, rel=0.05)


def test_helium_band_shape(he_bands):
    inside = (he_bands.k > 0) & (he_bands.k < np.pi)
    assert np.all(np.diff(he_bands.energies[inside, 0]) > 0)
    i = int(np.argmin(np.abs(he_bands.k - np.pi)))
    assert he_bands.energies[i, 1] - he_bands.energies[i, 0] > 0.1


@settings(max_examples=25, deadline=None)
@given(depth=st.floats(0, 3), k=st.floats(-np.pi, np.pi), n_max=st.integers(4, 10))
def test_variational_monotonicity(depth, k, n_max):
    lo = np.linalg.eigvalsh(band_hamiltonian(k, depth, n_max))[0][:3]
    hi = np.linalg.eigvalsh(band_hamiltonian(k, depth, n_max + 1))[0][:3]
    assert np.all(hi <= lo + 1e-12)


def test_nodal_values_exact(he_bands):
    for i in (0, 17, 400):
        assert dispersion_at(he_bands, he_bands.k[i]) == he_bands.energies[i, 0]


def test_interpolation_grid_refinement(helium):
    coarse = solve_bands(helium)
    fine = solve_bands(helium, k_points_per_zone=2 * helium.grid.k_points_per_zone)
    q = np.linspace(-3, 3, 301) + 0.0123
    assert np.abs(dispersion_at(coarse, q) - dispersion_at(fine, q)).max() < 1e-6


def test_out_of_span(he_bands):
    with pytest.raises(KRangeError):
        dispersion_at(he_bands, 10.0)


def test_truncation_errors():
    with pytest.raises(ValueError):
        solve_bands(depth=0.5, n_max=5, n_bands=4)
    with pytest.raises(BandConvergenceError):
        solve_bands(depth=200.0, n_max=8, n_bands=4)


def test_table(he_bands):
    header, table = bands_table(he_bands)
    assert header[:2] == ["k_aL", "E0_Erec"]
    assert table.shape == (he_bands.k.size, 1 + he_bands.n_bands)
