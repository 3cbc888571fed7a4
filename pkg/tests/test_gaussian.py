import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import fft as sfft

from conftest import StubParams, UniformProblem
from spinorbell.bogoliubov import BogoliubovKernels, evolve_kernels, to_momentum_basis
from spinorbell.gaussian import (
    DOWN,
    UP,
    GaussianState,
    MomentumRangeError,
    Region,
    Undefined,
    UnsupportedOperatorError,
    bilinear,
    build_state,
    default_regions,
    g2_map,
    g2_regions,
    perfect_pairings,
    rotate_state,
    second_order,
    validate_regions,
    wick_moment,
)
from spinorbell.meanfield import Hamiltonian
from spinorbell.oracles import REGION_A, REGION_B, fock_build, fock_moment, tmsv_gaussian_state, uniform_bogoliubov
from spinorbell.simulation import StateSeries


def kernels_from_momentum(grid, kc, ks):
    """Inverse of to_momentum_basis: position kernels in the stored raw-FFT layout."""
    F = grid.to_momentum(np.eye(grid.n, dtype=complex), axis=0)
    pos_c = F.conj().T @ kc @ F
    pos_s = F.conj().T @ ks @ F.conj()
    return BogoliubovKernels(grid, 1.0, {1: sfft.fft(pos_c, axis=0).T.copy()}, {1: sfft.fft(pos_s, axis=0).T.copy()})


@pytest.fixture(scope="module")
def lattice_state():
    """A generic, inhomogeneous state: uniform condensate quenched into a lattice."""
    p = UniformProblem(n_x=48, length=12.0, g1=-0.08)
    ham = Hamiltonian(p.grid, np.zeros(p.grid.n), 0.725, p.g0)
    for ker in evolve_kernels(p.phi_at, StubParams, ham, [6.0], 0.01, g1=p.g1, symmetric=False):
        pass
    return build_state(ker)


def test_vacuum_from_identity(uniform):
    st_ = build_state(BogoliubovKernels.identity(uniform.grid))
    assert not st_.G.any() and not st_.M.any()
    a, b = Region("A", -2, -1), Region("B", 1, 2)
    assert g2_regions(st_, a, b) is Undefined.EMPTY_REGION
    assert wick_moment(st_, [("N", "A")], {"A": a}) == 0
    assert second_order(st_, (UP, DOWN, DOWN, UP), (st_.k[3], st_.k[5], st_.k[5], st_.k[3])) == 0


def test_uniform_oracle_state():
    p = UniformProblem()
    ref = uniform_bogoliubov(p.n, p.g1, p.grid.k, 5.0, k0=p.k0, g0=p.g0)
    c_ref, s_ref = ref.dense()
    ker = kernels_from_momentum(p.grid, c_ref, s_ref)
    kc, ks = to_momentum_basis(ker)
    assert np.abs(ks - s_ref).max() < 1e-12
    state = build_state(ker)
    order = np.argsort(p.grid.k)  # state momenta ascending
    pos = {int(j): i for i, j in enumerate(order)}
    g = state.block("G", UP, UP)
    m = state.block("M", UP, DOWN)
    for j in range(p.grid.n):
        i, partner = pos[j], pos[int(ref.partner[j])]
        assert g[i, i].real == pytest.approx(abs(ref.s_pair[j]) ** 2, abs=1e-8)
        expected = ref.c_diag[j] * ref.s_pair[ref.partner[j]]
        assert abs(m[i, partner] - expected) < 1e-8


def test_state_invariants(lattice_state):
    chk = lattice_state.check()
    assert chk["ok"], chk
    assert chk["m_symmetric"] <= 1e-9


def test_spin_basis_relations():
    rng = np.random.default_rng(5)
    gp, gm, mp, mm = (rng.standard_normal((3, 3)) for _ in range(4))
    s = GaussianState.from_sectors(np.arange(3.0), gp, mp, gm, mm)
    assert np.array_equal(s.block("G", UP, UP), 0.5 * (gp + gm))
    assert np.array_equal(s.block("G", UP, DOWN), 0.5 * (gp - gm))
    assert np.array_equal(s.block("M", DOWN, UP), 0.5 * (mp - mm))


def test_spin_population_symmetry(lattice_state):
    up = np.trace(lattice_state.block("G", UP, UP)).real
    dn = np.trace(lattice_state.block("G", DOWN, DOWN)).real
    assert up > 0 and abs(up - dn) <= 1e-9 * up


@pytest.mark.parametrize("kind", ["Jz", "Jx", "Jy", "N", "J0"])
def test_hermitian_moments_real(lattice_state, kind):
    a, b = Region("A", -3, -0.5), Region("B", 0.5, 3)
    regs = {"A": a, "B": b}
    for spec in ([(kind, "A"), (kind, "B")], [(kind, "A"), (kind, "A")], [(kind, "B")]):
        v = wick_moment(lattice_state, spec, regs)
        assert abs(v.imag) <= 1e-10 * max(abs(v), 1e-300)


def test_second_order_against_fock():
    r = 0.6
    state, oracle = tmsv_gaussian_state(r), fock_build(r)
    value = second_order(state, (UP, DOWN, DOWN, UP), (-1.0, 1.0, 1.0, -1.0))
    n = state.G[0, 0].real
    assert value == pytest.approx(abs(state.M[0, 3]) ** 2 + n * n, abs=1e-12)
    assert value.real == pytest.approx(fock_moment(oracle, [("Nup", "A"), ("Ndn", "B")]).real, abs=1e-10)


def test_second_order_off_grid():
    with pytest.raises(MomentumRangeError):
        second_order(tmsv_gaussian_state(0.3), (UP, UP, UP, UP), (0.0, 1.0, 1.0, 0.0))


def test_local_bunching():
    state = tmsv_gaussian_state(0.7)
    ks, g2 = g2_map(state, -1.0, UP, UP)
    assert g2[list(ks).index(-1.0)] == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("n", [0.05, 0.1, 0.5, 1.0])
def test_tmsv_g2(n):
    state = tmsv_gaussian_state(math.asinh(math.sqrt(n)))
    assert g2_regions(state, REGION_A, REGION_B) == pytest.approx(2 + 1 / n, rel=1e-8)


def test_quartic_against_fock():
    r = 0.8
    state, oracle = tmsv_gaussian_state(r), fock_build(r)
    regs = {"A": REGION_A, "B": REGION_B}
    spec = [("Jp", "A"), ("Jm", "A"), ("Jp", "B"), ("Jm", "B")]
    w = wick_moment(state, spec, regs)
    f = fock_moment(oracle, spec)
    assert abs(w - f) <= 1e-8 * abs(f)


def test_unsupported_operator():
    state = tmsv_gaussian_state(0.2)
    with pytest.raises(UnsupportedOperatorError):
        wick_moment(state, [("Jq", "A")], {"A": REGION_A})
    with pytest.raises(UnsupportedOperatorError):
        wick_moment(state, [("Jz", "C")], {"A": REGION_A})


def test_pairing_counts():
    assert [len(perfect_pairings(n)) for n in (2, 4, 6, 8)] == [1, 3, 15, 105]


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(-6.3, 6.3))
def test_rotation_preserves_number(theta):
    state = tmsv_gaussian_state((0.4, 0.7))
    rot = rotate_state(state, REGION_A, theta)
    regs = {"A": REGION_A, "B": REGION_B}
    for spec in ([("N", "A")], [("N", "A"), ("N", "B")]):
        assert wick_moment(rot, spec, regs) == pytest.approx(wick_moment(state, spec, regs), rel=1e-12)


def test_zero_rotation_is_identity():
    state = tmsv_gaussian_state(0.4)
    rot = rotate_state(state, REGION_A, 0.0)
    assert np.array_equal(rot.G, state.G) and np.array_equal(rot.M, state.M)


def test_region_rules():
    with pytest.raises(ValueError):
        Region("A", 1.0, 0.0)
    with pytest.raises(ValueError, match="overlap"):
        validate_regions(Region("A", -1, 0.5), Region("B", 0, 1), 2.04)
    with pytest.raises(ValueError):
        validate_regions(Region("A", -4.5, -4.0), Region("B", 0.5, 1.0), 2.04)  # holds 2.04 - 2 pi
    a, b = default_regions(0.686, -2.885)
    assert a.k_lo < -2.885 < a.k_hi and b.k_lo < 0.686 < b.k_hi
    assert a.k_hi - a.k_lo == pytest.approx(0.5 * (0.686 + 2.885))
    assert Region.parse("A", "-3.2,-2.5") == Region("A", -3.2, -2.5)


# --- properties of the full helium run ---------------------------------------


@pytest.fixture(scope="module")
def helium_state(helium_run):
    series = StateSeries.load(helium_run / "evolve.bin")
    return series.state(series.index_of(0.7e-3)), series


@pytest.fixture(scope="module")
def helium_regions(helium):
    return default_regions(0.6797, -2.8829, helium.grid.region_halfwidth)


def test_helium_cross_region_coherence(helium_state, helium_regions):
    state, _ = helium_state
    a, b = helium_regions
    nk = state.n_k
    ia, ib = np.flatnonzero(a.contains(state.k)), np.flatnonzero(b.contains(state.k))
    diag = np.abs(np.diag(state.G)).max()
    for s1 in (UP, DOWN):
        for s2 in (UP, DOWN):
            assert np.abs(state.G[np.ix_(s1 * nk + ia, s2 * nk + ib)]).max() <= 1e-6 * diag


def test_helium_jzjz_equals_anomalous_sum(helium_state, helium_regions):
    state, series = helium_state
    a, b = helium_regions
    regs = {"A": a, "B": b}
    zz = wick_moment(state, [("Jz", "A"), ("Jz", "B")], regs).real
    i = series.index_of(0.7e-3)
    mask_a, mask_b = a.contains(series.k), b.contains(series.k)
    m_minus = -series.m_plus[i] if series.m_minus is None else series.m_minus[i]
    direct = -0.5 * np.sum(np.abs(m_minus[np.ix_(mask_a, mask_b)]) ** 2)
    assert zz == pytest.approx(direct, rel=1e-10)


def test_helium_appendix_identities(helium_state, helium_regions):
    state, _ = helium_state
    regs = dict(zip("AB", helium_regions))
    zz = wick_moment(state, [("Jz", "A"), ("Jz", "B")], regs).real
    xx = wick_moment(state, [("Jx", "A"), ("Jx", "B")], regs).real
    xz = wick_moment(state, [("Jx", "A"), ("Jz", "B")], regs)
    zx = wick_moment(state, [("Jz", "A"), ("Jx", "B")], regs)
    assert xx == pytest.approx(-zz, rel=1e-10)
    assert abs(xz) <= 1e-10 * abs(zz) and abs(zx) <= 1e-10 * abs(zz)


def test_helium_g2_above_threshold(helium_state, helium_regions):
    state, _ = helium_state
    assert g2_regions(state, *helium_regions) > 2 * math.sqrt(2) + 3


def test_helium_density_peaks(helium_state):
    state, _ = helium_state
    rho = state.density(UP)
    for target in (0.686, -2.885):
        window = np.abs(state.k - target) < 0.6
        assert state.k[window][np.argmax(rho[window])] == pytest.approx(target, abs=0.1)
