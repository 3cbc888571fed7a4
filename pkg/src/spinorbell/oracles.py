"""Independent references: a brute-force Fock-space oracle for two squeezed
pairs, and the closed-form kernels of a uniform condensate.

Fock oracle modes: (up, A), (down, A), (up, B), (down, B).  The pairs
(up A, down B) and (down A, up B) are two-mode squeezed with parameters
r1 and r2.  Every region-local spin bilinear conserves the atom numbers
N_A and N_B, so the state is kept as a dict of blocks
{(N_A, N_B): amplitude[n_upA, n_upB]} and operators act literally on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussian import KIND_COEFFS, DOWN, UP, Bilinear, GaussianState, Region, UnsupportedOperatorError

MODES = ("upA", "dnA", "upB", "dnB")
REGION_A = Region("A", -1.5, -0.5)
REGION_B = Region("B", 0.5, 1.5)
ORACLE_K = np.array([-1.0, 1.0])


class TruncationError(RuntimeError):
    pass


@dataclass
class FockOracle:
    r1: float
    r2: float
    n_cut: int  # per pair: pair occupations 0..n_cut-1
    blocks: dict  # (NA, NB) -> complex array (NA+1, NB+1)
    norm_deficit: float

    @property
    def mean_pairs(self) -> tuple[float, float]:
        return math.sinh(self.r1) ** 2, math.sinh(self.r2) ** 2

    def amplitude(self, n_upA: int, n_dnA: int, n_upB: int, n_dnB: int) -> complex:
        blk = self.blocks.get((n_upA + n_dnA, n_upB + n_dnB))
        if blk is None:
            return 0j
        return complex(blk[n_upA, n_upB])


def _pair_amplitudes(r: float, n_cut: int) -> np.ndarray:
    n = np.arange(n_cut)
    return np.tanh(r) ** n / math.cosh(r)


def _required_cut(r: float, order: int = 8, tol: float = 1e-10) -> int:
    """Smallest cut whose discarded weight, inflated by the largest moment factor, is below tol."""
    x = math.tanh(r) ** 2
    if x == 0:
        return 1
    n = 1
    while x**n * (2 * n + 2) ** order > tol * 1e-2 or x**n > tol:
        n += 1
    return n


def fock_build(r, n_cut: int | None = 24) -> FockOracle:
    """Product of two two-mode squeezed vacua; ``r`` is a scalar or (r1, r2)."""
    r1, r2 = (r, r) if np.isscalar(r) else r
    if r1 < 0 or r2 < 0:
        raise ValueError("squeezing parameters must be non-negative")
    cut = max(n_cut or 1, _required_cut(r1), _required_cut(r2))
    c1, c2 = _pair_amplitudes(r1, cut), _pair_amplitudes(r2, cut)
    deficit = 1.0 - float(np.sum(c1**2) * np.sum(c2**2))
    if deficit > 1e-10:
        raise TruncationError(f"norm deficit {deficit:.2e} at n_cut = {cut}")
    blocks = {}
    for p in range(cut):  # p = n_upA = n_dnB
        for q in range(cut):  # q = n_dnA = n_upB
            N = p + q
            blk = blocks.setdefault((N, N), np.zeros((N + 1, N + 1), complex))
            blk[p, q] = c1[p] * c2[q]
    return FockOracle(r1, r2, cut, blocks, deficit)


def _apply_bilinear(blocks: dict, region: str, coeff: np.ndarray) -> dict:
    """sum_{s,s'} coeff[s, s'] a^dag_s a_s' within one region; block index [n_upA, n_upB]."""
    axis = 0 if region == "A" else 1
    out = {}
    for key, blk in blocks.items():
        n_tot = key[axis]
        src = blk if axis == 0 else blk.T
        n_up = np.arange(n_tot + 1.0)[:, None]
        n_dn = n_tot - n_up
        res = (coeff[UP, UP] * n_up + coeff[DOWN, DOWN] * n_dn) * src
        if coeff[UP, DOWN] != 0:  # n_up -> n_up + 1
            res[1:] += coeff[UP, DOWN] * np.sqrt((n_up[:-1] + 1) * n_dn[:-1]) * src[:-1]
        if coeff[DOWN, UP] != 0:
            res[:-1] += coeff[DOWN, UP] * np.sqrt(n_up[1:] * (n_dn[1:] + 1)) * src[1:]
        out[key] = res if axis == 0 else res.T
    return out


def _resolve(item):
    """(kind, region) or (2x2 coeff, region)."""
    kind, region = item
    if region not in ("A", "B"):
        raise UnsupportedOperatorError(f"unknown oracle mode region {region!r}")
    if isinstance(kind, str):
        if kind not in KIND_COEFFS:
            raise UnsupportedOperatorError(f"unsupported operator {kind!r}")
        return KIND_COEFFS[kind], region
    return np.asarray(kind, complex), region


def fock_moment(oracle: FockOracle, spec) -> complex:
    """<psi| B_1 B_2 ... B_n |psi> by direct application, rightmost factor first."""
    items = [_resolve(item) for item in spec]
    state = oracle.blocks
    for coeff, region in reversed(items):
        state = _apply_bilinear(state, region, coeff)
    return complex(sum(np.vdot(oracle.blocks[k], state[k]) for k in oracle.blocks))


def tmsv_gaussian_state(r) -> GaussianState:
    """The same two squeezed pairs as a 4-mode Gaussian state (k = -1 in A, +1 in B)."""
    r1, r2 = (r, r) if np.isscalar(r) else r
    nk = 2
    G = np.zeros((4, 4), complex)
    M = np.zeros((4, 4), complex)
    upA, upB, dnA, dnB = 0, 1, nk + 0, nk + 1
    for (u, v), rr in (((upA, dnB), r1), ((dnA, upB), r2)):
        n = math.sinh(rr) ** 2
        m = math.sinh(rr) * math.cosh(rr)
        G[u, u] = G[v, v] = n
        M[u, v] = M[v, u] = m
    return GaussianState(ORACLE_K.copy(), G, M, 1.0)


def oracle_bilinear(state: GaussianState, kind, region: str) -> Bilinear:
    coeff, region = _resolve((kind, region))
    reg = REGION_A if region == "A" else REGION_B
    return Bilinear(coeff, state.region_mask(reg), f"{kind}_{region}")


# --- uniform condensate ---------------------------------------------------


@dataclass(frozen=True)
class UniformKernels:
    """Momentum-basis kernels: C diagonal, S connecting k to its pair partner."""

    k: np.ndarray  # FFT-ordered grid momenta
    c_diag: np.ndarray
    s_pair: np.ndarray  # S(k, partner(k))
    partner: np.ndarray  # index of 2 k0 - k on the periodic momentum grid
    omega_sq: np.ndarray  # Bogoliubov frequency squared per k

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.k.size
        C = np.diag(self.c_diag)
        S = np.zeros((n, n), complex)
        S[np.arange(n), self.partner] = self.s_pair
        return C, S

    def symplectic_residual(self) -> float:
        """max | |C|^2 - |S|^2 - 1 | per mode (the kernels are diagonal in pairs)."""
        return float(np.abs(np.abs(self.c_diag) ** 2 - np.abs(self.s_pair) ** 2 - 1).max())


def uniform_bogoliubov(n: float, g1: float, k: np.ndarray, t: float, *, k0: float = 0.0, g0: float = 0.0) -> UniformKernels:
    """Closed-form kernels for phi0 = sqrt(n) exp(i k0 x - i mu t), V = 0.

    In the frame rotating with mu each pair (k, k' = 2 k0 - k) obeys a 2x2
    linear problem with constant coefficients; its exponential is written
    with the complex frequency Omega = sqrt(Delta^2 - (g1 n)^2).
    ``k`` must be the full periodic grid in FFT order with k0 on it.
    """
    k = np.asarray(k, float)
    nk = k.size
    dk = k[1] - k[0] if nk > 1 else 1.0
    kin = (k / np.pi) ** 2
    mu = (k0 / np.pi) ** 2 + g0 * n
    e = kin - (k0 / np.pi) ** 2 + g1 * n
    m_idx = np.rint(k / dk).astype(int)
    m0 = int(round(k0 / dk))
    pos = {int(m) % nk: i for i, m in enumerate(m_idx)}
    partner = np.array([pos[(2 * m0 - int(m)) % nk] for m in m_idx])
    delta = 0.5 * (e + e[partner])
    skew = 0.5 * (e - e[partner])
    kappa = g1 * n
    w2 = delta**2 - kappa**2
    w = np.sqrt(w2.astype(complex))
    wt = w * t
    small = np.abs(wt) < 1e-8
    sinc = np.where(small, t, np.sin(wt) / np.where(small, 1.0, w)).real
    env = np.exp(-1j * (skew + mu) * t)
    c_diag = env * (np.cos(wt).real - 1j * sinc * delta)
    s_pair = env * (-1j * sinc * kappa)
    return UniformKernels(k, c_diag, s_pair, partner, w2)
