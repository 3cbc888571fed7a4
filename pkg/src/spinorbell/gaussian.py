"""Gaussian (quasi-free) states of the spin-flip fields and their moments.

Modes are labelled (spin, k) with spin 0 = up, 1 = down; index = spin * K + i
for the K momenta ``k``.  ``G[u, v] = <a_u^dagger a_v>`` and
``M[u, v] = <a_u a_v>`` for mode-normalized operators a, so the region
integral  int_alpha dk/2pi delta^dagger(k) delta(k)  is the plain sum over
the region's modes.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

UP, DOWN = 0, 1
SPIN_SIGN = {UP: 1, DOWN: -1}


class Undefined(enum.Enum):
    """Distinguished non-numeric result (never NaN)."""

    EMPTY_REGION = "empty-region"
    ZERO_DENOMINATOR = "zero-denominator"

    def __str__(self):
        return self.value


class MomentumRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    label: str
    k_lo: float
    k_hi: float

    def __post_init__(self):
        if not self.k_lo < self.k_hi:
            raise ValueError(f"region {self.label}: k_lo must be below k_hi")

    def contains(self, k) -> np.ndarray:
        k = np.asarray(k)
        return (k >= self.k_lo) & (k <= self.k_hi)

    @classmethod
    def parse(cls, label: str, text: str) -> "Region":
        lo, hi = (float(v) for v in text.replace(":", ",").split(","))
        return cls(label, lo, hi)


def validate_regions(a: Region, b: Region, k0: float, kmax: float = 50.0):
    """A and B disjoint, neither containing k0 or its lattice translates."""
    if a.k_lo <= b.k_hi and b.k_lo <= a.k_hi:
        raise ValueError("regions A and B overlap")
    for reg in (a, b):
        for m in range(-int(kmax), int(kmax) + 1):
            if reg.contains(k0 + 2 * np.pi * m):
                raise ValueError(f"region {reg.label} contains a condensate copy at {k0 + 2 * np.pi * m:.4f}")


def default_regions(k1: float, k2: float, halfwidth: float = 0.25) -> tuple[Region, Region]:
    """Windows around the resonant pair; A is the negative-momentum cloud."""
    w = halfwidth * abs(k1 - k2)
    lo, hi = sorted((k1, k2))
    return Region("A", lo - w, lo + w), Region("B", hi - w, hi + w)


@dataclass(frozen=True)
class GaussianState:
    k: np.ndarray  # (K,) ascending, 1/a_L
    G: np.ndarray  # (2K, 2K)
    M: np.ndarray  # (2K, 2K)
    dk: float = 1.0
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_k(self) -> int:
        return self.k.size

    @classmethod
    def vacuum(cls, k, dk: float = 1.0) -> "GaussianState":
        n = 2 * len(k)
        return cls(np.asarray(k, float), np.zeros((n, n), complex), np.zeros((n, n), complex), dk)

    @classmethod
    def from_sectors(cls, k, g_plus, m_plus, g_minus=None, m_minus=None, *, dk=1.0, t=0.0, meta=None):
        """Spin basis from the decoupled +/- sectors: X_ss' = (X_+ + s s' X_-)/2."""
        if g_minus is None:
            g_minus, m_minus = g_plus, -m_plus
        nk = len(k)
        G = np.zeros((2 * nk, 2 * nk), complex)
        M = np.zeros_like(G)
        for s1, s2 in itertools.product((UP, DOWN), repeat=2):
            sign = SPIN_SIGN[s1] * SPIN_SIGN[s2]
            blk = np.s_[s1 * nk : (s1 + 1) * nk, s2 * nk : (s2 + 1) * nk]
            G[blk] = 0.5 * (g_plus + sign * g_minus)
            M[blk] = 0.5 * (m_plus + sign * m_minus)
        return cls(np.asarray(k, float), G, M, dk, t, dict(meta or {}))

    def block(self, mat: str, s1: int, s2: int) -> np.ndarray:
        nk = self.n_k
        x = self.G if mat == "G" else self.M
        return x[s1 * nk : (s1 + 1) * nk, s2 * nk : (s2 + 1) * nk]

    def index(self, k: float) -> int:
        i = int(np.argmin(np.abs(self.k - k)))
        if abs(self.k[i] - k) > 1e-9 * max(1.0, abs(k)) + 1e-6 * self.dk:
            raise MomentumRangeError(f"k = {k} is not on the momentum grid")
        return i

    def region_mask(self, region: Region) -> np.ndarray:
        return region.contains(self.k).astype(float)

    def density(self, spin: int = UP) -> np.ndarray:
        """rho(k) = <delta^dagger delta> per unit k, in atoms * a_L."""
        return np.real(np.diag(self.block("G", spin, spin))) / self.dk

    def check(self, tol: float = 1e-9) -> dict:
        g_herm = float(np.abs(self.G - self.G.conj().T).max(initial=0.0))
        m_sym = float(np.abs(self.M - self.M.T).max(initial=0.0))
        trace = float(np.real(np.trace(self.G)))
        min_eig = float(np.linalg.eigvalsh(0.5 * (self.G + self.G.conj().T)).min()) if self.G.size else 0.0
        return {
            "g_hermitian": g_herm,
            "m_symmetric": m_sym,
            "min_eig": min_eig,
            "ok": g_herm <= tol * max(1.0, trace) and m_sym <= tol and min_eig >= -tol * max(trace, 1.0),
        }


def window_rows(grid, kmax: float | None = None) -> np.ndarray:
    """FFT indices of the grid momenta sorted ascending, optionally |k| <= kmax."""
    order = np.argsort(grid.k, kind="stable")
    if kmax is not None:
        order = order[np.abs(grid.k[order]) <= kmax + 1e-12]
    return order


def sector_matrices(kernels, sec: int, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """G_s = conj(A_S) A_S^T and M_s = A_C A_S^T on the given momentum rows."""
    kc, ks = kernels.momentum_rows(sec, rows)
    return ks.conj() @ ks.T, kc @ ks.T


def build_state(kernels, kmax: float | None = None) -> GaussianState:
    """Gaussian state of both sectors, combined into the spin basis."""
    rows = window_rows(kernels.grid, kmax)
    g_p, m_p = sector_matrices(kernels, 1, rows)
    g_m, m_m = sector_matrices(kernels, -1, rows)
    return GaussianState.from_sectors(kernels.grid.k[rows], g_p, m_p, g_m, m_m, dk=kernels.grid.dk, t=kernels.t)


def second_order(state: GaussianState, spins, momenta) -> complex:
    """<d1^dag d2^dag d3 d4> = M*_12 M_34 + G_13 G_24 + G_14 G_23."""
    nk = state.n_k
    u = [s * nk + state.index(k) for s, k in zip(spins, momenta)]
    G, M = state.G, state.M
    return complex(np.conj(M[u[0], u[1]]) * M[u[2], u[3]] + G[u[0], u[2]] * G[u[1], u[3]] + G[u[0], u[3]] * G[u[1], u[2]])


def g2_regions(state: GaussianState, a: Region, b: Region, reduced: bool = False):
    """Back-to-back cross-spin correlation between regions.

    Full form: sum_{k in A, p in B} G2_{up,dn,dn,up}(k,p,p,k) / sum G_upup(k,k) G_dndn(p,p).
    ``reduced=True`` drops the cross-region first-order term, giving 1 + sum|M|^2 / sum GG.
    """
    ia = np.flatnonzero(a.contains(state.k))
    ib = np.flatnonzero(b.contains(state.k))
    if ia.size == 0 or ib.size == 0:
        return Undefined.EMPTY_REGION
    nk = state.n_k
    up_a, dn_b = ia, nk + ib
    n_up = np.real(np.diag(state.G))[up_a]
    n_dn = np.real(np.diag(state.G))[dn_b]
    denom = float(n_up.sum() * n_dn.sum())
    if denom <= 0:
        return Undefined.EMPTY_REGION
    m2 = float(np.sum(np.abs(state.M[np.ix_(up_a, dn_b)]) ** 2))
    value = 1.0 + m2 / denom
    if not reduced:
        value += float(np.sum(np.abs(state.G[np.ix_(up_a, dn_b)]) ** 2)) / denom
    return value


def g2_map(state: GaussianState, k_ref: float, s_ref: int = UP, s_other: int = DOWN) -> tuple[np.ndarray, np.ndarray]:
    """g2(k, k_ref) = G2_{s_other, s_ref, s_ref, s_other}(k, k_ref, k_ref, k) / (n(k) n(k_ref))."""
    nk = state.n_k
    j = s_ref * nk + state.index(k_ref)
    u = s_other * nk + np.arange(nk)
    G, M = state.G, state.M
    num = np.abs(M[u, j]) ** 2 + np.real(G[u, u] * G[j, j]) + np.abs(G[u, j]) ** 2
    den = np.real(G[u, u]) * np.real(G[j, j])
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    return state.k.copy(), np.real(g2)


# --- spin bilinears and Wick moments --------------------------------------

_HALF = 0.5
KIND_COEFFS = {
    "Jx": np.array([[0, _HALF], [_HALF, 0]], complex),
    "Jy": np.array([[0, -0.5j], [0.5j, 0]], complex),
    "Jz": np.array([[_HALF, 0], [0, -_HALF]], complex),
    "Jp": np.array([[0, 1], [0, 0]], complex),
    "Jm": np.array([[0, 0], [1, 0]], complex),
    "J0": np.array([[_HALF, 0], [0, _HALF]], complex),  # N_alpha with the 1/2 of the collective-spin convention
    "N": np.eye(2, dtype=complex),  # atom number
    "Nup": np.array([[1, 0], [0, 0]], complex),
    "Ndn": np.array([[0, 0], [0, 1]], complex),
}


class UnsupportedOperatorError(ValueError):
    pass


@dataclass(frozen=True)
class Bilinear:
    """sum_k w(k) sum_{s,s'} coeff[s, s'] a^dag_{s,k} a_{s',k} with real weights w."""

    coeff: np.ndarray
    weights: np.ndarray  # over the state's momenta
    name: str = ""

    def __add__(self, other: "Bilinear") -> "Bilinear":
        if np.array_equal(self.coeff, other.coeff):
            return Bilinear(self.coeff, self.weights + other.weights, f"{self.name}+{other.name}")
        raise ValueError("can only add bilinears with equal spin coefficients")

    def scaled(self, factor: float) -> "Bilinear":
        return Bilinear(self.coeff, factor * self.weights, f"{factor}*{self.name}")

    def rotated(self, theta: float, axis: str = "y") -> "Bilinear":
        """Heisenberg-picture spin rotation R^T c R; for Jz and axis y gives cos Jz + sin Jx."""
        R = spin_rotation(theta, axis)
        return Bilinear(R.conj().T @ self.coeff @ R, self.weights, f"{self.name}({theta:.4g})")


def spin_rotation(theta: float, axis: str = "y") -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if axis == "y":
        return np.array([[c, s], [-s, c]], complex)
    if axis == "x":
        return np.array([[c, 1j * s], [1j * s, c]], complex)
    raise ValueError(f"unknown rotation axis {axis!r}")


def bilinear(state: GaussianState, kind: str, region: Region | None) -> Bilinear:
    if kind not in KIND_COEFFS:
        raise UnsupportedOperatorError(f"unsupported operator {kind!r}")
    w = np.ones(state.n_k) if region is None else state.region_mask(region)
    return Bilinear(KIND_COEFFS[kind], w, f"{kind}_{region.label if region else 'all'}")


def parse_spec(state: GaussianState, spec, regions: dict) -> list[Bilinear]:
    """Spec items are Bilinear objects or (kind, region-label) pairs."""
    out = []
    for item in spec:
        if isinstance(item, Bilinear):
            out.append(item)
        else:
            kind, label = item
            if label not in regions:
                raise UnsupportedOperatorError(f"unknown region {label!r}")
            out.append(bilinear(state, kind, regions[label]))
    return out


@lru_cache(maxsize=None)
def perfect_pairings(n: int) -> tuple:
    """All perfect matchings of range(n) as tuples of (i, j), i < j."""
    if n == 0:
        return ((),)
    out = []
    first = 0
    for j in range(1, n):
        rest = [x for x in range(1, n) if x != j]
        for sub in perfect_pairings(len(rest)):
            out.append(((first, j),) + tuple((rest[a], rest[b]) for a, b in sub))
    return tuple(out)


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


@lru_cache(maxsize=None)
def _trace_program(n_factors: int) -> tuple:
    """Einsum subscripts for each pairing of the 2n ordered operators.

    Operator 2f is a^dag with spin letter s_f, 2f+1 is a with spin t_f; both
    share the momentum letter m_f of factor f.
    """
    spin = [_LETTERS[2 * f + (o % 2)] for f in range(n_factors) for o in (0, 1)]
    mom = [_LETTERS[26 + f] for f in range(n_factors)]
    coeff_terms = [f"{spin[2 * f]}{spin[2 * f + 1]}" for f in range(n_factors)]
    weight_terms = list(mom)
    programs = []
    for pairing in perfect_pairings(2 * n_factors):
        terms, kinds = [], []
        for i, j in pairing:
            terms.append(f"{spin[i]}{mom[i // 2]}{spin[j]}{mom[j // 2]}")
            kinds.append((i, j, i % 2, j % 2))
        subs = ",".join(coeff_terms + weight_terms + terms) + "->"
        programs.append((subs, tuple(kinds)))
    return tuple(programs)


def _contraction(state: GaussianState, ti: int, tj: int, sup_i: np.ndarray, sup_j: np.ndarray) -> np.ndarray:
    """<X_i X_j> for i before j, as a (2, Ki, 2, Kj) tensor on the factor supports."""
    nk = state.n_k
    G4 = state.G.reshape(2, nk, 2, nk)
    M4 = state.M.reshape(2, nk, 2, nk)
    ix = np.ix_(range(2), sup_i, range(2), sup_j)
    if (ti, tj) == (0, 1):  # a^dag_u a_v
        return G4[ix]
    if (ti, tj) == (1, 1):  # a_u a_v
        return M4[ix]
    if (ti, tj) == (0, 0):  # a^dag_u a^dag_v = conj(M[v, u])
        return np.conj(M4.transpose(2, 3, 0, 1)[ix])
    # a_u a^dag_v = delta_uv + G[v, u]
    out = G4.transpose(2, 3, 0, 1)[ix].copy()
    same = sup_i[:, None] == sup_j[None, :]
    for s in range(2):
        out[s, :, s, :] += same
    return out


def wick_moment(state: GaussianState, factors, regions: dict | None = None) -> complex:
    """<B_1 B_2 ... B_n> for an ordered product of spin bilinears (n <= 4 typical).

    Sum over all perfect pairings of the 2n ladder operators in their given
    order, each contraction being the two-point function of that ordered pair.
    """
    factors = parse_spec(state, factors, regions or {})
    n = len(factors)
    if n == 0:
        return 1.0 + 0j
    if n > 13:
        raise UnsupportedOperatorError("too many factors")
    supports = [np.flatnonzero(f.weights) for f in factors]
    if any(s.size == 0 for s in supports):
        return 0j
    coeffs = [f.coeff for f in factors]
    weights = [f.weights[s] for f, s in zip(factors, supports)]
    total = 0j
    for subs, kinds in _trace_program(n):
        ops = [_contraction(state, ti, tj, supports[i // 2], supports[j // 2]) for i, j, ti, tj in kinds]
        total += np.einsum(subs, *coeffs, *weights, *ops, optimize=_path(subs, n, tuple(s.size for s in supports)))
    return complex(total)


_PATHS: dict = {}


def _path(subs: str, n: int, sizes: tuple):
    key = (subs, sizes)
    if key not in _PATHS:
        shapes = [(2, 2)] * n + [(s,) for s in sizes]
        terms = subs[:-2].split(",")[2 * n :]
        letter_size = {}
        for f, s in enumerate(sizes):
            letter_size[_LETTERS[26 + f]] = s
        for t in terms:
            shapes.append(tuple(2 if ch in _LETTERS[:26] else letter_size[ch] for ch in t))
        dummies = [np.empty(sh, dtype=complex) for sh in shapes]
        _PATHS[key] = np.einsum_path(subs, *dummies, optimize="greedy")[0]
    return _PATHS[key]


def rotate_state(state: GaussianState, region: Region, theta: float, axis: str = "y") -> GaussianState:
    """Apply the 2x2 spin rotation a_k -> R a_k to every mode of ``region``.

    Equivalent to G' = conj(W) G W^T and M' = W M W^T with W block-diagonal,
    but touching only the rows and columns of the region's modes.
    """
    nk = state.n_k
    R = spin_rotation(theta, axis)
    idx = np.flatnonzero(state.region_mask(region))
    up, dn = idx, nk + idx

    def mix(X, r, left: bool):
        a, b = (X[up], X[dn]) if left else (X[:, up], X[:, dn])
        new_up, new_dn = r[0, 0] * a + r[0, 1] * b, r[1, 0] * a + r[1, 1] * b
        if left:
            X[up], X[dn] = new_up, new_dn
        else:
            X[:, up], X[:, dn] = new_up, new_dn

    G, M = state.G.copy(), state.M.copy()
    mix(G, R.conj(), True)
    mix(G, R, False)
    mix(M, R, True)
    mix(M, R, False)
    return GaussianState(state.k, G, M, state.dk, state.t, dict(state.meta))
