"""Bell correlation, CHSH optimization, Hillery-Zubairy coefficient and QFI."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .gaussian import (
    Bilinear,
    GaussianState,
    Region,
    Undefined,
    bilinear,
    g2_regions,
    rotate_state,
    wick_moment,
)

SQRT2 = math.sqrt(2.0)
G2_THRESHOLD = 2 * SQRT2 + 3


def _pair(state, kind_a, a, kind_b, b) -> complex:
    return wick_moment(state, [bilinear(state, kind_a, a), bilinear(state, kind_b, b)])


def _populated(state: GaussianState, a: Region, b: Region) -> bool:
    return bool(state.region_mask(a).any() and state.region_mask(b).any())


def correlation_moments(state: GaussianState, a: Region, b: Region) -> dict:
    """The four <J_i^A J_j^B> (i, j in z, x) and <N_A N_B> with the 1/2-normalized N."""
    out = {f"{i}{j}": _pair(state, "J" + i, a, "J" + j, b).real for i in "zx" for j in "zx"}
    out["NN"] = _pair(state, "J0", a, "J0", b).real
    return out


@dataclass(frozen=True)
class BellCorrelation:
    value: float  # explicit mode rotation
    analytic: float  # ratio * cos(theta + phi)

    @property
    def agrees(self) -> bool:
        return abs(self.value - self.analytic) <= 1e-8


def bell_correlation(state: GaussianState, a: Region, b: Region, theta: float, phi: float, axis: str = "y"):
    """E(theta, phi) by rotating the region modes and re-evaluating <J_z^A J_z^B>/<N_A N_B>."""
    if not _populated(state, a, b):
        return Undefined.EMPTY_REGION
    nn = _pair(state, "J0", a, "J0", b).real
    if nn <= 0:
        return Undefined.EMPTY_REGION
    ratio = _pair(state, "Jz", a, "Jz", b).real / nn
    rotated = rotate_state(rotate_state(state, a, theta, axis), b, phi, axis)
    value = _pair(rotated, "Jz", a, "Jz", b).real / nn
    return BellCorrelation(value, ratio * math.cos(theta + phi))


def correlation_grid(moments: dict, thetas, phis) -> np.ndarray:
    """E on a grid from the four moments; J_z(t) = cos t J_z + sin t J_x is bilinear in them."""
    ct, st = np.cos(thetas)[:, None], np.sin(thetas)[:, None]
    cp, sp = np.cos(phis)[None, :], np.sin(phis)[None, :]
    m = moments
    num = m["zz"] * ct * cp + m["zx"] * ct * sp + m["xz"] * st * cp + m["xx"] * st * sp
    return num / m["NN"]


@dataclass(frozen=True)
class BellMax:
    direct: float  # 2 sqrt2 |<JzJz>| / <NN>
    from_g2: float  # 2 sqrt2 (g2 - 1)/(g2 + 1)
    g2: float

    @property
    def agrees(self) -> bool:
        return abs(self.direct - self.from_g2) <= 1e-9


def bell_from_g2(g2: float) -> float:
    return 2 * SQRT2 * (g2 - 1) / (g2 + 1)


def bell_max(state: GaussianState, a: Region, b: Region):
    if not _populated(state, a, b):
        return Undefined.EMPTY_REGION
    nn = _pair(state, "J0", a, "J0", b).real
    g2 = g2_regions(state, a, b, reduced=True)
    if nn <= 0 or isinstance(g2, Undefined):
        return Undefined.EMPTY_REGION
    zz = _pair(state, "Jz", a, "Jz", b).real
    return BellMax(2 * SQRT2 * abs(zz) / nn, bell_from_g2(g2), g2)


def chsh_over_angles(e_func, n_angles: int = 128):
    """Exhaustive grid maximum of |E(t,p) + E(t',p') + E(t',p) - E(t,p')|.

    ``e_func(thetas, phis)`` returns E on the outer grid.  For fixed (t, t')
    the phi and phi' terms separate, so the exact grid optimum costs O(n^3).
    Returns (theta, theta', phi, phi', B).
    """
    ang = 2 * np.pi * np.arange(n_angles) / n_angles
    E = np.asarray(e_func(ang, ang), float)
    best = (-1.0, 0, 0, 0, 0)
    for i in range(n_angles):
        s = E[i][None, :] + E  # E(t, p) + E(t', p), rows t'
        d = E - E[i][None, :]  # E(t', p') - E(t, p')
        for sign in (1, -1):
            ps, pd = (s.argmax(1), d.argmax(1)) if sign > 0 else (s.argmin(1), d.argmin(1))
            tot = s[np.arange(n_angles), ps] + d[np.arange(n_angles), pd]
            j = int(np.argmax(sign * tot))
            val = abs(tot[j])
            if val > best[0]:
                best = (val, i, j, int(ps[j]), int(pd[j]))
    val, i, j, p, q = best
    return float(ang[i]), float(ang[j]), float(ang[p]), float(ang[q]), float(val)


def chsh_search(state: GaussianState, a: Region, b: Region, n_angles: int = 128):
    m = correlation_moments(state, a, b)
    if m["NN"] <= 0:
        return Undefined.EMPTY_REGION
    return chsh_over_angles(lambda t, p: correlation_grid(m, t, p), n_angles)


def hillery_zubairy(state: GaussianState, a: Region, b: Region):
    """1 + [<J+A J-A J+B J-B> - |<J+A J-A>|^2] / (2 min[<JzA J+B J-B>, <J+A J-A JzB>])."""
    if not _populated(state, a, b):
        return Undefined.ZERO_DENOMINATOR
    jpa, jma = bilinear(state, "Jp", a), bilinear(state, "Jm", a)
    jpb, jmb = bilinear(state, "Jp", b), bilinear(state, "Jm", b)
    jza, jzb = bilinear(state, "Jz", a), bilinear(state, "Jz", b)
    four = wick_moment(state, [jpa, jma, jpb, jmb]).real
    local = abs(wick_moment(state, [jpa, jma])) ** 2
    d1 = wick_moment(state, [jza, jpb, jmb]).real
    d2 = wick_moment(state, [jpa, jma, jzb]).real
    den = 2 * min(d1, d2)
    if den == 0 or abs(den) < 1e-300:
        return Undefined.ZERO_DENOMINATOR
    return 1 + (four - local) / den


@dataclass(frozen=True)
class QFIResult:
    fq: float
    shot_noise: float  # <N_A + N_B>, total atom number in the regions

    @property
    def ratio(self):
        return self.fq / self.shot_noise if self.shot_noise > 0 else Undefined.ZERO_DENOMINATOR


def qfi(state: GaussianState, a: Region, b: Region) -> QFIResult:
    """F_q = 4 Var(J_z^A - J_z^B)."""
    jz = Bilinear(bilinear(state, "Jz", a).coeff, state.region_mask(a) - state.region_mask(b), "Jz_A-Jz_B")
    second = wick_moment(state, [jz, jz]).real
    first = wick_moment(state, [jz]).real
    n_tot = wick_moment(state, [Bilinear(np.eye(2, dtype=complex), state.region_mask(a) + state.region_mask(b))]).real
    return QFIResult(max(0.0, 4 * (second - first**2)), n_tot)


@dataclass
class MetricsSample:
    t: float  # s
    b_max: float | Undefined
    b_max_g2: float | Undefined
    g2: float | Undefined
    e_hz: float | Undefined
    fq: float
    n_a: float
    n_b: float
    chsh: float | Undefined = Undefined.EMPTY_REGION
    e_grid: np.ndarray | None = field(default=None, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("e_grid")
        fq_ratio = self.fq / (self.n_a + self.n_b) if self.n_a + self.n_b > 0 else Undefined.ZERO_DENOMINATOR
        d["fq_over_n"] = fq_ratio
        d["b_over_2"] = self.b_max / 2 if isinstance(self.b_max, float) else self.b_max
        d["inv_2ehz"] = 1 / (2 * self.e_hz) if isinstance(self.e_hz, float) and self.e_hz != 0 else Undefined.ZERO_DENOMINATOR
        return d


def compute_metrics(state: GaussianState, a: Region, b: Region, t_seconds: float, grid_angles: int = 16, chsh_angles: int = 128) -> MetricsSample:
    n_a = wick_moment(state, [bilinear(state, "N", a)]).real
    n_b = wick_moment(state, [bilinear(state, "N", b)]).real
    bm = bell_max(state, a, b)
    q = qfi(state, a, b)
    hz = hillery_zubairy(state, a, b)
    if isinstance(bm, Undefined):
        return MetricsSample(t_seconds, bm, bm, bm, hz, q.fq, n_a, n_b)
    m = correlation_moments(state, a, b)
    ang = 2 * np.pi * np.arange(grid_angles) / grid_angles
    chsh = chsh_over_angles(lambda t, p: correlation_grid(m, t, p), chsh_angles)[-1]
    return MetricsSample(
        t_seconds, bm.direct, bm.from_g2, bm.g2, hz, q.fq, n_a, n_b, chsh, correlation_grid(m, ang, ang)
    )


def synthetic_state(g2: float, n: float = 0.01) -> GaussianState:
    """Two-region state with per-mode occupation n and |M|^2 = (g2 - 1) n^2 in both spin pairings."""
    lam = (g2 - 1) * n / (n + 1)  # |M|^2 = lam n (n + 1)
    if not 0 <= lam <= 1:
        raise ValueError("requested g2 is not a physical Gaussian state at this occupation")
    m = math.sqrt(lam * n * (n + 1))
    G = np.diag([n, n, n, n]).astype(complex)
    M = np.zeros((4, 4), complex)
    for u, v in ((0, 3), (2, 1)):  # (up A, down B), (down A, up B)
        M[u, v] = M[v, u] = m
    return GaussianState(np.array([-1.0, 1.0]), G, M, 1.0)
