"""Bloch bands of the 1D lattice U0 sin^2(pi z / a_L) by plane-wave expansion.

Units: k in 1/a_L (zone edge at pi), energies in E_rec, so the free
dispersion is (k / pi)^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .config import PhysicalParams

ZONES = 3  # the k grid spans [-3 pi, 3 pi]


class BandConvergenceError(RuntimeError):
    pass


class KRangeError(ValueError):
    pass


def band_hamiltonian(k, depth: float, n_max: int) -> np.ndarray:
    """Plane-wave Hamiltonian(s) for quasi-momentum k (scalar or array).

    sin^2 = 1/2 - cos/2 gives a constant U0/2 on the diagonal and -U0/4
    between neighbouring harmonics.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    n = np.arange(-n_max, n_max + 1)
    dim = n.size
    h = np.zeros((k.size, dim, dim))
    idx = np.arange(dim)
    h[:, idx, idx] = (k[:, None] / np.pi + 2 * n[None, :]) ** 2 + depth / 2
    h[:, idx[:-1], idx[1:]] = -depth / 4
    h[:, idx[1:], idx[:-1]] = -depth / 4
    return h


def _fix_gauge(vecs: np.ndarray, n_max: int) -> np.ndarray:
    # vecs: (nk, dim, nb); make C_0 real and non-negative, else the largest entry
    c0 = vecs[:, n_max, :]
    ref = c0.copy()
    weak = np.abs(c0) < 1e-12
    if weak.any():
        largest = np.take_along_axis(vecs, np.abs(vecs).argmax(axis=1)[:, None, :], axis=1)[:, 0, :]
        ref = np.where(weak, largest, c0)
    sign = np.where(ref < 0, -1.0, 1.0)
    return vecs * sign[:, None, :]


def _diagonalize(k, depth, n_max, n_bands):
    vals, vecs = np.linalg.eigh(band_hamiltonian(k, depth, n_max))
    vecs = _fix_gauge(vecs[:, :, :n_bands], n_max)
    return vals[:, :n_bands], vecs


@dataclass(frozen=True)
class BandStructure:
    k: np.ndarray  # (nk,) quasi-momentum grid, 1/a_L
    energies: np.ndarray  # (nk, n_bands), E_rec
    coefficients: np.ndarray  # (nk, 2 n_max + 1, n_bands), real in this gauge
    lattice_depth: float
    n_max: int

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    @property
    def harmonics(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def spline(self, band: int) -> CubicSpline:
        splines = self.__dict__.setdefault("_splines", {})
        if band not in splines:
            if not 0 <= band < self.n_bands:
                raise ValueError(f"band {band} not computed")
            y = self.energies[:, band].copy()
            y[-1] = y[0]  # the grid spans whole periods
            splines[band] = CubicSpline(self.k, y, bc_type="periodic")
        return splines[band]


def solve_bands(
    params: PhysicalParams | None = None,
    n_max: int | None = None,
    n_bands: int | None = None,
    *,
    depth: float | None = None,
    k_points_per_zone: int | None = None,
    check_convergence: bool = True,
) -> BandStructure:
    """Lowest ``n_bands`` Bloch bands on a grid spanning three Brillouin zones."""
    if depth is None:
        depth = params.lattice_depth
    grid = params.grid if params is not None else None
    n_max = n_max if n_max is not None else grid.n_max if grid else 12
    n_bands = n_bands if n_bands is not None else grid.n_bands if grid else 4
    per_zone = k_points_per_zone or (grid.k_points_per_zone if grid else 256)
    if depth < 0:
        raise ValueError("lattice depth must be non-negative")
    if n_max < 2 * n_bands:
        raise ValueError("n_max must be at least 2 * n_bands")

    k = np.linspace(-ZONES * np.pi, ZONES * np.pi, ZONES * per_zone + 1)
    energies, coeffs = _diagonalize(k, depth, n_max, n_bands)
    if check_convergence:
        sample = k[:: max(1, per_zone // 16)]
        coarse, _ = _diagonalize(sample, depth, n_max, n_bands)
        fine, _ = _diagonalize(sample, depth, n_max + 2, n_bands)
        shift = np.abs(fine[:, -1] - coarse[:, -1]).max()
        if shift > 1e-8:
            raise BandConvergenceError(
                f"top band moved by {shift:.2e} E_rec when n_max -> n_max + 2; raise n_max"
            )
    return BandStructure(k, energies, coeffs, float(depth), n_max)


def zone_index(k) -> np.ndarray:
    """Brillouin zone of an extended-zone momentum, 0 for |k| < pi."""
    return np.floor(np.abs(np.asarray(k, dtype=float)) / np.pi).astype(int)


def wrap_to_first_zone(k):
    return (np.asarray(k, dtype=float) + np.pi) % (2 * np.pi) - np.pi


def dispersion_at(bands: BandStructure, k, band: int | None = 0, branch: str = "reduced"):
    """Interpolated E(k).

    ``branch="reduced"`` evaluates band ``band`` (periodic in k).
    ``branch="extended"`` follows the extended-zone scheme, using band j
    inside the (j+1)-th zone; for a free particle this is the parabola.
    """
    k_arr = np.asarray(k, dtype=float)
    lo, hi = bands.k[0], bands.k[-1]
    if np.any(k_arr < lo) or np.any(k_arr > hi):
        raise KRangeError(f"k outside the band grid [{lo:.4f}, {hi:.4f}]")
    if branch == "reduced":
        bidx = np.full(k_arr.shape, band, dtype=int)
    elif branch == "extended":
        bidx = zone_index(k_arr)
        if np.any(bidx >= bands.n_bands):
            raise KRangeError("extended-zone branch needs more bands")
    else:
        raise ValueError(f"unknown branch policy {branch!r}")

    flat_k = np.atleast_1d(k_arr).ravel()
    flat_b = np.atleast_1d(bidx).ravel()
    out = np.empty(flat_k.size)
    for b in np.unique(flat_b):
        sel = flat_b == b
        out[sel] = bands.spline(int(b))(flat_k[sel])
    # exact node values
    pos = np.searchsorted(bands.k, flat_k)
    pos = np.clip(pos, 0, bands.k.size - 1)
    on_node = bands.k[pos] == flat_k
    out[on_node] = bands.energies[pos[on_node], flat_b[on_node]]
    return out.reshape(k_arr.shape) if k_arr.ndim else float(out[0])


def bands_table(bands: BandStructure) -> tuple[list[str], np.ndarray]:
    header = ["k_aL"] + [f"E{b}_Erec" for b in range(bands.n_bands)]
    return header, np.column_stack([bands.k, bands.energies])
