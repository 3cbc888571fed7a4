"""Resonant pair momenta from energy and quasi-momentum conservation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bands import BandStructure, dispersion_at, wrap_to_first_zone, zone_index

ROOT_TOL = 1e-10  # E_rec
MERGE_TOL = 1e-6  # 1/a_L


@dataclass(frozen=True)
class ResonantPair:
    k1: float
    k2: float
    residual: float

    def as_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "residual": self.residual}


def _mismatch(bands: BandStructure, k0: float, band: int, branch: str):
    e0 = dispersion_at(bands, k0, band, branch)

    def f(q):
        return dispersion_at(bands, k0 + q, band, branch) + dispersion_at(bands, k0 - q, band, branch) - 2 * e0

    return f


def _bisect(f, a: float, b: float, fa: float) -> tuple[float, float]:
    fm = fa
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = float(f(m))
        if abs(fm) <= ROOT_TOL or b - a < 1e-15:
            return m, fm
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return m, fm


def find_resonances(bands: BandStructure, k0: float) -> list[ResonantPair]:
    """All pairs (k0 + q, k0 - q) with E(k0+q) + E(k0-q) = 2 E(k0), q != 0.

    With a lattice, both partners live on the band that holds the condensate
    and quasi-momentum is conserved modulo 2 pi / a_L; the pair is reported
    in the first zone with k1 > k2.  Without a lattice there is no
    reciprocal vector to absorb, so the free extended-zone dispersion is used.
    """
    h = bands.k[1] - bands.k[0]
    if bands.lattice_depth == 0:
        branch, band = "extended", None
        q_hi = min(bands.k[-1] - k0, k0 - bands.k[0])
        wrap = lambda k: float(k)  # noqa: E731
    else:
        branch, band = "reduced", int(zone_index(k0))
        if band >= bands.n_bands:
            raise ValueError("condensate band not computed")
        q_hi = np.pi
        wrap = lambda k: float(wrap_to_first_zone(k))  # noqa: E731
    if q_hi <= h:
        return []
    f = _mismatch(bands, k0, band, branch)
    q = np.arange(1, int(q_hi / h) + 1) * h
    vals = f(q)

    roots = []
    for i in range(q.size):
        if vals[i] == 0.0:
            roots.append((q[i], 0.0))
        elif i + 1 < q.size and vals[i + 1] != 0.0 and (vals[i] > 0) != (vals[i + 1] > 0):
            roots.append(_bisect(f, q[i], q[i + 1], vals[i]))

    pairs: list[ResonantPair] = []
    for qr, res in roots:
        a, b = wrap(k0 + qr), wrap(k0 - qr)
        k1, k2 = max(a, b), min(a, b)
        if any(abs(p.k1 - k1) < MERGE_TOL and abs(p.k2 - k2) < MERGE_TOL for p in pairs):
            continue
        pairs.append(ResonantPair(k1, k2, float(res)))
    return pairs


def resonance_scan(bands: BandStructure, k0_values) -> list[tuple[float, int]]:
    """Number of non-trivial resonances as a function of condensate momentum."""
    return [(float(k0), len(find_resonances(bands, float(k0)))) for k0 in k0_values]
