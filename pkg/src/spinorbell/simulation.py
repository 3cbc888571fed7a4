"""Coupled condensate + kernel evolution producing a time series of Gaussian states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bogoliubov import BogoliubovKernels, SymplecticError, evolve_kernels, symplectic_residual
from .config import PhysicalParams, lattice_couplings
from .gaussian import GaussianState, sector_matrices, window_rows
from .meanfield import CondensateField, Grid, central_density, make_propagator
from .snapshots import read_container, write_container

# times always sampled besides the regular grid: early violation and analysis time
EXTRA_TIMES_S = (0.3e-3,)


def snapshot_times(params: PhysicalParams, t_final_s: float | None = None) -> np.ndarray:
    """Snapshot times in seconds: a regular grid plus the analysis time."""
    t_final_s = params.evolution_time if t_final_s is None else t_final_s
    step = params.grid.snapshot_interval
    n = int(math.floor(t_final_s / step + 1e-9))
    times = set(np.round(np.arange(n + 1) * step, 15).tolist())
    times.add(round(t_final_s, 15))
    for extra in (params.grid.analysis_time, *EXTRA_TIMES_S):
        if extra <= t_final_s:
            times.add(round(extra, 15))
    return np.array(sorted(times))


@dataclass
class StateSeries:
    """Sector correlation matrices on the analysis window, per snapshot."""

    times_s: np.ndarray
    k: np.ndarray  # ascending
    dk: float
    g_plus: np.ndarray  # (n_t, K, K)
    m_plus: np.ndarray
    g_minus: np.ndarray | None = None
    m_minus: np.ndarray | None = None
    residuals: np.ndarray | None = None
    condensate_k: np.ndarray | None = None  # ascending momenta of the condensate grid
    condensate_density: np.ndarray | None = None  # (n_t, n_x) momentum density
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times_s.size

    def state(self, i: int) -> GaussianState:
        gm = None if self.g_minus is None else self.g_minus[i]
        mm = None if self.m_minus is None else self.m_minus[i]
        return GaussianState.from_sectors(
            self.k, self.g_plus[i], self.m_plus[i], gm, mm, dk=self.dk, t=float(self.times_s[i])
        )

    def index_of(self, t_s: float) -> int:
        i = int(np.argmin(np.abs(self.times_s - t_s)))
        if abs(self.times_s[i] - t_s) > 1e-12:
            raise KeyError(f"no snapshot at t = {t_s} s")
        return i

    def save(self, path) -> None:
        arrays = {
            "times_s": self.times_s,
            "k": self.k,
            "g_plus": self.g_plus,
            "m_plus": self.m_plus,
        }
        if self.g_minus is not None:
            arrays["g_minus"] = self.g_minus
            arrays["m_minus"] = self.m_minus
        for name in ("residuals", "condensate_k", "condensate_density"):
            if getattr(self, name) is not None:
                arrays[name] = getattr(self, name)
        write_container(path, {"kind": "state-series", "dk": self.dk, **self.meta}, arrays)

    @classmethod
    def load(cls, path) -> "StateSeries":
        meta, arr = read_container(path)
        meta = dict(meta)
        meta.pop("kind", None)
        dk = meta.pop("dk")
        return cls(
            arr["times_s"], arr["k"], dk, arr["g_plus"], arr["m_plus"], arr.get("g_minus"), arr.get("m_minus"),
            arr.get("residuals"), arr.get("condensate_k"), arr.get("condensate_density"), meta,
        )


def save_checkpoint(path, kernels: BogoliubovKernels, phi: CondensateField, k0: float) -> None:
    arrays = {"phi": phi.phi}
    for sec in kernels.c:
        arrays[f"c{sec:+d}"] = kernels.c[sec]
        arrays[f"s{sec:+d}"] = kernels.s[sec]
    meta = {"kind": "kernels", "t": kernels.t, "n": kernels.grid.n, "length": kernels.grid.length,
            "symmetric": kernels.symmetric, "k0": k0}
    write_container(path, meta, arrays)


def load_checkpoint(path) -> tuple[BogoliubovKernels, CondensateField]:
    meta, arr = read_container(path)
    grid = Grid(int(meta["n"]), float(meta["length"]))
    secs = [1] if meta["symmetric"] else [1, -1]
    c = {s: np.array(arr[f"c{s:+d}"]) for s in secs}
    s_ = {s: np.array(arr[f"s{s:+d}"]) for s in secs}
    ker = BogoliubovKernels(grid, float(meta["t"]), c, s_, bool(meta["symmetric"]))
    return ker, CondensateField(grid, np.array(arr["phi"]), float(meta["t"]))


def simulate(
    params: PhysicalParams,
    times_s=None,
    *,
    dt: float | None = None,
    frozen_pump: bool | None = None,
    symmetric: bool | None = None,
    progress=None,
    checkpoint_path=None,
) -> StateSeries:
    """Run the condensate and the kernels together; return states at ``times_s``."""
    times_s = snapshot_times(params) if times_s is None else np.asarray(times_s, float)
    symmetric = params.grid.sector_symmetry if symmetric is None else symmetric
    dt = params.grid.dt if dt is None else dt
    prop, k0 = make_propagator(params, frozen_pump=frozen_pump)
    g1 = lattice_couplings(params)[1]
    times = [params.to_lattice_time(t) for t in times_s]
    kmax = params.grid.analysis_kmax

    g_p, m_p, g_m, m_m, res, rho_c = [], [], [], [], [], []
    grid = prop.field.grid
    rows = window_rows(grid, kmax)
    for i, ker in enumerate(evolve_kernels(prop, params, prop.ham, times, dt, g1=g1, symmetric=symmetric)):
        r = symplectic_residual(ker)
        if r > params.grid.symplectic_tol:
            raise SymplecticError(f"symplectic deviation {r:.2e} at t = {times_s[i]:.4g} s; reduce dt")
        res.append(r)
        gp, mp = sector_matrices(ker, 1, rows)
        g_p.append(gp)
        m_p.append(mp)
        if not symmetric:
            gm, mm = sector_matrices(ker, -1, rows)
            g_m.append(gm)
            m_m.append(mm)
        prop.advance_to(times[i])
        k_c, dens = prop.snapshot().momentum_density()
        rho_c.append(dens)
        if progress:
            progress(i, len(times), times_s[i], r)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, ker, prop.snapshot(), k0)
    meta = {
        "k0": k0,
        "n_x": grid.n,
        "box_length": grid.length,
        "dt": dt,
        "symmetric": bool(symmetric),
        "frozen_pump": bool(prop.frozen_pump),
        "central_density": central_density(params) if params.grid.geometry == "segment" else None,
    }
    return StateSeries(
        np.asarray(times_s, float), grid.k[rows], grid.dk,
        np.array(g_p), np.array(m_p),
        np.array(g_m) if g_m else None, np.array(m_m) if m_m else None,
        np.array(res), k_c, np.array(rho_c), meta,
    )
