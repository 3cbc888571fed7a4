"""The m_F = 0 condensate: imaginary-time ground state and real-time evolution.

Everything is in lattice units, so the kinetic energy of a plane wave
e^{ikx} is (k / pi)^2 and the lattice potential is U0 sin^2(pi x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import linalg as sla

from .config import ConfigError, PhysicalParams, lattice_couplings


class GroundStateError(RuntimeError):
    pass


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    """Periodic grid x_j = -L/2 + j dx, j = 0..n-1 (lattice units)."""

    n: int
    length: float

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.n)

    @cached_property
    def k(self) -> np.ndarray:
        """FFT-ordered wavenumbers, 1/a_L."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.length

    @cached_property
    def kinetic(self) -> np.ndarray:
        return (self.k / np.pi) ** 2

    @property
    def max_kinetic(self) -> float:
        return float(self.kinetic.max())

    def snap_momentum(self, k0: float) -> float:
        """Nearest momentum compatible with periodicity of the box."""
        return round(k0 / self.dk) * self.dk

    def to_momentum(self, psi: np.ndarray, axis: int = -1) -> np.ndarray:
        """Unitary transform to FFT-ordered plane-wave amplitudes, x_0 phase included."""
        phase = np.exp(-1j * self.k * self.x[0])
        out = sfft.fft(psi, axis=axis, norm="ortho")
        shape = [1] * out.ndim
        shape[axis] = self.n
        return out * phase.reshape(shape)

    def from_momentum(self, amp: np.ndarray, axis: int = -1) -> np.ndarray:
        phase = np.exp(1j * self.k * self.x[0])
        shape = [1] * amp.ndim
        shape[axis] = self.n
        return sfft.ifft(amp * phase.reshape(shape), axis=axis, norm="ortho")


@dataclass
class CondensateField:
    grid: Grid
    phi: np.ndarray  # complex, sum |phi|^2 dx = N
    t: float = 0.0  # hbar / E_rec

    @property
    def atom_number(self) -> float:
        return float(np.sum(np.abs(self.phi) ** 2) * self.grid.dx)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.phi) ** 2

    def momentum_density(self) -> tuple[np.ndarray, np.ndarray]:
        """(k, |phi_k|^2 / dk) sorted by k; integrates to N."""
        g = self.grid
        amp = g.to_momentum(self.phi) * math.sqrt(g.dx)
        order = np.argsort(g.k)
        return g.k[order], (np.abs(amp) ** 2 / g.dk)[order]


@dataclass(frozen=True)
class Hamiltonian:
    """Potential pieces of the mean-field problem on a fixed grid."""

    grid: Grid
    trap: np.ndarray  # E_rec
    lattice_depth: float
    g0: float  # E_rec a_L
    ramp_time: float = 0.0

    @cached_property
    def lattice_profile(self) -> np.ndarray:
        return np.sin(np.pi * self.grid.x) ** 2

    def potential(self, t: float) -> np.ndarray:
        depth = self.lattice_depth
        if self.ramp_time > 0:
            depth *= min(1.0, t / self.ramp_time)
        return self.trap + depth * self.lattice_profile

    def energy(self, phi: np.ndarray, t: float = 0.0) -> float:
        g = self.grid
        amp = g.to_momentum(phi)
        kin = float(np.sum(g.kinetic * np.abs(amp) ** 2)) * g.dx
        rho = np.abs(phi) ** 2
        pot = float(np.sum(self.potential(t) * rho + 0.5 * self.g0 * rho**2)) * g.dx
        return kin + pot


def windowed_trap(grid: Grid, curvature: float) -> np.ndarray:
    """kappa x^2 near the centre, tapered to a constant before the periodic seam."""
    half = 0.5 * grid.length
    s = np.abs(grid.x) / half
    lo, hi = 0.8, 0.95
    w = np.clip((s - lo) / (hi - lo), 0.0, 1.0)
    weight = 0.5 * (1 + np.cos(np.pi * w))
    edge = (hi * half) ** 2
    return curvature * (weight * grid.x**2 + (1 - weight) * edge)


def cloud_extent(params: PhysicalParams, g0: float | None = None) -> float:
    """Half-size of the trapped cloud in a_L: Thomas-Fermi radius or 4 oscillator lengths."""
    kappa = params.trap_curvature()
    if g0 is None:
        g0 = lattice_couplings(params)[0]
    a_ho = (1.0 / (math.pi**2 * kappa)) ** 0.25  # hbar^2/2m = 1/pi^2 in these units
    if g0 <= 0:
        return 4 * a_ho
    mu = (3 * g0 * params.n_atoms * math.sqrt(kappa) / 4) ** (2 / 3)
    return max(math.sqrt(mu / kappa), 4 * a_ho)


def auto_ground_grid(params: PhysicalParams, g0: float | None = None) -> Grid:
    """Coarse lattice-free grid for the trapped ground state."""
    if g0 is None:
        g0 = lattice_couplings(params)[0]
    extent = cloud_extent(params, g0)
    kappa = params.trap_curvature()
    a_ho = (1.0 / (math.pi**2 * kappa)) ** 0.25
    length = 2 * 1.5 * extent
    dx = a_ho / 8
    if g0 > 0:
        peak = (3 * g0 * params.n_atoms * math.sqrt(kappa) / 4) ** (2 / 3)
        dx = min(dx, (1 / math.pi) / math.sqrt(peak) / 4)  # a quarter healing length
    n = sfft.next_fast_len(int(math.ceil(length / dx)))
    return Grid(n, length)


def _gp_residual(grid: Grid, trap, g0, psi) -> float:
    """|| (H - mu) psi || / sqrt(N), the stationarity error."""
    h_psi = grid.from_momentum(grid.kinetic * grid.to_momentum(psi)) + (trap + g0 * np.abs(psi) ** 2) * psi
    norm = np.vdot(psi, psi).real
    mu = np.vdot(psi, h_psi).real / norm
    return float(np.linalg.norm(h_psi - mu * psi) / math.sqrt(norm))


def _newton_polish(grid: Grid, trap, g0: float, psi: np.ndarray, n_atoms: float, iters: int = 8) -> np.ndarray:
    """Newton iterations on H psi = mu psi with the norm constraint, for a real profile.

    Imaginary time leaves remnants of the slowest trap modes; Newton removes them
    at quadratic rate from any nearby start.
    """
    n, dx = grid.n, grid.dx
    kin = sfft.ifft(grid.kinetic).real
    K = sla.circulant(kin)
    u = psi.real.copy()
    mu = float(u @ (K @ u + (trap + g0 * u**2) * u) / (u @ u))
    jac = np.empty((n + 1, n + 1))
    for _ in range(iters):
        f = np.append(K @ u + (trap + g0 * u**2 - mu) * u, (u @ u) * dx - n_atoms)
        jac[:n, :n] = K
        jac[np.arange(n), np.arange(n)] += trap + 3 * g0 * u**2 - mu
        jac[:n, n] = -u
        jac[n, :n] = 2 * dx * u
        jac[n, n] = 0.0
        step = np.linalg.solve(jac, -f)
        u += step[:n]
        mu += step[n]
        if np.abs(step[:n]).max() <= 1e-14 * np.abs(u).max():
            break
    return u


def ground_state(
    params: PhysicalParams,
    grid: Grid | None = None,
    *,
    g0: float | None = None,
    initial: np.ndarray | None = None,
    max_steps: int = 400_000,
    residual_tol: float = 1e-10,
) -> CondensateField:
    """Lattice-free trapped ground state by imaginary-time split-step propagation."""
    if g0 is None:
        g0 = lattice_couplings(params)[0]
    grid = grid or auto_ground_grid(params, g0)
    if 0.5 * grid.length < 1.2 * cloud_extent(params, g0):
        raise ConfigError("ground-state grid must cover the cloud with a 20% margin")
    n_atoms = params.n_atoms
    trap = windowed_trap(grid, params.trap_curvature())
    ham = Hamiltonian(grid, trap, 0.0, g0)

    if initial is None and g0 > 0:
        mu = (3 * g0 * n_atoms * math.sqrt(params.trap_curvature()) / 4) ** (2 / 3)
        psi = np.sqrt(np.clip(mu - trap, 0, None) / g0) + 1e-6
    elif initial is None:
        a_ho = (math.pi**2 * params.trap_curvature()) ** -0.25
        psi = np.exp(-0.5 * (grid.x / (1.5 * a_ho)) ** 2)  # deliberately too wide
    else:
        psi = np.asarray(initial, dtype=complex)
    psi = np.abs(psi).astype(complex)

    def normalize(p):
        return p * math.sqrt(n_atoms / (np.sum(np.abs(p) ** 2) * grid.dx))

    psi = normalize(psi)
    energy = ham.energy(psi)
    tol = 1e-12 * n_atoms
    steps = 0
    change = residual = math.inf
    for dtau in (10.0, 3.0, 1.0, 0.3, 0.1):
        half_kin = np.exp(-0.5 * dtau * grid.kinetic)
        previous = math.inf
        while True:
            psi = grid.from_momentum(half_kin * grid.to_momentum(psi))
            psi = psi * np.exp(-dtau * (trap + g0 * np.abs(psi) ** 2))
            psi = normalize(grid.from_momentum(half_kin * grid.to_momentum(psi)))
            steps += 1
            if steps % 20 == 0:
                new = ham.energy(psi)
                change, energy = abs(new - energy) / 20, new
                residual = _gp_residual(grid, trap, g0, psi)
                # a stage ends at the tolerance or once the residual stops improving
                if change < tol and (residual < residual_tol or residual > 0.999 * previous):
                    break
                previous = residual
            if steps >= max_steps:
                raise GroundStateError(
                    f"imaginary time did not converge: energy change {change:.3e}, residual {residual:.3e}"
                )
    psi = _newton_polish(grid, trap, g0, np.abs(psi), n_atoms)
    return CondensateField(grid, normalize(np.abs(psi).astype(complex)), 0.0)


@lru_cache(maxsize=8)
def central_density(params: PhysicalParams) -> float:
    """Peak 1D density of the trapped ground state, atoms per a_L."""
    gs = ground_state(params)
    return float(gs.density.max())


def simulation_grid(params: PhysicalParams) -> Grid:
    g = params.grid
    return Grid(g.box_sites * g.points_per_site, float(g.box_sites))


def initial_field(params: PhysicalParams, grid: Grid | None = None) -> CondensateField:
    """Condensate before the boost: a uniform slice ("segment") or the trapped state."""
    grid = grid or simulation_grid(params)
    if grid.dx > 1 / params.grid.points_per_site + 1e-12:
        raise ConfigError("grid spacing does not resolve the lattice")
    if params.grid.geometry == "segment":
        n_c = central_density(params)
        return CondensateField(grid, np.full(grid.n, math.sqrt(n_c), dtype=complex), 0.0)
    return ground_state(params, grid)


def build_hamiltonian(params: PhysicalParams, grid: Grid, g0: float | None = None) -> Hamiltonian:
    if g0 is None:
        g0 = lattice_couplings(params)[0]
    if params.grid.geometry == "segment":
        trap = np.zeros(grid.n)
    else:
        trap = windowed_trap(grid, params.trap_curvature())
    depth = params.lattice_depth
    ramp = params.to_lattice_time(params.grid.ramp_time)
    return Hamiltonian(grid, trap, depth, g0, ramp)


@dataclass
class MeanFieldPropagator:
    """Strang split-step propagation of the boosted condensate.

    Queried with non-decreasing times; each call advances the field in
    equal substeps no longer than ``max_dt``.
    """

    field: CondensateField
    ham: Hamiltonian
    max_dt: float
    frozen_pump: bool = False
    norm_tol: float = 1e-6
    mu: float = 0.0
    _n0: float = field(init=False, default=0.0)
    _phi0: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        self._n0 = self.field.atom_number
        self._phi0 = self.field.phi.copy()
        if self.frozen_pump:
            self.mu = self.ham.energy(self._phi0) / self._n0 + 0.5 * self.ham.g0 * float(
                np.sum(self.field.density**2) * self.field.grid.dx
            ) / self._n0

    @property
    def t(self) -> float:
        return self.field.t

    def _substep(self, dt: float):
        g = self.ham.grid
        f = self.field
        half = np.exp(-0.5j * dt * g.kinetic)
        psi = g.from_momentum(half * g.to_momentum(f.phi))
        v = self.ham.potential(f.t + 0.5 * dt) + self.ham.g0 * np.abs(psi) ** 2
        psi = psi * np.exp(-1j * dt * v)
        f.phi = g.from_momentum(half * g.to_momentum(psi))
        f.t += dt

    def advance_to(self, t: float) -> np.ndarray:
        f = self.field
        if t < f.t - 1e-12:
            raise ValueError("propagator only moves forward in time")
        if self.frozen_pump:
            f.t = t
            f.phi = self._phi0 * np.exp(-1j * self.mu * t)
            return f.phi
        span = t - f.t
        if span > 1e-15:
            steps = max(1, math.ceil(span / self.max_dt - 1e-9))
            for _ in range(steps):
                self._substep(span / steps)
            f.t = t
            drift = abs(f.atom_number - self._n0) / self._n0
            if drift > self.norm_tol:
                raise NormDriftError(f"condensate norm drifted by {drift:.2e} at t = {t:.4g}")
        return f.phi

    __call__ = advance_to

    def snapshot(self) -> CondensateField:
        return CondensateField(self.field.grid, self.field.phi.copy(), self.field.t)


def boost(field: CondensateField, k0: float) -> tuple[CondensateField, float]:
    """Imprint e^{i k0 x} with k0 snapped to the box; returns the field and the used k0."""
    k = field.grid.snap_momentum(k0)
    return CondensateField(field.grid, field.phi * np.exp(1j * k * field.grid.x), field.t), k


def make_propagator(
    params: PhysicalParams,
    field: CondensateField | None = None,
    *,
    g0: float | None = None,
    frozen_pump: bool | None = None,
) -> tuple[MeanFieldPropagator, float]:
    """Boosted, lattice-quenched condensate ready for real-time evolution."""
    field = field or initial_field(params)
    boosted, k0 = boost(field, params.condensate_momentum)
    ham = build_hamiltonian(params, boosted.grid, g0)
    max_dt = 0.1 / boosted.grid.max_kinetic
    frozen = params.grid.frozen_pump if frozen_pump is None else frozen_pump
    prop = MeanFieldPropagator(boosted, ham, max_dt, frozen, params.grid.norm_tol)
    return prop, k0


def boost_and_evolve(
    params: PhysicalParams,
    times,
    field: CondensateField | None = None,
    *,
    dt: float | None = None,
    g0: float | None = None,
    frozen_pump: bool | None = None,
):
    """Yield condensate snapshots at the requested times (lattice units)."""
    prop, _ = make_propagator(params, field, g0=g0, frozen_pump=frozen_pump)
    if dt is not None:
        if dt > 0.1 / prop.ham.grid.max_kinetic + 1e-15:
            raise ValueError("dt exceeds 0.1 hbar / E_max of the grid")
        prop.max_dt = dt
    for t in times:
        prop.advance_to(float(t))
        yield prop.snapshot()
