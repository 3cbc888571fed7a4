"""Linear kernels C_s, S_s of the spin-flip fluctuation fields.

The field operator evolves as

    b_i(t) = sum_j K_C[i, j] b_j(0) + K_S[i, j] b_j(0)^dagger,

with b_i = delta(x_i) sqrt(dx) the mode-normalized grid operators, so that
K_C = C dx and K_S = S dx.  The initial data are K_C = 1, K_S = 0.

Storage is transposed and Fourier transformed: ``c[j, :]`` holds the raw FFT
over the first index of column j of K_C.  That keeps every FFT on the
contiguous axis and makes momentum-space rows directly available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import fft as sfft

from .config import PhysicalParams, lattice_couplings
from .meanfield import Grid, Hamiltonian


class SymplecticError(RuntimeError):
    pass


@numba.njit(cache=True, fastmath=False)
def _pair_map(c, s, a, b):
    """In place: C <- a C + b conj(S), S <- a S + b conj(C), row-broadcast over columns."""
    rows, n = c.shape
    for r in range(rows):
        for i in range(n):
            ci = c[r, i]
            si = s[r, i]
            c[r, i] = a[i] * ci + b[i] * si.conjugate()
            s[r, i] = a[i] * si + b[i] * ci.conjugate()


def pair_coefficients(h: np.ndarray, kappa: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact exponential of the pointwise 2x2 Bogoliubov block over time tau.

    d/dt (C, S*) = -i [[h, kappa], [-kappa*, -h]] (C, S*); the block squares to
    (h^2 - |kappa|^2), so cos/sin of the complex frequency cover both the
    oscillating and the hyperbolic case.
    """
    w2 = h**2 - np.abs(kappa) ** 2
    w = np.sqrt(w2.astype(complex))
    wt = w * tau
    f = np.cos(wt).real
    small = np.abs(wt) < 1e-8
    g = np.where(small, tau * (1 - w2 * tau**2 / 6), np.sin(wt) / np.where(small, 1.0, w)).real
    return f - 1j * g * h, -1j * g * kappa


@dataclass
class BogoliubovKernels:
    grid: Grid
    t: float
    c: dict  # sector (+1 / -1) -> (n, n) transposed raw-FFT storage
    s: dict
    symmetric: bool = True
    exact_identity: bool = False  # untouched initial data: C = 1, S = 0 without FFT roundoff

    @classmethod
    def identity(cls, grid: Grid, symmetric: bool = True) -> "BogoliubovKernels":
        n = grid.n
        eye_hat = sfft.fft(np.eye(n, dtype=complex), axis=1)
        sectors = (1,) if symmetric else (1, -1)
        c = {sec: eye_hat.copy() for sec in sectors}
        s = {sec: np.zeros((n, n), dtype=complex) for sec in sectors}
        return cls(grid, 0.0, c, s, symmetric, exact_identity=True)

    def copy(self) -> "BogoliubovKernels":
        return BogoliubovKernels(
            self.grid,
            self.t,
            {k: v.copy() for k, v in self.c.items()},
            {k: v.copy() for k, v in self.s.items()},
            self.symmetric,
        )

    def sector(self, sec: int) -> tuple[np.ndarray, np.ndarray]:
        """Stored (c, s) of a sector; the minus sector follows from symmetry if not evolved."""
        if sec in self.c:
            return self.c[sec], self.s[sec]
        if self.symmetric and sec == -1:
            return self.c[1], -self.s[1]
        raise KeyError(sec)

    def position_kernels(self, sec: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """(K_C, K_S) with K[i, j]: first index x_i, second x_j."""
        c, s = self.sector(sec)
        return sfft.ifft(c, axis=1).T, sfft.ifft(s, axis=1).T

    def momentum_rows(self, sec: int = 1, rows: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(F K_C, F K_S) restricted to FFT-ordered momentum rows; second index stays x_j."""
        g = self.grid
        c, s = self.sector(sec)
        idx = np.arange(g.n) if rows is None else np.asarray(rows)
        phase = np.exp(-1j * g.k[idx] * g.x[0]) / math.sqrt(g.n)
        return (c[:, idx] * phase).T, (s[:, idx] * phase).T


def to_momentum_basis(kernels: BogoliubovKernels, sec: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Full momentum-basis kernels: F K_C F^dagger and F K_S F^T (FFT ordering)."""
    g = kernels.grid
    kc_rows, ks_rows = kernels.momentum_rows(sec)
    # right-multiplication by F^dagger / F^T acts on the second index
    kc = np.conj(g.to_momentum(np.conj(kc_rows), axis=1))
    ks = g.to_momentum(ks_rows, axis=1)
    return kc, ks


def symplectic_residual(kernels: BogoliubovKernels) -> float:
    """max |K_C K_C^dagger - K_S K_S^dagger - 1| over both sectors."""
    if kernels.exact_identity:
        return 0.0
    worst = 0.0
    for sec in kernels.c:
        kc, ks = kernels.position_kernels(sec)
        dev = kc @ kc.conj().T - ks @ ks.conj().T
        dev[np.diag_indices_from(dev)] -= 1.0
        worst = max(worst, float(np.abs(dev).max()))
    return worst


@dataclass
class KernelStepper:
    """Strang splitting: half kinetic, exact pointwise pair map, half kinetic."""

    kernels: BogoliubovKernels
    ham: Hamiltonian
    g1: float
    phi_at: object  # callable t -> condensate on the grid
    _half: dict = field(init=False, default_factory=dict)

    def _half_phase(self, dt):
        key = round(dt, 15)
        if key not in self._half:
            self._half[key] = np.exp(-0.5j * dt * self.ham.grid.kinetic)
        return self._half[key]

    def step(self, dt: float):
        ker = self.kernels
        ker.exact_identity = False
        t_mid = ker.t + 0.5 * dt
        phi = self.phi_at(t_mid)
        rho = np.abs(phi) ** 2
        h = self.ham.potential(t_mid) + (self.ham.g0 + self.g1) * rho
        half = self._half_phase(dt)
        for sec in ker.c:
            a, b = pair_coefficients(h, sec * self.g1 * phi**2, dt)
            c, s = ker.c[sec], ker.s[sec]
            c *= half
            s *= half
            cx = sfft.ifft(c, axis=1, overwrite_x=True)
            sx = sfft.ifft(s, axis=1, overwrite_x=True)
            _pair_map(cx, sx, a, b)
            c = sfft.fft(cx, axis=1, overwrite_x=True)
            s = sfft.fft(sx, axis=1, overwrite_x=True)
            c *= half
            s *= half
            ker.c[sec], ker.s[sec] = c, s
        ker.t += dt


def step_schedule(times, dt: float, t0: float = 0.0) -> list[tuple[float, int]]:
    """Per interval between consecutive requested times: (effective dt, step count).

    The step is shrunk slightly so each requested time is hit exactly.
    """
    out = []
    prev = t0
    for t in times:
        span = t - prev
        if span < -1e-12:
            raise ValueError("snapshot times must be non-decreasing")
        steps = math.ceil(span / dt - 1e-9) if span > 1e-15 else 0
        out.append((span / steps if steps else 0.0, steps))
        prev = t
    return out


def evolve_kernels(
    phi_at,
    params: PhysicalParams,
    ham: Hamiltonian,
    times,
    dt: float | None = None,
    *,
    kernels: BogoliubovKernels | None = None,
    g1: float | None = None,
    symmetric: bool | None = None,
    check_every: int = 0,
):
    """Yield kernel snapshots (shared, mutable; copy to keep) at each requested time.

    ``phi_at`` returns the condensate at any later time, e.g. a
    ``MeanFieldPropagator`` or a ``PhiSeries``.  Restart by passing
    ``kernels`` from a checkpoint together with a source positioned at
    ``kernels.t``.
    """
    grid = ham.grid
    dt = dt if dt is not None else params.grid.dt
    if g1 is None:
        g1 = lattice_couplings(params)[1]
    if symmetric is None:
        symmetric = params.grid.sector_symmetry
    if kernels is None:
        kernels = BogoliubovKernels.identity(grid, symmetric)
    tol = params.grid.symplectic_tol
    stepper = KernelStepper(kernels, ham, g1, phi_at)
    for t, (h, steps) in zip(times, step_schedule(times, dt, kernels.t)):
        for _ in range(steps):
            stepper.step(h)
        kernels.t = t
        if check_every and steps:
            res = symplectic_residual(kernels)
            if res > tol:
                raise SymplecticError(
                    f"symplectic deviation {res:.2e} at t = {t:.4g} exceeds {tol:.0e}; reduce dt"
                )
        yield kernels


@dataclass
class PhiSeries:
    """Stored condensate snapshots, linearly interpolated in time."""

    times: np.ndarray
    fields: np.ndarray  # (n_t, n_x)

    def __call__(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.fields[0]
        if t >= ts[-1]:
            return self.fields[-1]
        i = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1 - w) * self.fields[i] + w * self.fields[i + 1]
