"""Physical parameters, unit conversions and the flat ``key = value`` config format.

Physical constants are always SI unless the key carries a unit suffix
(``evolution_time_ms = 0.7``).  Three fields are dimensionless ratios by
definition: ``lattice_depth`` (multiples of the recoil energy),
``condensate_momentum`` (units of 1/a_L) and ``n_atoms``.

Internally the simulation runs in lattice units: lengths in a_L, energies
in E_rec and times in hbar/E_rec.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from scipy.constants import atomic_mass, hbar, pi


class ConfigError(ValueError):
    """Raised for malformed, incomplete or unphysical configuration."""


PHYSICAL_KEYS = (
    "atom_mass",
    "n_atoms",
    "a_bar",
    "delta_a",
    "trap_freqs",
    "lattice_depth",
    "k_rec",
    "condensate_momentum",
    "evolution_time",
)

# key suffix -> multiplier into SI
UNIT_SUFFIXES = {
    "_amu": atomic_mass,
    "_nm": 1e-9,
    "_um": 1e-6,
    "_per_um": 1e6,
    "_ms": 1e-3,
    "_us": 1e-6,
    "_hz": 1.0,
    "_khz": 1e3,
}


@dataclass(frozen=True)
class GridSettings:
    """Numerical settings; the only part of a config that has defaults."""

    geometry: str = "segment"  # "segment" (uniform periodic slice) or "trapped"
    box_sites: int = 231  # box length in lattice periods
    points_per_site: int = 4
    dt: float = 0.05  # kernel step, hbar/E_rec
    snapshot_interval: float = 0.05e-3  # s
    analysis_time: float = 0.7e-3  # s
    analysis_kmax: float = 4.5  # 1/a_L, momentum window kept in state series
    region_halfwidth: float = 0.25  # fraction of the resonant-pair separation
    n_max: int = 12
    n_bands: int = 4
    k_points_per_zone: int = 256
    sector_symmetry: bool = True
    frozen_pump: bool = False
    ramp_time: float = 0.0  # s, 0 means a sudden quench
    symplectic_tol: float = 1e-6
    norm_tol: float = 1e-6

    def __post_init__(self):
        if self.geometry not in ("segment", "trapped"):
            raise ConfigError(f"unknown geometry {self.geometry!r}")
        if self.points_per_site < 4:
            raise ConfigError("points_per_site must be >= 4 to resolve the lattice")
        for name in ("box_sites", "n_max", "n_bands", "k_points_per_zone"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("dt", "snapshot_interval", "analysis_kmax", "region_halfwidth"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.ramp_time < 0:
            raise ConfigError("ramp_time must be non-negative")


@dataclass(frozen=True)
class PhysicalParams:
    atom_mass: float  # kg
    n_atoms: float
    a_bar: float  # m, (a0 + 2 a2)/3
    delta_a: float  # m, (a2 - a0)/3
    trap_freqs: tuple[float, float, float]  # Hz
    lattice_depth: float  # E_rec
    k_rec: float  # 1/m
    condensate_momentum: float  # 1/a_L
    evolution_time: float  # s
    grid: GridSettings = field(default_factory=GridSettings)

    def __post_init__(self):
        object.__setattr__(self, "trap_freqs", tuple(float(f) for f in self.trap_freqs))
        if len(self.trap_freqs) != 3:
            raise ConfigError("trap_freqs needs three values")
        for name in ("atom_mass", "a_bar", "delta_a", "k_rec", "evolution_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        if not all(f > 0 for f in self.trap_freqs):
            raise ConfigError("trap_freqs must be strictly positive")
        if self.n_atoms < 1:
            raise ConfigError("n_atoms must be >= 1")
        if self.lattice_depth < 0:
            raise ConfigError("lattice_depth must be non-negative")
        if not math.isfinite(self.condensate_momentum):
            raise ConfigError("condensate_momentum must be finite")
        e1, e2 = self.recoil_energy, self.recoil_energy_from_period
        if abs(e1 - e2) > 1e-12 * e1:
            raise ConfigError("recoil energy expressions disagree")

    # scattering lengths and couplings
    @property
    def a0(self) -> float:
        return self.a_bar - 2 * self.delta_a

    @property
    def a2(self) -> float:
        return self.a_bar + self.delta_a

    @property
    def c0(self) -> float:
        """Spin-independent 3D contact strength 4 pi hbar^2 (a0 + 2 a2) / 3m, J m^3."""
        return 4 * pi * hbar**2 * (self.a0 + 2 * self.a2) / (3 * self.atom_mass)

    @property
    def c1(self) -> float:
        """Spin-dependent 3D contact strength 4 pi hbar^2 (a2 - a0) / 3m, J m^3."""
        return 4 * pi * hbar**2 * (self.a2 - self.a0) / (3 * self.atom_mass)

    # lattice scales
    @property
    def lattice_period(self) -> float:
        return pi / self.k_rec

    @property
    def recoil_energy(self) -> float:
        return hbar**2 * self.k_rec**2 / (2 * self.atom_mass)

    @property
    def recoil_energy_from_period(self) -> float:
        return hbar**2 * pi**2 / (2 * self.atom_mass * self.lattice_period**2)

    @property
    def time_unit(self) -> float:
        """hbar / E_rec in seconds."""
        return hbar / self.recoil_energy

    def to_lattice_time(self, seconds: float) -> float:
        return seconds / self.time_unit

    def to_seconds(self, t: float) -> float:
        return t * self.time_unit

    def trap_curvature(self) -> float:
        """Coefficient of z^2 in the axial trap, E_rec per a_L^2."""
        omega = 2 * pi * self.trap_freqs[2]
        return 0.5 * self.atom_mass * omega**2 * self.lattice_period**2 / self.recoil_energy

    def with_grid(self, **changes) -> "PhysicalParams":
        return replace(self, grid=replace(self.grid, **changes))


def effective_1d_couplings(params: PhysicalParams) -> tuple[float, float]:
    """Integrate the transverse harmonic ground state out of c0 and c1.

    Returns (g0_1d, g1_1d) in J m, g = c / (2 pi a_perp^2).
    """
    nu_x, nu_y, _ = params.trap_freqs
    if nu_x != nu_y:
        raise ConfigError("effective 1D reduction needs equal transverse frequencies")
    a_perp_sq = hbar / (params.atom_mass * 2 * pi * nu_x)
    return params.c0 / (2 * pi * a_perp_sq), params.c1 / (2 * pi * a_perp_sq)


def lattice_couplings(params: PhysicalParams) -> tuple[float, float]:
    """1D couplings in lattice units: E_rec * a_L (multiply by a density in 1/a_L)."""
    g0, g1 = effective_1d_couplings(params)
    scale = params.recoil_energy * params.lattice_period
    return g0 / scale, g1 / scale


# --- config file handling -------------------------------------------------

_GRID_FIELDS = {f.name: f for f in fields(GridSettings)}


def _parse_scalar(raw: str, kind, key: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from None


def _resolve_key(key: str) -> tuple[str, float]:
    known = set(PHYSICAL_KEYS) | set(_GRID_FIELDS)
    if key in known:
        return key, 1.0
    for suffix, factor in sorted(UNIT_SUFFIXES.items(), key=lambda kv: -len(kv[0])):
        if key.endswith(suffix) and key[: -len(suffix)] in known:
            return key[: -len(suffix)], factor
    raise ConfigError(f"unknown config key {key!r}")


def parse_config(text: str) -> PhysicalParams:
    physical: dict = {}
    grid: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        name, factor = _resolve_key(key)
        if name in physical or name in grid:
            raise ConfigError(f"duplicate key {name!r}")
        if name == "trap_freqs":
            parts = [p for p in raw.replace(",", " ").split()]
            if len(parts) != 3:
                raise ConfigError("trap_freqs needs three values")
            physical[name] = tuple(_parse_scalar(p, float, key) * factor for p in parts)
        elif name in PHYSICAL_KEYS:
            physical[name] = _parse_scalar(raw, float, key) * factor
        else:
            ftype = type(getattr(GridSettings(), name))
            value = _parse_scalar(raw, ftype, key)
            if factor != 1.0:
                value = value * factor
            grid[name] = value
    for key in PHYSICAL_KEYS:
        if key not in physical:
            raise ConfigError(f"missing key {key!r}")
    return PhysicalParams(**physical, grid=GridSettings(**grid))


def load_config(path) -> PhysicalParams:
    """Read a config file, or a bundled preset when given a bare preset name."""
    p = Path(path)
    if not p.exists():
        name = str(path)
        if name in preset_names():
            return parse_config(preset_text(name))
        raise FileNotFoundError(path)
    return parse_config(p.read_text())


def dump_config(params: PhysicalParams) -> str:
    """Canonical SI serialization; floats use repr so a reload is bit-exact."""
    lines = []
    for key in PHYSICAL_KEYS:
        value = getattr(params, key)
        if key == "trap_freqs":
            lines.append(f"{key} = " + ", ".join(repr(v) for v in value))
        else:
            lines.append(f"{key} = {value!r}")
    for name in _GRID_FIELDS:
        value = getattr(params.grid, name)
        lines.append(f"{name} = {value}" if isinstance(value, str) else f"{name} = {value!r}")
    return "\n".join(lines) + "\n"


def config_hash(params: PhysicalParams) -> str:
    return hashlib.sha256(dump_config(params).encode()).hexdigest()


def preset_names() -> list[str]:
    files = resources.files("spinorbell.presets").iterdir()
    return sorted(f.name[: -len(".conf")] for f in files if f.name.endswith(".conf"))


def preset_text(name: str) -> str:
    return resources.files("spinorbell.presets").joinpath(f"{name}.conf").read_text()
