"""bands -> match -> evolve -> analyze -> metrics with persisted, digest-tracked outputs."""

from __future__ import annotations

import csv
import hashlib
import inspect
import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bands import bands_table, solve_bands
from .config import PhysicalParams, config_hash, dump_config, load_config
from .gaussian import (
    DOWN,
    UP,
    Region,
    Undefined,
    default_regions,
    g2_map,
    g2_regions,
    validate_regions,
)
from .matching import find_resonances, resonance_scan
from .metrics import compute_metrics
from .simulation import StateSeries, simulate, snapshot_times

log = logging.getLogger("spinorbell")

STAGES = ("bands", "match", "evolve", "analyze", "metrics")
MANIFEST = "manifest.json"


class PipelineError(RuntimeError):
    pass


# --- formatting -------------------------------------------------------------


def fmt(value) -> str:
    """Shortest round-trip text for numbers; enum markers by name."""
    if isinstance(value, Undefined):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Undefined):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def plot_descriptor(csv_name: str, x: str, series, xlabel: str, ylabel: str, **extra) -> dict:
    return {
        "data": csv_name,
        "x": x,
        "xlabel": xlabel,
        "ylabel": ylabel,
        "series": [{"y": y, "label": label} for y, label in series],
        **extra,
    }


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 22), b""):
            h.update(chunk)
    return h.hexdigest()


def _text_digest(obj) -> str:
    return hashlib.sha256(json.dumps(_jsonable(obj), sort_keys=True).encode()).hexdigest()


# --- manifest ---------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    versions: dict
    stages: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "versions": self.versions, "stages": self.stages}

    @classmethod
    def load(cls, path) -> "RunManifest | None":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, ValueError):
            return None
        return cls(d.get("config_hash", ""), d.get("versions", {}), d.get("stages", {}))

    def save(self, path) -> None:
        write_json(Path(path), self.to_dict())


def module_versions() -> dict:
    import numba
    import scipy

    return {
        "spinorbell": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


# --- stages -----------------------------------------------------------------


@dataclass
class Options:
    region_a: Region | None = None
    region_b: Region | None = None
    t_final: float | None = None  # s

    def for_stage(self, stage: str) -> dict:
        if stage == "analyze":
            regs = {}
            for name in ("region_a", "region_b"):
                r = getattr(self, name)
                regs[name] = None if r is None else [r.k_lo, r.k_hi]
            return regs
        return {}


class StageContext:
    def __init__(self, out: Path, stage: str):
        self.out = out
        self.stage = stage
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        """Where to write ``name`` while the stage runs (renamed on success)."""
        self.written.append(name)
        return self.out / (name + ".partial")

    def finalize(self):
        for name in self.written:
            (self.out / (name + ".partial")).replace(self.out / name)

    def input(self, name: str) -> Path:
        p = self.out / name
        if not p.exists():
            raise PipelineError(f"stage {self.stage} needs {name}; run the producing stage first")
        return p


STAGE_INPUTS = {
    "bands": (),
    "match": ("bands.csv",),
    "evolve": (),
    "analyze": ("evolve.bin", "match.json"),
    "metrics": ("evolve.bin", "analyze.json"),
}


def stage_bands(params: PhysicalParams, ctx: StageContext, opts: Options):
    bands = solve_bands(params)
    header, table = bands_table(bands)
    write_csv(ctx.path("bands.csv"), header, table.tolist())
    write_json(
        ctx.path("bands.plot.json"),
        plot_descriptor(
            "bands.csv", "k_aL", [(h, f"band {i}") for i, h in enumerate(header[1:])],
            "k a_L", "E / E_rec", kind="line",
        ),
    )


def _bands_from_csv(path, params: PhysicalParams):
    # Recompute from the config: the CSV is the published artifact, the structure is cheap.
    return solve_bands(params)


def stage_match(params: PhysicalParams, ctx: StageContext, opts: Options):
    ctx.input("bands.csv")
    bands = _bands_from_csv(ctx.out / "bands.csv", params)
    k0 = params.condensate_momentum
    roots = find_resonances(bands, k0)
    scan = resonance_scan(bands, np.round(np.arange(0.0, 3.1, 0.05), 10))
    write_json(
        ctx.path("match.json"),
        {"k0": k0, "roots": [r.as_dict() for r in roots], "scan": [{"k0": a, "n_roots": b} for a, b in scan]},
    )


def stage_evolve(params: PhysicalParams, ctx: StageContext, opts: Options):
    times = snapshot_times(params, opts.t_final)
    t0 = time.perf_counter()

    def progress(i, n, t, res):
        log.info("evolve: snapshot %d/%d at %.3f ms (symplectic residual %.1e, %.0f s)", i + 1, n, t * 1e3, res,
                 time.perf_counter() - t0)

    series = simulate(params, times, progress=progress, checkpoint_path=ctx.path("evolve.kernels.bin"))
    series.save(ctx.path("evolve.bin"))

    kc = series.condensate_k
    pick = np.searchsorted(kc, series.k)
    rows = []
    for i, t in enumerate(series.times_s):
        st = series.state(i)
        rho_up = st.density(UP)
        for j, k in enumerate(series.k):
            rows.append((t * 1e3, k, rho_up[j], series.condensate_density[i, pick[j]]))
    write_csv(ctx.path("evolve.csv"), ["t_ms", "k_aL", "rho_up", "rho_condensate"], rows)
    write_json(
        ctx.path("evolve.json"),
        {
            **series.meta,
            "times_ms": (series.times_s * 1e3).tolist(),
            "symplectic_residual": series.residuals.tolist(),
            "max_symplectic_residual": float(series.residuals.max()),
        },
    )
    write_json(
        ctx.path("evolve.plot.json"),
        plot_descriptor("evolve.csv", "k_aL", [("rho_up", "scattered, up"), ("rho_condensate", "condensate")],
                        "k a_L", "momentum density", facet="t_ms", kind="line"),
    )


def resolve_regions(match: dict, params: PhysicalParams, opts: Options) -> tuple[Region, Region]:
    if opts.region_a is not None and opts.region_b is not None:
        a, b = opts.region_a, opts.region_b
    else:
        if not match["roots"]:
            raise PipelineError("no resonant pair found; pass --region-a and --region-b")
        r = match["roots"][0]
        a, b = default_regions(r["k1"], r["k2"], params.grid.region_halfwidth)
        a = opts.region_a or a
        b = opts.region_b or b
    validate_regions(a, b, params.condensate_momentum)
    return a, b


def _peak(state, region: Region) -> float:
    mask = region.contains(state.k)
    rho = np.where(mask, state.density(UP), -np.inf)
    return float(state.k[int(np.argmax(rho))])


def stage_analyze(params: PhysicalParams, ctx: StageContext, opts: Options):
    series = StateSeries.load(ctx.input("evolve.bin"))
    match = json.loads(ctx.input("match.json").read_text())
    a, b = resolve_regions(match, params, opts)
    rows = []
    for i, t in enumerate(series.times_s):
        st = series.state(i)
        g2 = g2_regions(st, a, b)
        g2r = g2_regions(st, a, b, reduced=True)
        nk = st.n_k
        ia, ib = np.flatnonzero(a.contains(st.k)), np.flatnonzero(b.contains(st.k))
        diag = np.abs(np.diag(st.G)).max()
        cross = 0.0
        for s1 in (UP, DOWN):
            for s2 in (UP, DOWN):
                blk = st.G[np.ix_(s1 * nk + ia, s2 * nk + ib)]
                cross = max(cross, float(np.abs(blk).max()))
        rows.append((t * 1e3, g2, g2r, _peak(st, a), _peak(st, b), cross / diag if diag > 0 else 0.0,
                     float(np.real(np.trace(st.block("G", UP, UP)))), float(np.real(np.trace(st.block("G", DOWN, DOWN))))))
    write_csv(ctx.path("analyze.csv"),
              ["t_ms", "g2", "g2_reduced", "peak_a", "peak_b", "cross_coherence", "n_up_total", "n_down_total"], rows)

    i_an = series.index_of(params.grid.analysis_time) if params.grid.analysis_time <= series.times_s[-1] else len(series) - 1
    st = series.state(i_an)
    k_ref = float(st.k[np.argmin(np.abs(st.k - _target_a(match, a)))])
    ks, cross_map = g2_map(st, k_ref, UP, DOWN)
    _, local_map = g2_map(st, k_ref, UP, UP)
    write_csv(ctx.path("analyze.g2map.csv"), ["k_aL", "g2_cross", "g2_local", "rho_up"],
              [(k, c, l, r) for k, c, l, r in zip(ks, cross_map, local_map, st.density(UP))])
    write_json(
        ctx.path("analyze.json"),
        {
            "regions": {"A": [a.k_lo, a.k_hi], "B": [b.k_lo, b.k_hi]},
            "analysis_time_ms": float(series.times_s[i_an] * 1e3),
            "k_ref": k_ref,
            "peak_a": _peak(st, a),
            "peak_b": _peak(st, b),
            "g2": g2_regions(st, a, b),
            "resonances": match["roots"],
        },
    )
    write_json(
        ctx.path("analyze.plot.json"),
        plot_descriptor("analyze.csv", "t_ms", [("g2", "back-to-back g2"), ("cross_coherence", "cross-region |G| / max n")],
                        "t [ms]", "dimensionless", threshold=2 * 2**0.5 + 3, yscale="log", kind="line"),
    )
    write_json(
        ctx.path("analyze.g2map.plot.json"),
        plot_descriptor("analyze.g2map.csv", "k_aL", [("g2_cross", "cross-spin"), ("g2_local", "same-spin")],
                        "k a_L", "g2(k, k')", k_ref=k_ref, kind="line"),
    )


def _target_a(match: dict, a: Region) -> float:
    for r in match["roots"]:
        for k in (r["k1"], r["k2"]):
            if a.contains(k):
                return k
    return 0.5 * (a.k_lo + a.k_hi)


METRIC_COLUMNS = ["t_ms", "b_max_over_2", "inv_2ehz", "fq_over_n", "g2", "n_a", "n_b", "b_max", "b_max_g2", "chsh", "e_hz", "fq"]


def stage_metrics(params: PhysicalParams, ctx: StageContext, opts: Options):
    series = StateSeries.load(ctx.input("evolve.bin"))
    info = json.loads(ctx.input("analyze.json").read_text())
    a = Region("A", *info["regions"]["A"])
    b = Region("B", *info["regions"]["B"])
    rows = []
    grids = {}
    for i, t in enumerate(series.times_s):
        m = compute_metrics(series.state(i), a, b, float(t))
        d = m.row()
        rows.append([t * 1e3, d["b_over_2"], d["inv_2ehz"], d["fq_over_n"], d["g2"], d["n_a"], d["n_b"], d["b_max"],
                     d["b_max_g2"], d["chsh"], d["e_hz"], d["fq"]])
        if m.e_grid is not None:
            grids[fmt(t * 1e3)] = m.e_grid
    write_csv(ctx.path("metrics.csv"), METRIC_COLUMNS, rows)
    write_json(ctx.path("metrics.json"), {"regions": info["regions"], "e_grid_16x16": grids})
    write_json(
        ctx.path("metrics.plot.json"),
        plot_descriptor(
            "metrics.csv", "t_ms",
            [("b_max_over_2", "B_max / 2"), ("inv_2ehz", "1 / (2 E_HZ)"), ("fq_over_n", "F_q / <N_A + N_B>")],
            "t [ms]", "normalized signature", threshold=1.0, kind="line",
        ),
    )


STAGE_FUNCS = {
    "bands": stage_bands,
    "match": stage_match,
    "evolve": stage_evolve,
    "analyze": stage_analyze,
    "metrics": stage_metrics,
}


# modules whose behaviour determines each stage's outputs, besides the stage function
STAGE_MODULES = {
    "bands": ("config", "bands"),
    "match": ("config", "bands", "matching"),
    "evolve": ("config", "meanfield", "bogoliubov", "gaussian", "simulation", "snapshots"),
    "analyze": ("config", "gaussian", "simulation", "snapshots"),
    "metrics": ("config", "gaussian", "metrics", "simulation", "snapshots"),
}
_WRITERS = (fmt, write_csv, _jsonable, write_json, plot_descriptor)


def code_digest(stage: str) -> str:
    """Digest of the code that produces a stage's outputs, so edits invalidate the cache."""
    import importlib

    h = hashlib.sha256(inspect.getsource(STAGE_FUNCS[stage]).encode())
    for fn in _WRITERS:
        h.update(inspect.getsource(fn).encode())
    for name in STAGE_MODULES[stage]:
        mod = importlib.import_module(f"{__package__}.{name}")
        h.update(Path(mod.__file__).read_bytes())
    return h.hexdigest()


def _outputs(out: Path, names) -> dict:
    return {n: file_digest(out / n) for n in names}


def run_pipeline(config, stages=STAGES, out=".", *, force: bool = False, options: Options | None = None,
                 overrides: dict | None = None) -> RunManifest:
    """Run ``stages`` in dependency order; unchanged stages are skipped."""
    params = config if isinstance(config, PhysicalParams) else load_config(config)
    if overrides:
        grid_keys = {k: v for k, v in overrides.items() if k in params.grid.__dataclass_fields__}
        phys = {k: v for k, v in overrides.items() if k not in grid_keys}
        params = replace(params, **phys)
        if grid_keys:
            params = params.with_grid(**grid_keys)
    opts = options or Options()
    stages = [s for s in STAGES if s in set(stages)]
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise PipelineError(f"unknown stages {sorted(unknown)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(params))

    chash = config_hash(params)
    previous = RunManifest.load(out / MANIFEST)
    manifest = RunManifest(chash, module_versions(), dict(previous.stages) if previous else {})
    failure = None
    for stage in stages:
        inputs = {
            "config": chash,
            "code": code_digest(stage),
            "options": _text_digest({**opts.for_stage(stage), "t_final": opts.t_final}),
        }
        for name in STAGE_INPUTS[stage]:
            if (out / name).exists():
                inputs[name] = file_digest(out / name)
        old = manifest.stages.get(stage)
        if not force and old and old.get("status") == "ok" and old.get("inputs") == inputs:
            try:
                if _outputs(out, old["outputs"]) == old["outputs"]:
                    manifest.stages[stage] = {**old, "cache_hit": True}
                    log.info("%s: unchanged, skipped", stage)
                    continue
            except OSError:
                pass
        ctx = StageContext(out, stage)
        t0 = time.perf_counter()
        log.info("%s: running", stage)
        try:
            STAGE_FUNCS[stage](params, ctx, opts)
        except Exception as exc:  # recorded, then re-raised after the manifest is written
            manifest.stages[stage] = {
                "status": "failed",
                "error": f"{type(exc).__name__}: {exc}",
                "inputs": inputs,
                "partial_outputs": [n + ".partial" for n in ctx.written if (out / (n + ".partial")).exists()],
                "wall_seconds": time.perf_counter() - t0,
                "cache_hit": False,
            }
            failure = exc
            break
        ctx.finalize()
        manifest.stages[stage] = {
            "status": "ok",
            "inputs": inputs,
            "outputs": _outputs(out, ctx.written),
            "wall_seconds": time.perf_counter() - t0,
            "cache_hit": False,
        }
    manifest.save(out / MANIFEST)
    if failure is not None:
        raise PipelineError(f"stage failed: {failure}") from failure
    return manifest
