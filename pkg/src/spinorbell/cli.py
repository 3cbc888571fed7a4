"""Command-line entry point: ``spinorbell <stage|pipeline|oracle> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config, preset_names
from .gaussian import Region
from .pipeline import STAGES, Options, PipelineError, run_pipeline


def _time(text: str) -> float:
    """Seconds; a trailing 'ms' or 'us' is honoured."""
    t = text.strip().lower()
    for suffix, scale in (("ms", 1e-3), ("us", 1e-6), ("s", 1.0)):
        if t.endswith(suffix):
            return float(t[: -len(suffix)]) * scale
    return float(t)


def _region(label):
    def parse(text):
        try:
            return Region.parse(label, text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", default="helium", help=f"config file or preset ({', '.join(preset_names())})")
    p.add_argument("--out", type=Path, default=None, help="output directory (default runs/<config name>)")
    p.add_argument("--force", action="store_true", help="rerun stages even when inputs are unchanged")
    p.add_argument("--frozen-pump", action="store_true", help="hold the condensate fixed at its initial profile")
    p.add_argument("--region-a", type=_region("A"), default=None, metavar="LO,HI")
    p.add_argument("--region-b", type=_region("B"), default=None, metavar="LO,HI")
    p.add_argument("--dt", type=float, default=None, help="kernel step in hbar/E_rec")
    p.add_argument("--t-final", type=_time, default=None, help="evolution time, e.g. 2.5ms")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinorbell", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _common(sub.add_parser(stage, help=f"run the {stage} stage (earlier outputs must exist)"))
    p = sub.add_parser("pipeline", help="run several stages in order")
    _common(p)
    p.add_argument("--stages", default=",".join(STAGES), help="comma-separated subset")
    o = sub.add_parser("oracle", help="compare Gaussian moments against the Fock-space two-mode state")
    o.add_argument("--r", type=float, default=0.5, help="squeezing parameter")
    return parser


def _oracle(args) -> int:
    from .metrics import compute_metrics, hillery_zubairy
    from .oracles import REGION_A, REGION_B, fock_build, fock_moment, tmsv_gaussian_state

    a, b = REGION_A, REGION_B
    state = tmsv_gaussian_state(args.r)
    fock = fock_build(args.r)
    m = compute_metrics(state, a, b, 0.0)
    rows = {
        "n_a_gaussian": m.n_a,
        "n_a_fock": fock_moment(fock, [("N", "A")]).real,
        "g2": m.g2,
        "b_max": m.b_max,
        "chsh": m.chsh,
        "e_hz_gaussian": hillery_zubairy(state, a, b),
        "fq_over_n": m.row()["fq_over_n"],
    }
    print(json.dumps({k: (v if isinstance(v, float) else str(v)) for k, v in rows.items()}, indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "oracle":
        return _oracle(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        params = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"spinorbell: {exc}", file=sys.stderr)
        return 2
    stages = [args.command] if args.command in STAGES else [s.strip() for s in args.stages.split(",") if s.strip()]
    overrides = {}
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.frozen_pump:
        overrides["frozen_pump"] = True
    out = args.out or Path("runs") / Path(str(args.config)).stem
    opts = Options(region_a=args.region_a, region_b=args.region_b, t_final=args.t_final)
    try:
        manifest = run_pipeline(params, stages, out, force=args.force, options=opts, overrides=overrides)
    except (PipelineError, ValueError) as exc:
        print(f"spinorbell: {exc}", file=sys.stderr)
        return 1
    for name in stages:
        info = manifest.stages[name]
        note = "cached" if info.get("cache_hit") else f"{info['wall_seconds']:.1f} s"
        print(f"{name}: {info['status']} ({note})")
    print(f"outputs in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
