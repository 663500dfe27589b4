"""``qfin`` command line: pipeline stages that write CSV/JSON plus a run manifest.

Every run writes ``<command>.manifest.json`` next to its outputs, recording
the argv, resolved parameters, input digests, version and seed. ``qfin rerun
MANIFEST`` replays it.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import density as dens
from . import inverse, market_data, scaling, simulate, solver
from .errors import ParameterError, QfinError

log = logging.getLogger("qfin")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# output plumbing


def _clean(value):
    """Make numpy scalars/arrays and non-finite floats JSON friendly."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (dt.date, Path)):
        return str(value)
    return value


def write_atomic(path: Path, write: Callable) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: Path, data: dict) -> Path:
    return write_atomic(path, lambda fh: (json.dump(_clean(data), fh, indent=2, sort_keys=True), fh.write("\n")))


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects outputs and parameters for one command invocation."""

    def __init__(self, command: str, args: argparse.Namespace, argv: list[str]):
        self.command = command
        self.args = args
        self.argv = argv
        self.out_dir = Path(args.out_dir or os.environ.get("QFIN_OUT_DIR", "."))
        self.outputs: list[str] = []
        self.inputs: dict[str, str] = {}
        self.results: dict = {}

    def input(self, path) -> Path:
        p = Path(path)
        if not p.is_file():
            raise QfinError(f"input not found: {p}")
        self.inputs[str(p)] = sha256(p)
        return p

    def csv(self, name: str, write: Callable) -> Path:
        path = write_atomic(self.out_dir / name, write)
        self.outputs.append(name)
        return path

    def json(self, name: str, data: dict) -> Path:
        path = write_json(self.out_dir / name, data)
        self.outputs.append(name)
        return path

    def manifest(self) -> Path:
        params = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        data = {
            "command": self.command,
            "argv": self.argv,
            "parameters": params,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "results": self.results,
            "tool": "qfin",
            "version": __version__,
            "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
            "seed": getattr(self.args, "seed", None),
        }
        return write_json(self.out_dir / f"{self.command}.manifest.json", data)


# --------------------------------------------------------------------------
# shared loaders


def _series(run: Run, weekly: bool = False) -> market_data.PriceSeries:
    a = run.args
    s = market_data.load_price_csv(run.input(a.input), a.column)
    # slice first: a window ending mid-week keeps its partial last week
    if a.start or a.end:
        start = market_data.parse_date(a.start) if a.start else s.dates[0]
        end = market_data.parse_date(a.end) if a.end else s.dates[-1]
        s = market_data.slice_by_date(s, start, end)
    if weekly or getattr(a, "weekly", False):
        s = market_data.resample_weekly(s)
    return s


def _range(a):
    if a.range_lo is None and a.range_hi is None:
        return None
    if a.range_lo is None or a.range_hi is None:
        raise ParameterError("--range-lo and --range-hi must be given together")
    return (a.range_lo, a.range_hi)


def _lags(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ParameterError(f"bad --lags {text!r}; expected comma-separated integers") from None


def _density_and_params(run: Run, coords):
    a = run.args
    grid = dens.build_density(coords, bins=a.bins, range=_range(a))
    grid = dens.amplitude(grid, a.floor)
    D = a.diffusion if a.diffusion is not None else scaling.estimate_diffusion(coords)
    return grid, inverse.ModelParams(a.mass, D)


def _read_potential(run: Run):
    """``(x, Phi, edge_ratio, params or None)`` from a potential CSV (+ sibling JSON)."""
    path = run.input(run.args.input)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ParameterError(f"{path}: empty potential file")
    col = next((c for c in ("phi_anchored", "phi", "phi_minus_E") if c in rows[0]), None)
    if "x" not in rows[0] or col is None:
        raise ParameterError(f"{path}: need 'x' and one of phi_anchored/phi/phi_minus_E columns")
    x = np.array([float(r["x"]) for r in rows])
    V = np.array([float(r[col]) for r in rows])
    edge, params = (0.0, 0.0), None
    side = path.with_suffix(".json")
    if side.is_file():
        meta = json.loads(side.read_text())
        edge = tuple(meta.get("edge_ratio", edge))
        prov = meta.get("provenance", {})
        if "diffusion" in prov:
            params = inverse.ModelParams(prov.get("mass", 1.0), prov["diffusion"])
    return x, V, edge, params


def _potential(run: Run):
    """Potential from ``--input`` or a built-in well; returns ``(potential, x, params)``."""
    a = run.args
    if a.input:
        x, V, edge, params = _read_potential(run)
        if params is None or a.diffusion is not None:
            params = inverse.ModelParams(a.mass, a.diffusion if a.diffusion is not None else 1.0)
        dx = solver.uniform_spacing(x)
        if edge != (0.0, 0.0):
            # rebuild a profile so the solver uses the same boundary closure
            pot = inverse.PotentialProfile(x=x, dx=dx, phi_minus_e=V, params=params, edge_ratio=edge)
        else:
            pot = V
        return pot, x, params
    params = inverse.ModelParams(a.mass, a.diffusion if a.diffusion is not None else 1.0)
    n = a.grid_points
    if a.well == "harmonic":
        x = solver.box_grid(-a.half_width, a.half_width, n)
        return 0.5 * params.mass * a.omega ** 2 * x ** 2, x, params
    if a.well == "box":
        x = solver.box_grid(-a.half_width, a.half_width, n)
        return np.zeros(n), x, params
    raise ParameterError("give --input or --well")


def _schedule(spec: Optional[str], run: Run):
    if spec is None:
        return 0.0
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        return float(rest)
    if kind == "sinusoid":
        amp, period = (float(v) for v in rest.split(":"))
        return solver.sinusoid(amp, period)
    with open(run.input(spec), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "t" not in rows[0] or "delta_D" not in rows[0]:
        raise ParameterError(f"{spec}: schedule CSV needs 't' and 'delta_D' columns")
    return solver.tabulated([float(r["t"]) for r in rows], [float(r["delta_D"]) for r in rows])


# --------------------------------------------------------------------------
# commands


def cmd_ingest(run: Run):
    s = _series(run)
    run.csv("series.csv", lambda fh: market_data.write_price_csv(s, fh))
    run.results.update(rows=len(s), rejected=s.rejected, first=s.dates[0], last=s.dates[-1])


def cmd_scaling(run: Run):
    a = run.args
    coords = market_data.to_log_coordinates(_series(run))
    report = scaling.estimate_hurst(coords, _lags(a.lags), mass=a.mass)
    run.json("scaling.json", report.to_dict())
    run.results.update(H=report.H, D=report.D, diffusion=report.diffusion, degenerate=report.degenerate)
    if a.window:
        roll = scaling.rolling_diffusion(coords, a.window, a.step)

        def write(fh):
            fh.write("t,diffusion,delta\n")
            for row in roll.rows():
                fh.write(",".join(repr(v) for v in row) + "\n")

        run.csv("rolling_diffusion.csv", write)
        run.results.update(mean_diffusion=roll.mean, windows=len(roll.t))


def cmd_density(run: Run):
    a = run.args
    coords = market_data.to_log_coordinates(_series(run))
    grid = dens.amplitude(dens.build_density(coords, bins=a.bins, range=_range(a)), a.floor)
    run.csv("density.csv", grid.write_csv)
    run.results.update(bins=len(grid), dx=grid.dx, samples=int(grid.counts.sum()), dropped=grid.dropped)


def cmd_potential(run: Run):
    coords = market_data.to_log_coordinates(_series(run))
    grid, params = _density_and_params(run, coords)
    prof = inverse.extract_potential(grid, params)
    run.csv("potential.csv", prof.write_csv)
    run.json("potential.json", {**prof.report(), "well": inverse.well_shape(prof),
                                "mean_osmotic_energy": inverse.mean_osmotic_energy(grid, params)})
    run.results.update(diffusion=params.diffusion, anchor_offset=prof.anchor_offset)


def cmd_solve(run: Run):
    a = run.args
    pot, x, params = _potential(run)
    sols = solver.spectrum(pot, params, x, count=a.count)

    def write(fh):
        fh.write("x," + ",".join(f"psi_{s.index}" for s in sols) + "\n")
        for i, xi in enumerate(x):
            fh.write(",".join([repr(float(xi))] + [repr(float(s.psi[i])) for s in sols]) + "\n")

    run.csv("eigen.csv", write)
    data = {"energies": [s.energy for s in sols], "residuals": [s.residual for s in sols],
            "mass": params.mass, "diffusion": params.diffusion, "hbar": params.hbar}
    run.json("eigen.json", data)
    run.results.update(energies=data["energies"])


def cmd_evolve(run: Run):
    a = run.args
    pot, x, params = _potential(run)
    if a.init == "ground":
        state = solver.WaveState.from_eigen(solver.ground_state(pot, params, x), params)
    else:
        centre = a.x0 if a.x0 is not None else 0.5 * (x[0] + x[-1])
        width = a.width if a.width is not None else 0.05 * (x[-1] - x[0])
        state = solver.gaussian_packet(x, params, centre, width, a.k0)
    if a.generalized:
        mean = a.mean_diffusion if a.mean_diffusion is not None else params.diffusion
        steps = solver.iter_propagate_generalized(state, pot, mean, _schedule(a.delta_d, run),
                                                  a.dt, a.steps, a.mode)
    else:
        steps = solver.iter_propagate(state, pot, a.dt, a.steps)
    norms = [state.norm]
    final = state
    for final in steps:
        norms.append(final.norm)
    run.csv("state.csv", final.write_csv)
    run.json("evolve.json", {"t": final.t, "norm_history": norms,
                             "max_norm_drift": max(abs(n - norms[0]) for n in norms),
                             "generalized": a.generalized, "mode": a.mode if a.generalized else None})
    run.results.update(t=final.t, final_norm=norms[-1])


def cmd_simulate(run: Run):
    a = run.args
    if a.generator == "gbm":
        ens = simulate.gbm_ensemble(a.sigma, a.mu, a.steps, a.dt, a.seed, a.paths)
    elif a.generator == "fbm":
        ens = simulate.fbm_ensemble(a.hurst, a.steps, a.dt, a.scale, a.seed, a.paths)
    else:
        params = inverse.ModelParams(a.mass, a.diffusion if a.diffusion is not None else 1.0)
        x = solver.box_grid(-a.half_width, a.half_width, a.grid_points)
        V = 0.5 * params.mass * a.omega ** 2 * x ** 2
        ground = solver.WaveState.from_eigen(solver.ground_state(V, params, x), params)
        ens = simulate.nelson_sample(ground, params, a.paths, a.steps, a.dt, a.seed, initial=a.init)
        hist = simulate.ensemble_histogram(ens, "final", bins=a.bins)
        run.csv("histogram.csv", hist.write_csv)
        run.results["ks_final"] = simulate.ks_distance(ens.x[:, -1], x, ground.density)
    run.csv("paths.csv", ens.write_csv)
    run.results["ensemble"] = ens.manifest()


def cmd_roundtrip(run: Run):
    a = run.args
    grid = dens.amplitude(dens.read_density_csv(run.input(a.input)), a.floor)
    params = inverse.ModelParams(a.mass, a.diffusion if a.diffusion is not None else 1.0)
    prof = inverse.extract_potential(grid, params)
    ground = solver.ground_state(prof)
    A = grid.A[1:-1] / np.sqrt(np.sum(grid.A[1:-1] ** 2) * grid.dx)
    gap = float(np.max(np.abs(ground.psi - A)))
    data = {"linf_gap": gap, "ground_energy": ground.energy, "anchor_offset": prof.anchor_offset,
            "points": len(A), "residual": ground.residual}
    run.json("roundtrip.json", data)
    run.results.update(data)


def cmd_report(run: Run):
    a = run.args
    s = _series(run, weekly=True)
    coords = market_data.to_log_coordinates(s)
    rep = scaling.estimate_hurst(coords, _lags(a.lags), mass=a.mass)
    grid, params = _density_and_params(run, coords)
    prof = inverse.extract_potential(grid, params)
    run.csv("series.csv", lambda fh: market_data.write_price_csv(s, fh))
    run.csv("density.csv", grid.write_csv)
    run.csv("potential.csv", prof.write_csv)
    summary = {
        "weeks": len(s), "first": s.dates[0], "last": s.dates[-1],
        "diffusion": params.diffusion, "scaling": rep.to_dict(),
        "bins": len(grid), "dx": grid.dx, "dropped": grid.dropped,
        "well": inverse.well_shape(prof), "anchor_offset": prof.anchor_offset,
        "mean_osmotic_energy": inverse.mean_osmotic_energy(grid, params),
        "uncertainty_product": scaling.uncertainty_product(params.mass, params.diffusion),
    }
    run.json("report.json", summary)
    run.results.update(weeks=len(s), diffusion=params.diffusion, H=rep.H)


# --------------------------------------------------------------------------
# argument parsing


def _common(p, series=True):
    p.add_argument("--out-dir", default=None, help="output directory (default $QFIN_OUT_DIR or .)")
    if series:
        p.add_argument("--input", required=True, help="price CSV with Date and Adj Close/Close")
        p.add_argument("--column", default=None, help="price column (default Adj Close, else Close)")
        p.add_argument("--start", default=None)
        p.add_argument("--end", default=None)
        p.add_argument("--weekly", action="store_true", help="keep the last quote of each week")


def _density_flags(p):
    p.add_argument("--bins", type=int, default=dens.DEFAULT_BINS)
    p.add_argument("--range-lo", type=float, default=None)
    p.add_argument("--range-hi", type=float, default=None)
    p.add_argument("--floor", type=float, default=dens.DEFAULT_FLOOR)


def _model_flags(p):
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--diffusion", type=float, default=None, help="override the estimated diffusion")


def _well_flags(p):
    p.add_argument("--input", default=None, help="potential CSV (x, phi_anchored|phi)")
    p.add_argument("--well", choices=("harmonic", "box"), default=None)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--half-width", type=float, default=5.0)
    p.add_argument("--grid-points", type=int, default=512)


def build_parser() -> Parser:
    parser = Parser(prog="qfin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qfin {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("ingest", help="CSV -> normalized series")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("scaling", help="Hurst exponent and diffusion")
    _common(p)
    p.add_argument("--lags", default="1,2,4,8,16")
    p.add_argument("--window", type=int, default=None, help="rolling diffusion window (samples)")
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--mass", type=float, default=1.0)
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("density", help="occupancy density of log-price")
    _common(p)
    _density_flags(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("potential", help="potential extracted from the density")
    _common(p)
    _density_flags(p)
    _model_flags(p)
    p.set_defaults(func=cmd_potential)

    p = sub.add_parser("solve", help="lowest eigenpairs")
    _common(p, series=False)
    _well_flags(p)
    _model_flags(p)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evolve", help="Crank-Nicolson propagation")
    _common(p, series=False)
    _well_flags(p)
    _model_flags(p)
    p.add_argument("--init", choices=("ground", "packet"), default="packet")
    p.add_argument("--x0", type=float, default=None)
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--k0", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--generalized", action="store_true")
    p.add_argument("--mode", choices=("full", "perturbative"), default="full")
    p.add_argument("--mean-diffusion", type=float, default=None)
    p.add_argument("--delta-d", default=None,
                   help="CSV file (t,delta_D), constant:VALUE or sinusoid:AMPLITUDE:PERIOD")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("simulate", help="synthetic paths")
    _common(p, series=False)
    p.add_argument("generator", choices=("gbm", "fbm", "nelson"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--dt", type=float, default=1 / 52)
    p.add_argument("--sigma", type=float, default=0.18)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--hurst", type=float, default=0.5)
    p.add_argument("--scale", type=float, default=0.18)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--half-width", type=float, default=5.0)
    p.add_argument("--grid-points", type=int, default=512)
    p.add_argument("--init", choices=("psi", "uniform"), default="psi")
    p.add_argument("--bins", type=int, default=dens.DEFAULT_BINS)
    _model_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("roundtrip", help="density -> potential -> ground state -> density")
    _common(p, series=False)
    p.add_argument("--input", required=True, help="density CSV (x, P)")
    p.add_argument("--floor", type=float, default=dens.DEFAULT_FLOOR)
    _model_flags(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("report", help="weekly series, diffusion, density and potential for a window")
    _common(p)
    _density_flags(p)
    _model_flags(p)
    p.add_argument("--lags", default="1,2,4,8,16")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("rerun", help="replay a run manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "rerun":
            manifest = json.loads(Path(args.manifest).read_text())
            replay = list(manifest["argv"])
            if args.out_dir:
                replay = _override_out_dir(replay, args.out_dir)
            return main(replay)
    except UsageError as exc:
        print(f"qfin: usage-error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"qfin: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args.command, args, argv)
    try:
        args.func(run)
        run.manifest()
    except (QfinError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"qfin: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    for name in run.outputs:
        print(run.out_dir / name)
    return 0


def _override_out_dir(argv: list[str], out_dir: str) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out-dir":
            skip = True
            continue
        if tok.startswith("--out-dir="):
            continue
        out.append(tok)
    return out + ["--out-dir", out_dir]


if __name__ == "__main__":
    raise SystemExit(main())
