"""Command-line interface.

Every command reads an optional JSON run file (``--config``), merges the
command-line flags into it and writes to ``--out``:

* ``<command>.json``: ``schema_version``, the resolved config and results;
* ``<command>.csv``: tabular data where the command has any;
* ``<command>.meta.json``: timestamps, wall time and package version.

Only the metadata file changes between identical runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata as _md
from pathlib import Path

import numpy as np

from .driving import DrivingFunction, energy
from .errors import (
    DomainError,
    GeometryError,
    LoewnerLabError,
    MalformedInputError,
    NumericalAccuracyError,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_DOMAIN, EXIT_ACCURACY, EXIT_USAGE = 0, 1, 2, 64

COMMANDS = {
    "energy": ("Loewner energy of a driving function.", "t0,t1,energy"),
    "trace": ("Trace of a driving function.", "t,x,y"),
    "invert": ("Driving function of a sampled curve (zipper).", "t,lambda"),
    "reverse-check": (
        "Energy of Rev(lambda) against energy(lambda) over refinement levels.",
        "resolution,tail_capacity,energy_fwd,energy_rev,rel_err",
    ),
    "minimizer": ("One-point energy minimizer for the point e^{i theta}.", "t,lambda"),
    "constrained-min": ("Minimal-energy driver for a labeled point set.", "t,lambda"),
    "sle-passage": ("Monte Carlo passage probability of SLE_kappa.", "point,x,y,side"),
    "ld-rate": ("-kappa ln P along decreasing kappa.", "kappa,rate,reference,bound,half_width"),
    "restriction": ("Restriction identity: driving form against Schwarzian form.", "t,lhs,rhs,residual"),
    "commute": ("Two-slit commutation: both orderings of the energies.", "t,lhs,rhs,residual,resolution"),
    "welding": ("Conformal welding pairs and quasisymmetry ratios.", "x_pos,x_neg,curve_time,on_curve,ratio_1,ratio_2"),
}

EPILOG = """\
Units: angles in radians; times in capacity time t, so hcap(gamma[0,t]) = 2t.

Driving functions in a run file are one of
  {"times": [...], "values": [...]}      knots of a piecewise-linear driver
  {"slopes": [...], "durations": [...]}  linear pieces
  {"file": "path.csv"}                   CSV with columns t,lambda (or .json)
  {"minimizer": theta, "step": 1e-3}     one-point minimizer driver

CSV columns per command:
""" + "\n".join(f"  {k:16s} {v[1]}" for k, v in COMMANDS.items()) + """

Exit status: 0 ok, 1 domain or geometry error, 2 numerical accuracy error,
64 usage error or malformed input.  LOEWNER_LAB_THREADS caps worker threads.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    """Resolved parameters of one command."""

    command: str
    params: dict = field(default_factory=dict)
    out: str = "."
    seed: int | None = None
    tolerance: float | None = None
    resolution: float | None = None
    samples: int | None = None
    quiet: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        for name in ("tolerance", "resolution"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError(f"--{name} must be positive")
        if self.samples is not None and self.samples <= 0:
            raise UsageError("--samples must be positive")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        stochastic = self.command == "sle-passage" or (
            self.command == "ld-rate" and self.params.get("mode", "quadrature") == "mc"
        )
        if stochastic and self.seed is None:
            raise UsageError(f"{self.command} needs a seed (--seed or 'seed' in the run file)")

    def resolved(self) -> dict:
        d = dict(self.params)
        d.update(
            {
                "command": self.command,
                "seed": self.seed,
                "tolerance": self.tolerance,
                "resolution": self.resolution,
                "samples": self.samples,
            }
        )
        return d


# ---------------------------------------------------------------------------
# input helpers


def _need(params: dict, key: str):
    if key not in params:
        raise MalformedInputError(f"run file lacks {key!r}")
    return params[key]


def _driving(spec, base: Path) -> DrivingFunction:
    if not isinstance(spec, dict):
        raise MalformedInputError("a driving function must be given as an object")
    if "times" in spec:
        return DrivingFunction(spec["times"], spec["values"])
    if "slopes" in spec:
        return DrivingFunction.from_slopes(spec["slopes"], spec["durations"])
    if "file" in spec:
        p = base / spec["file"]
        text = p.read_text()
        return DrivingFunction.from_json(text) if p.suffix == ".json" else DrivingFunction.from_csv(text)
    if "minimizer" in spec:
        from .minimizers import one_point_minimizer

        return one_point_minimizer(float(spec["minimizer"]), step=float(spec.get("step", 1e-3))).driving
    raise MalformedInputError("unrecognized driving specification")


def _points(spec):
    from .minimizers import ConstraintSet

    try:
        return ConstraintSet(tuple((complex(x, y), int(s)) for x, y, s in spec))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise MalformedInputError("points are [x, y, side] triples") from exc


def _hull(spec):
    from .hulls import SlitHull

    kind = spec.get("kind", "vertical-slit")
    if kind in ("vertical-slit", "slit"):
        return SlitHull.vertical_slit(float(spec["x0"]), float(spec["height"]))
    if kind == "half-disk":
        return SlitHull.half_disk(float(spec["x0"]), float(spec["radius"]))
    raise MalformedInputError(f"unknown hull kind {kind!r}")


def _csv(header: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header.split(","))
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _driving_rows(lam: DrivingFunction):
    return zip(lam.times, lam.values)


# ---------------------------------------------------------------------------
# commands; each returns (results, csv rows or None)


def _cmd_energy(cfg: RunConfig, p: dict, base: Path):
    lam = _driving(_need(p, "driving"), base)
    T = float(p.get("T", lam.horizon))
    rep = energy(lam, T)
    m, h = lam.segments(T) if T > 0 else (np.zeros(0), np.zeros(0))
    knots = np.concatenate([[0.0], np.cumsum(h)])
    rows = zip(knots[:-1], knots[1:], rep.per_interval)
    return {"energy": rep.total, "horizon": rep.horizon}, rows


def _cmd_trace(cfg, p, base):
    from .flow import hcap, trace

    lam = _driving(_need(p, "driving"), base)
    T = float(p.get("T", lam.horizon))
    res = cfg.resolution or float(p.get("resolution", 1e-3))
    cs = trace(lam, T, res)
    return {"hcap": hcap(cs, check=False), "samples": int(cs.times.size), "tip": [cs.points[-1].real, cs.points[-1].imag]}, zip(
        cs.times, cs.points.real, cs.points.imag
    )


def _cmd_invert(cfg, p, base):
    from .inverse import inverse_transform

    spec = _need(p, "curve")
    if isinstance(spec, dict) and "file" in spec:
        from .flow import CurveSample

        cs = CurveSample.from_csv((base / spec["file"]).read_text())
        pts = cs.points
    else:
        pts = np.array([complex(x, y) for x, y in spec])
    lam = inverse_transform(pts)
    return {"energy": energy(lam).total, "horizon": lam.horizon, "final_value": float(lam.values[-1])}, _driving_rows(lam)


DEFAULT_LEVELS = [[3e-2, 1.0], [1e-2, 10.0], [3e-3, 30.0], [1e-3, 100.0]]


def _cmd_reverse_check(cfg, p, base):
    from .inverse import convergence_table

    lam = _driving(_need(p, "driving"), base)
    T = float(p.get("T", lam.horizon))
    levels = p.get("levels", DEFAULT_LEVELS)
    if cfg.resolution is not None:
        levels = [lv for lv in levels if lv[0] >= cfg.resolution] or [[cfg.resolution, levels[-1][1]]]
    rows = convergence_table(lam, T, levels)
    tol = cfg.tolerance if cfg.tolerance is not None else 0.02
    errs = [r["rel_err"] for r in rows]
    res = {
        "energy_fwd": rows[0]["energy_fwd"],
        "table": rows,
        "final_rel_err": errs[-1],
        "within_tolerance": bool(errs[-1] <= tol),
        "monotone": bool(all(b < a for a, b in zip(errs, errs[1:]))),
    }
    keys = ["resolution", "tail_capacity", "energy_fwd", "energy_rev", "rel_err"]
    return res, ([r[k] for k in keys] for r in rows)


def _cmd_minimizer(cfg, p, base):
    from .minimizers import minimal_energy, one_point_minimizer

    theta = float(_need(p, "theta"))
    step = cfg.resolution or float(p.get("step", 1e-3))
    r = one_point_minimizer(theta, step=step)
    res = {
        "energy": r.energy,
        "reference": minimal_energy(theta),
        "hitting_times": list(r.to_dict()["hitting_times"]),
    }
    return res, _driving_rows(r.driving)


def _cmd_constrained(cfg, p, base):
    from .minimizers import minimize_constrained

    cs = _points(_need(p, "points"))
    T = p.get("T")
    r = minimize_constrained(cs, None if T is None else float(T), knots=int(p.get("knots", 64)))
    d = r.to_dict()
    d.pop("driving")
    return d, _driving_rows(r.driving)


def _passage_config(p):
    from .sle import PassageConfig

    keys = PassageConfig.__dataclass_fields__
    return PassageConfig(**{k: v for k, v in p.get("passage", {}).items() if k in keys})


def _cmd_passage(cfg, p, base):
    from .sle import estimate_passage

    cs = _points(_need(p, "points"))
    kappa = float(_need(p, "kappa"))
    n = cfg.samples or int(p.get("samples", 10_000))
    T = p.get("T")
    est = estimate_passage(kappa, cs, None if T is None else float(T), n_samples=n, seed=cfg.seed, config=_passage_config(p))
    d = est.to_dict()
    rows = [(i, z.real, z.imag, s) for i, (z, s) in enumerate(cs.points)]
    return d, rows


def _cmd_ld_rate(cfg, p, base):
    from .sle import ld_rate

    kappas = [float(k) for k in _need(p, "kappas")]
    mode = p.get("mode", "quadrature")
    theta = p.get("theta")
    cs = _points(p["points"]) if "points" in p else None
    rows = ld_rate(
        kappas,
        constraints=cs,
        theta=None if theta is None else float(theta),
        side=int(p.get("side", -1)),
        mode=mode,
        n_samples=cfg.samples or int(p.get("samples", 100_000)),
        seed=cfg.seed,
        config=_passage_config(p),
    )
    out = [[r.kappa, r.rate, r.reference, r.bound, r.half_width if r.half_width is not None else ""] for r in rows]
    res = {"rows": [dict(zip(["kappa", "rate", "reference", "bound", "half_width"], r)) for r in out]}
    if rows:
        res["final_gap"] = abs(rows[-1].rate - rows[-1].reference)
    return res, out


def _cmd_restriction(cfg, p, base):
    from .restriction import image_curve_energy, restriction_identity

    K = _hull(_need(p, "hull"))
    lam = _driving(p.get("driving", {"times": [0.0, 1.0], "values": [0.0, 0.0]}), base)
    times = [float(t) for t in p.get("times", [lam.horizon])]
    n = cfg.samples or int(p.get("boundary_samples", 400))
    tol = cfg.tolerance if cfg.tolerance is not None else 0.02
    reps = [restriction_identity(K, lam, t, nodes=int(p.get("nodes", 32)), n=n) for t in times]
    res = {"reports": [r.to_dict() for r in reps]}
    if p.get("zipper_check", True):
        zres = cfg.resolution or float(p.get("resolution", 1e-3))
        z = image_curve_energy(K, lam, times[-1], zres, n)
        ref = reps[-1].schwarzian_form
        rel = abs(z - ref) / max(abs(z), abs(ref), 1e-300)
        res["zipper_energy"] = z
        res["zipper_rel_diff"] = rel
        res["within_tolerance"] = bool(rel <= tol)
    rows = [(r.t, r.driving_form, r.schwarzian_form, r.residual) for r in reps]
    return res, rows


def _cmd_commute(cfg, p, base):
    from .restriction import TwoSlitConfig, commutation_check

    W = _driving(_need(p, "W"), base)
    U = _driving(_need(p, "U"), base)
    T = float(p.get("T", W.horizon))
    S = float(p.get("S", U.horizon))
    resolutions = p.get("resolutions", [cfg.resolution or 2e-3])
    tol = cfg.tolerance if cfg.tolerance is not None else 0.02
    out, rows = [], []
    for r in resolutions:
        c = commutation_check(TwoSlitConfig(W, U, T, S, resolution=float(r), nodes=int(p.get("nodes", 32))))
        d = c.to_dict()
        d["resolution"] = float(r)
        out.append(d)
        rows.append((T, c.lhs, c.rhs, c.residual, float(r)))
    last = out[-1]
    rel = abs(last["residual"]) / max(abs(last["lhs"]), abs(last["rhs"]), 1e-300)
    return {"levels": out, "relative_residual": rel, "within_tolerance": bool(rel <= tol)}, rows


def _cmd_welding(cfg, p, base):
    from .flow import welding

    lam = _driving(_need(p, "driving"), base)
    T = float(p.get("T", lam.horizon))
    grid = p.get("grid")
    if grid is None:
        grid = list(np.linspace(0.05, 1.0, int(p.get("n", 20))))
    w = welding(lam, T, [float(x) for x in grid])
    rows = zip(w.x_pos, w.x_neg, w.curve_time, w.on_curve, w.ratio_1, w.ratio_2)
    fin = np.isfinite(w.ratio_2)
    res = {
        "pairs": int(w.x_pos.size),
        "ratio_1_range": [float(np.min(w.ratio_1)), float(np.max(w.ratio_1))],
        "ratio_2_range": [float(np.min(w.ratio_2[fin])), float(np.max(w.ratio_2[fin]))] if fin.any() else None,
    }
    return res, rows


HANDLERS = {
    "energy": _cmd_energy,
    "trace": _cmd_trace,
    "invert": _cmd_invert,
    "reverse-check": _cmd_reverse_check,
    "minimizer": _cmd_minimizer,
    "constrained-min": _cmd_constrained,
    "sle-passage": _cmd_passage,
    "ld-rate": _cmd_ld_rate,
    "restriction": _cmd_restriction,
    "commute": _cmd_commute,
    "welding": _cmd_welding,
}


# ---------------------------------------------------------------------------
# driver


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _version() -> str:
    try:
        return _md.version("artifact")
    except _md.PackageNotFoundError:
        return "unknown"


def run(config: RunConfig, base: Path | None = None) -> int:
    """Execute one command; returns the exit status."""
    from .sle import set_threads_from_env

    set_threads_from_env()
    base = Path(".") if base is None else base
    out = Path(config.out)
    started = time.time()
    try:
        results, rows = HANDLERS[config.command](config, config.params, base)
        status, error = EXIT_OK, None
    except MalformedInputError as exc:
        status, error, results, rows = EXIT_USAGE, exc, None, None
    except (DomainError, GeometryError) as exc:
        status, error, results, rows = EXIT_DOMAIN, exc, None, None
    except NumericalAccuracyError as exc:
        status, error, results, rows = EXIT_ACCURACY, exc, None, None
    except LoewnerLabError as exc:
        status, error, results, rows = EXIT_DOMAIN, exc, None, None
    except (OSError, KeyError, TypeError, ValueError) as exc:
        status, error, results, rows = EXIT_USAGE, exc, None, None
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": config.command,
        "config": config.resolved(),
        "status": status,
        "results": results,
    }
    if error is not None:
        summary["error"] = {"type": type(error).__name__, "message": str(error)}
    stem = config.command
    (out / f"{stem}.json").write_text(_dump(summary))
    if rows is not None:
        (out / f"{stem}.csv").write_text(_csv(COMMANDS[stem][1], rows))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "wall_seconds": time.time() - started,
        "version": _version(),
    }
    (out / f"{stem}.meta.json").write_text(_dump(meta))
    if error is not None:
        print(f"loewner-lab {stem}: {type(error).__name__}: {error}", file=sys.stderr)
    elif not config.quiet:
        print(f"loewner-lab {stem}: wrote {out / (stem + '.json')}")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="loewner-lab",
        description="Loewner chains, Loewner energy and SLE large deviations.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (desc, cols) in COMMANDS.items():
        sp = sub.add_parser(
            name,
            help=desc,
            description=f"{desc}\nCSV columns: {cols}\nAngles in radians, times in capacity time (hcap = 2t).",
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        sp.add_argument("--config", help="JSON run file with the command parameters")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--seed", type=int, help="unsigned 64-bit seed (mandatory for stochastic commands)")
        sp.add_argument("--tolerance", type=float, help="pass threshold reported in the summary")
        sp.add_argument("--resolution", type=float, help="capacity-time resolution")
        sp.add_argument("--samples", type=int, help="Monte Carlo paths or hull boundary samples")
        sp.add_argument("--quiet", action="store_true", help="no progress output")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        params, base = {}, Path(".")
        if args.config:
            path = Path(args.config)
            try:
                params = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read run file: {exc}") from exc
            if not isinstance(params, dict):
                raise UsageError("run file must hold a JSON object")
            base = path.parent
        params.pop("command", None)
        generic = {k: params.pop(k, None) for k in ("seed", "tolerance", "resolution", "samples")}

        def pick(key, cast):
            v = getattr(args, key)
            v = generic[key] if v is None else v
            return None if v is None else cast(v)

        try:
            cfg = RunConfig(
                args.command,
                params,
                args.out,
                pick("seed", int),
                pick("tolerance", float),
                pick("resolution", float),
                pick("samples", int),
                args.quiet,
            )
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad generic parameter: {exc}") from exc
    except UsageError as exc:
        print(f"loewner-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg, base)


if __name__ == "__main__":
    sys.exit(main())
