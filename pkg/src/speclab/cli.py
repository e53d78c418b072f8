"""Command line entry point: ``speclab <subcommand> [flags]``.

Every subcommand accepts ``--config PATH.toml`` whose keys mirror the long
flags (dashes or underscores); explicit flags win over the file. Results go to
``--out`` (stdout when absent) and a manifest JSON is written next to the
output file. Exit status is 0 on success, 2 on validation errors and 3 on
numerical failures; the error code is printed on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy
import tomli

from . import __version__
from .bounds import BoundReport, constants_table, steklov_bound_check
from .disk import (FourierDensity, concentrating_density, density_from_mobius,
                   random_smooth_density, steklov_eigenvalues)
from .errors import InvalidParameter, SpeclabError
from .geometry import (DEFAULT_SEED, PointMeasure, RadialWeight, ball_volume, check_dimension,
                       equator_energy, sphere_area)
from .maps import (CenteringProblem, HalfSpaceParams, doubled_ball_samples, solve_centering,
                   solve_centering_fold, two_ball_comparison, two_ball_samples)
from .radial import GridSpec, ball_weighted_neumann, richardson_limit

FLOAT_FORMAT = "%.12e"


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def write_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json_value(value):
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_value(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(v) for v in value) + "]"
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return json.dumps(str(float(value)))
        return FLOAT_FORMAT % value
    return json.dumps(value)


def write_json(obj):
    """JSON text with floats in fixed 12-digit scientific notation."""
    return _json_value(obj) + "\n"


def _float_list(text, name):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidParameter(f"--{name} expects comma-separated numbers, got {text!r}") from None


def _parse_bumps(text):
    centers, masses = [], []
    for item in str(text).split(","):
        try:
            theta, mass = item.split(":")
            centers.append(float(theta))
            masses.append(float(mass))
        except ValueError:
            raise InvalidParameter(f"bump {item!r} must look like THETA:MASS") from None
    return centers, masses


def _threads():
    raw = os.environ.get("SPECLAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParameter(f"SPECLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidParameter("SPECLAB_THREADS must be >= 1")
    return n


def parallel_map(fn, items):
    """Apply ``fn`` to each item on a thread pool; results stay in input order."""
    items = list(items)
    workers = min(_threads(), max(len(items), 1))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---- subcommands: each returns (text, diagnostics) ----


def cmd_radial(args):
    d = check_dimension(args.dim, 3)
    weight = RadialWeight.from_name(args.weight, args.scale)
    grid = GridSpec(args.grid, args.delta, args.gamma)
    spec = ball_weighted_neumann(d, weight, args.k, grid, args.lmax)
    rows = [(k, e.value, e.sector_ell, e.multiplicity, e.localized) for k, e in spec.rows()]
    text = write_csv(["k", "value", "sector_ell", "multiplicity", "essential_flag"], rows)
    diag = {"mass": spec.mass, "essential_spectrum": spec.essential_flag,
            "essential_estimate": spec.essential_estimate}
    return text, diag


def _disk_density(args):
    sources = [args.density is not None, args.mobius is not None, args.bumps is not None]
    if sum(sources) != 1:
        raise InvalidParameter("give exactly one of --density, --mobius, --bumps")
    if args.density is not None:
        return FourierDensity.from_json(Path(args.density).read_text(encoding="utf-8"))
    if args.mobius is not None:
        vals = _float_list(args.mobius, "mobius")
        if len(vals) != 2:
            raise InvalidParameter("--mobius expects RE,IM")
        return density_from_mobius(complex(*vals), 2 * args.modes)
    if args.epsilon is None:
        raise InvalidParameter("--bumps needs --epsilon")
    centers, masses = _parse_bumps(args.bumps)
    return concentrating_density(centers, masses, args.epsilon, args.profile)


def cmd_disk(args):
    rho = _disk_density(args)
    spec = steklov_eigenvalues(rho, args.k, args.modes)
    rows = [(k, s, s * spec.mass, spec.mass, spec.truncation) for k, s in enumerate(spec.entries)]
    return write_csv(["k", "sigma", "sigma_bar", "mass", "modes"], rows), {"density_order": rho.M}


def _read_phi1(path, n):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["phi1"]:
        raise InvalidParameter(f"{path}: header must be phi1")
    try:
        vals = np.array([float(r[0]) for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InvalidParameter(f"{path}: {exc}") from None
    if vals.size != n:
        raise InvalidParameter(f"{path}: expected {n} values, got {vals.size}")
    return vals


def cmd_center(args):
    if not args.radius > 0:
        raise InvalidParameter("--radius must be positive")
    mu = PointMeasure.from_csv(args.measure)
    if args.fold:
        phi1 = None if args.phi1 is None else _read_phi1(args.phi1, len(mu))
        problem = CenteringProblem(mu, args.radius, phi1)
        res = solve_centering_fold(problem)
        d = mu.dim
        out = {"c": res.x[:d], "p": res.x[d:], "residual": res.residual}
    else:
        if args.phi1 is not None:
            raise InvalidParameter("--phi1 only applies with --fold")
        res = solve_centering(mu, args.radius)
        out = {"c": res.x, "p": None, "residual": res.residual}
    return write_json(out), {"iterations": res.iterations, "start_index": res.start_index,
                             "residual": res.residual}


def _foldcheck_cases(args):
    d = args.dim
    if args.case:
        return args.case
    generic = [0.0] * d
    generic[0], generic[1] = 0.3, 0.2
    return [{"kind": "two-ball", "separation": 3.0},
            {"kind": "doubled-ball"},
            {"kind": "doubled-ball", "p": generic}]


def _foldcheck_one(d, case, samples, seed):
    kind = case.get("kind")
    if kind == "two-ball":
        pts, w, params = two_ball_samples(d, float(case.get("separation", 3.0)), samples, seed)
    elif kind == "doubled-ball":
        pts, w = doubled_ball_samples(d, samples, seed)
        p = case.get("p")
        if p is not None and len(p) != d:
            raise InvalidParameter(f"fold vector p must have {d} entries")
        params = None if p is None else HalfSpaceParams.from_ball(p, 2.0 ** (1.0 / d))
    else:
        raise InvalidParameter(f"unknown foldcheck case kind {kind!r}")
    return two_ball_comparison(pts, w, params)


def cmd_foldcheck(args):
    d = check_dimension(args.dim, 3)
    if args.samples < 2:
        raise InvalidParameter("--samples must be >= 2")
    cases = _foldcheck_cases(args)
    results = parallel_map(lambda c: _foldcheck_one(d, c, args.samples, args.seed), cases)
    rows = [(i, c.get("kind"), r.lhs, r.rhs, r.stderr, r.holds()) for i, (c, r) in enumerate(zip(cases, results))]
    return write_csv(["case", "kind", "lhs", "rhs", "stderr", "holds"], rows), {"samples": args.samples}


def _bounds_from_input(args):
    with open(args.input, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidParameter(f"{args.input}: no rows")
    if "sigma_bar" in rows[0]:
        values = {int(r["k"]): float(r["sigma_bar"]) for r in rows}
        if args.k not in values:
            raise InvalidParameter(f"{args.input}: no row for k={args.k}")
        return BoundReport.make(values[args.k], 2 * math.pi * args.k, True, args.k, 2, "steklov")
    if "value" in rows[0]:
        d = check_dimension(args.dim, 3)
        mass = args.mass if args.mass is not None else RadialWeight.from_name(args.weight, args.scale).total_mass(d)
        table = sorted((int(r["k"]), float(r["value"]), int(r["multiplicity"])) for r in rows)
        for start, value, mult in table:
            if start <= args.k < start + mult:
                return BoundReport.make(mass * value, args.k * equator_energy(d), d >= 7, args.k, d, "neumann")
        raise InvalidParameter(f"{args.input}: no eigenvalue with index {args.k}")
    raise InvalidParameter(f"{args.input}: expected a radial or disk spectrum CSV")


def cmd_bounds(args):
    if args.table:
        rows = constants_table(args.dmin, args.dmax)
        return write_csv(["d", "k", "constant"], rows), {}
    if args.dim is None or args.k is None:
        raise InvalidParameter("bounds needs --dim and --k (or --table)")
    if args.input is not None:
        report = _bounds_from_input(args)
    elif args.dim == 2:
        rho = FourierDensity.constant()
        report = steklov_bound_check(args.k, steklov_eigenvalues(rho, args.k, max(64, args.k + 2)))
    else:
        d = check_dimension(args.dim, 3)
        # k disjoint unit balls: sigma_k = 1
        report = steklov_bound_check(args.k, d=d, sigma=1.0, boundary_area=args.k * sphere_area(d),
                                     volume=args.k * ball_volume(d))
    return write_json(report.to_dict()), {}


def _sweep_task(args):
    kind = args.kind
    if kind == "epsilon":
        k = args.k
        centers = [2 * math.pi * i / k for i in range(k)]

        def task(eps):
            rho = concentrating_density(centers, [1.0] * k, eps, args.profile)
            s = steklov_eigenvalues(rho, k, args.modes)
            sb = s.entries[k] * s.mass
            return (eps, k, sb, 2 * math.pi * k, 2 * math.pi * k - sb)

        header = ["epsilon", "k", "sigma_bar", "bound", "margin"]
        return header, task, _float_list(args.values, "values")
    if kind == "mobius":
        def task(r):
            s = steklov_eigenvalues(density_from_mobius(complex(r, 0.0), 2 * args.modes), 1, args.modes)
            sb = s.entries[1] * s.mass
            return (r, sb, 2 * math.pi - sb)

        return ["abs_a", "sigma_bar", "margin"], task, _float_list(args.values, "values")
    if kind == "weinstock":
        seeds = np.random.SeedSequence(args.seed).spawn(args.count)

        def task(ss):
            rng = np.random.default_rng(ss)
            rho = random_smooth_density(rng, order=int(rng.integers(1, 9)))
            s = steklov_eigenvalues(rho, 1, args.modes)
            sb = s.entries[1] * s.mass
            return (rho.M, sb, 2 * math.pi - sb)

        return ["order", "sigma_bar", "margin"], task, seeds
    if kind == "radial-grid":
        d = check_dimension(args.dim, 3)
        weight = RadialWeight.from_name(args.weight, args.scale)

        def task(n):
            spec = ball_weighted_neumann(d, weight, 1, GridSpec(int(n), args.delta, args.gamma), args.lmax)
            return (int(n), spec.value(1), spec.normalized(1))

        return ["grid", "lambda1", "lambda1_bar"], task, [int(v) for v in _float_list(args.values, "values")]
    raise InvalidParameter(f"unknown sweep kind {kind!r}")


def cmd_sweep(args):
    if args.values is None and args.kind in ("epsilon", "mobius", "radial-grid"):
        raise InvalidParameter(f"sweep kind {args.kind} needs --values")
    header, task, items = _sweep_task(args)
    results = parallel_map(task, items)
    rows = [(i,) + tuple(r) for i, r in enumerate(results)]
    diag = {}
    if args.kind == "radial-grid" and len(results) >= 3:
        limit, ratio = richardson_limit([r[1] for r in results])
        diag = {"richardson_limit": limit, "contraction": ratio}
    return write_csv(["index"] + header, rows), diag


# ---- argument parsing ----


def build_parser():
    parser = argparse.ArgumentParser(prog="speclab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"speclab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML file with defaults for the flags below")
        p.add_argument("--out", help="output path (stdout if omitted)")
        p.add_argument("--manifest", help="manifest path (default: OUT.manifest.json)")
        p.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
        return p

    p = common(sub.add_parser("radial", help="weighted Neumann spectrum of the unit ball"))
    p.add_argument("--dim", type=int)
    p.add_argument("--weight", default="inv-square", choices=["inv-square", "constant"])
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--lmax", type=int, default=4)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_radial, required=["dim"])

    p = common(sub.add_parser("disk", help="weighted Steklov spectrum of the unit disk"))
    p.add_argument("--density")
    p.add_argument("--mobius")
    p.add_argument("--bumps")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--profile", default="poisson", choices=["poisson", "gaussian"])
    p.add_argument("--modes", type=int, default=256)
    p.add_argument("--k", type=int, default=4)
    p.set_defaults(func=cmd_disk, required=[])

    p = common(sub.add_parser("center", help="roots of the centering maps"))
    p.add_argument("--measure")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--phi1")
    p.add_argument("--fold", action="store_true", default=None)
    p.set_defaults(func=cmd_center, required=["measure"])

    p = common(sub.add_parser("foldcheck", help="folded equator-map energy against two balls"))
    p.add_argument("--dim", type=int)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.set_defaults(func=cmd_foldcheck, required=["dim"], case=None)

    p = common(sub.add_parser("bounds", help="sharp constants and margin reports"))
    p.add_argument("--dim", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--input")
    p.add_argument("--weight", default="inv-square", choices=["inv-square", "constant"])
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--mass", type=float)
    p.add_argument("--table", action="store_true", default=None)
    p.add_argument("--dmin", type=int, default=3)
    p.add_argument("--dmax", type=int, default=12)
    p.set_defaults(func=cmd_bounds, required=[])

    p = common(sub.add_parser("sweep", help="parallel parameter sweeps"))
    p.add_argument("--kind", choices=["epsilon", "mobius", "weinstock", "radial-grid"])
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--modes", type=int, default=512)
    p.add_argument("--profile", default="poisson", choices=["poisson", "gaussian"])
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--weight", default="inv-square", choices=["inv-square", "constant"])
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-12)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--lmax", type=int, default=2)
    p.set_defaults(func=cmd_sweep, required=["kind"])
    return parser


def _load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise InvalidParameter(f"cannot read config {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise InvalidParameter(f"malformed config {path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in data.items()}


def _apply_config(parser, args, argv):
    """Fill flags not given on the command line from the TOML file."""
    config = _load_config(args.config)
    given = set()
    for tok in argv:
        if tok.startswith("--"):
            given.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, value in config.items():
        if key in given or key in ("config", "func", "command"):
            continue
        if not hasattr(args, key):
            raise InvalidParameter(f"config key {key!r} is not a flag of {args.command}")
        setattr(args, key, value)
    return args


def parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        args = _apply_config(parser, args, argv)
    for name in args.required:
        if getattr(args, name) is None:
            raise InvalidParameter(f"--{name} is required")
    return args


def _manifest(args, argv, wall, diagnostics):
    inputs = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "required")}
    return {
        "command": args.command,
        "argv": list(argv),
        "inputs": inputs,
        "versions": {"speclab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "threads": _threads(),
        "wall_time_s": wall,
        "diagnostics": diagnostics,
    }


def run(argv=None, stdout=None, stderr=None):
    """Execute one command line; returns the process exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = parse(argv)
        start = time.perf_counter()
        text, diagnostics = args.func(args)
        wall = time.perf_counter() - start
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            stdout.write(text)
        manifest_path = args.manifest or (f"{args.out}.manifest.json" if args.out else None)
        if manifest_path:
            Path(manifest_path).write_text(
                json.dumps(_manifest(args, argv, wall, diagnostics), indent=2, default=_jsonable) + "\n",
                encoding="utf-8")
    except SpeclabError as err:
        print(str(err), file=stderr)
        return err.exit_status
    except OSError as err:
        print(f"invalid-parameter: {err}", file=stderr)
        return 2
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    return 0


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def main():
    sys.exit(run())
