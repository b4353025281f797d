"""Batch driver: ``cliffmoll <verb> [flags]``.

Every run resolves a single :class:`ExperimentConfig` (built-in defaults, then
an optional JSON file given by ``--config``, then command-line flags, which
win), validates it, computes, and only then writes its outputs: CSV tables
whose first line is a ``#`` comment describing the run, CLF1 fields, and the
resolved ``config.json``.  Nothing is written when validation fails.

Exit status: 0 on success, 1 when a check fails or a module raises, 2 on bad
usage or input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import GradientPotential, Multivector, conj_array, gp
from .alexander import alexander_check
from .dirac import CalibrationError, DiracConfig, annulus_residual, calibrate_kernel, kernel_vectors
from .grid import (Ball, CliffordField, Domain, EmptyDomainError, FieldFormatError, ball_domain,
                   boundary_mesh, box_domain, build_grid, grid_for_domain, read_field, sample_field,
                   write_field)
from .integrals import borel_pompeiu_residual, boundary_data, solve_bvp, solve_nhbvp
from .mollify import (SmoothApproxError, UnderResolvedError, global_smooth_approx, kernel_constant,
                      make_kernel, mollify_clifford)
from .norms import StencilError

VERBS = ("mollify", "smooth-approx", "solve-bvp", "solve-nhbvp", "verify", "convergence", "alexander")
SUITES = ("algebra", "mollifier-mass", "fundamental-solution", "borel-pompeiu", "alexander")
STUDIES = ("fundamental-solution", "borel-pompeiu", "bvp", "nhbvp")

# int_{|x|<1} exp(1/(|x|^2-1)) dx, 30-digit mpmath quadrature
BUMP_INTEGRALS = {
    1: 0.443993816168079437823,
    2: 0.466512393178330068880,
    3: 0.4410888872766044004563,
}


class UsageError(ValueError):
    """Invalid configuration or missing input; exits with status 2."""


# -- configuration -------------------------------------------------------------


@dataclass
class ExperimentConfig:
    command: str
    n: int = 2
    domain: str = "ball:1"
    res: int = 128
    mesh: int | None = None
    eps: list = dc_field(default_factory=lambda: [0.2, 0.1, 0.05])
    gamma: list | None = None
    p: float = 2.0
    k: int = 1
    beta: float = 0.1
    seed: int = 0
    out_dir: str = "out"
    input: str | None = None
    field: str | None = None
    rhs: str | None = None
    reference: str | None = None
    suite: str | None = None
    study: str | None = None
    levels: list | None = None
    radii: list = dc_field(default_factory=lambda: [0.5, 1.0, 2.0])
    margin: float | None = None
    layers: int | None = None

    def potential(self) -> GradientPotential:
        if self.gamma is None:
            return GradientPotential.zero(self.n)
        if len(self.gamma) != self.n:
            raise UsageError(f"--gamma needs {self.n} coefficients, got {len(self.gamma)}")
        return GradientPotential(self.gamma)

    def describe(self) -> str:
        """Deterministic one-line summary for CSV headers."""
        items = {k: v for k, v in asdict(self).items() if v is not None and k != "out_dir"}
        return " ".join(f"{k}={_text(v)}" for k, v in items.items())


def _text(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_text(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings; flags override it")
    common.add_argument("--n", type=int)
    common.add_argument("--domain", help="ball:<r> or box:<lo>:<hi> (lo, hi scalar or comma lists)")
    common.add_argument("--res", type=int, help="grid points per axis")
    common.add_argument("--mesh", type=int, help="boundary elements")
    common.add_argument("--gamma", type=_floats, help="potential coefficients c1,...,cn")
    common.add_argument("--p", type=float)
    common.add_argument("--k", type=int)
    common.add_argument("--beta", type=float)
    common.add_argument("--eps", type=_floats, help="comma-separated kernel widths")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--margin", type=float, help="interior margin for solver reports")

    parser = argparse.ArgumentParser(prog="cliffmoll", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    names = ", ".join(sorted(FIELDS))

    p = sub.add_parser("mollify", parents=[common], help="regularize a field for a sweep of eps")
    p.add_argument("--field", help=f"named analytic field ({names})")
    p.add_argument("--input", help="CLF1 field file")

    p = sub.add_parser("smooth-approx", parents=[common], help="layered global smooth approximation")
    p.add_argument("--field", help=f"named analytic field ({names})")
    p.add_argument("--input", help="CLF1 field file")
    p.add_argument("--layers", type=int, help="number of layers (default: finest the grid resolves)")

    helps = {"solve-bvp": "boundary value problem D_gamma f = 0, tr f = data",
             "solve-nhbvp": "boundary value problem D_gamma f = rhs, tr f = data"}
    for verb, text in helps.items():
        p = sub.add_parser(verb, parents=[common], help=text)
        p.add_argument("--field", help="boundary data, a named field")
        p.add_argument("--reference", help="named exact solution to compare against")
        if verb == "solve-nhbvp":
            p.add_argument("--rhs", help="right-hand side, a named field")

    p = sub.add_parser("verify", parents=[common], help="run a named check suite")
    p.add_argument("--suite", help=", ".join(SUITES))
    p.add_argument("--radii", type=_floats)

    p = sub.add_parser("convergence", parents=[common], help="refinement study")
    p.add_argument("--study", help=", ".join(STUDIES))
    p.add_argument("--levels", type=_ints, help="resolutions (1/h for fundamental-solution)")
    p.add_argument("--field", help="boundary data for the bvp study")

    p = sub.add_parser("alexander", parents=[common], help="distance-to-regular scaling sweep")
    p.add_argument("--radii", type=_floats)
    p.add_argument("--rhs", help="right-hand side, a named field")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(loaded)
    for key, val in vars(args).items():
        if key in known and key != "config" and val is not None:
            values[key] = val
    values["command"] = args.command
    return ExperimentConfig(**values)


def parse_domain(spec: str, n: int) -> Domain:
    parts = spec.split(":")
    try:
        if parts[0] == "ball" and len(parts) == 2:
            return ball_domain(np.zeros(n), float(parts[1]))
        if parts[0] == "box" and len(parts) == 3:
            lo = np.broadcast_to(np.array(_floats(parts[1])), (n,))
            hi = np.broadcast_to(np.array(_floats(parts[2])), (n,))
            return box_domain(lo, hi)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise UsageError(f"bad domain {spec!r}: {exc}") from exc
    raise UsageError(f"bad domain {spec!r}; expected ball:<r> or box:<lo>:<hi>")


# -- named analytic fields -------------------------------------------------------


def _zeros(x, n):
    return np.zeros(x.shape[:-1] + (1 << n,))


def _f_const(x, n, c):
    out = _zeros(x, n)
    out[..., 0] = 1.0
    return out


def _f_zero(x, n, c):
    return _zeros(x, n)


def _f_sin1(x, n, c):
    out = _zeros(x, n)
    out[..., 0] = np.sin(x[..., 0])
    return out


def _f_abs1sin2(x, n, c):
    out = _zeros(x, n)
    out[..., 0] = np.abs(x[..., 0])
    out[..., 1] = np.sin(x[..., 1])
    return out


def _f_bp(x, n, c):
    out = _zeros(x, n)
    out[..., 0] = x[..., 0]
    out[..., 3] = np.cos(x[..., 1])
    return out


def _f_expgamma(x, n, c):
    out = _zeros(x, n)
    out[..., 0] = np.exp(x @ np.asarray(c))
    return out


def _f_vector(x, n, c):
    out = _zeros(x, n)
    for j in range(n):
        out[..., 1 << j] = x[..., j]
    return out


# name -> (function of points, n and c; smallest n)
FIELDS = {
    "zero": (_f_zero, 1),
    "const": (_f_const, 1),
    "sin1": (_f_sin1, 1),
    "vector": (_f_vector, 1),
    "abs1sin2": (_f_abs1sin2, 2),
    "bp": (_f_bp, 2),
    "expgamma": (_f_expgamma, 1),
}

# source of the "kernel" field, outside the unit ball
KERNEL_SOURCE = (1.5, 0.5, 0.25)


def named_field(name: str, n: int, c, cfg: DiracConfig | None = None):
    """Vectorized expression for a named field; ``kernel`` needs a kernel config."""
    if name == "kernel":
        if cfg is None:
            raise UsageError("the kernel field needs a calibrated kernel")
        x0 = np.array(KERNEL_SOURCE[:n] + (0.0,) * max(0, n - 3))

        def expr(x):
            out = _zeros(x, n)
            v = kernel_vectors(x - x0, cfg)
            for j in range(n):
                out[..., 1 << j] = v[..., j]
            return out
        return expr
    if name not in FIELDS:
        raise UsageError(f"unknown field {name!r}; choose from {', '.join(sorted(FIELDS) + ['kernel'])}")
    fn, min_n = FIELDS[name]
    if n < min_n:
        raise UsageError(f"field {name!r} needs n >= {min_n}")
    c = tuple(c)
    return lambda x: fn(np.asarray(x, dtype=float), n, c)


# -- output ----------------------------------------------------------------------


@dataclass
class Table:
    name: str
    columns: list
    rows: list = dc_field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(table: Table, cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# cliffmoll {__version__} table={table.name} {cfg.describe()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(row.get(c, "")) for c in table.columns])
    return buf.getvalue()


@dataclass
class Outputs:
    tables: list = dc_field(default_factory=list)
    fields: dict = dc_field(default_factory=dict)   # file name -> CliffordField
    ok: bool = True
    message: str = ""


def write_outputs(out: Outputs, cfg: ExperimentConfig) -> list[Path]:
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for t in out.tables:
        path = root / f"{t.name}.csv"
        path.write_text(render_csv(t, cfg))
        written.append(path)
    for name, f in out.fields.items():
        path = root / name
        write_field(f, path)
        written.append(path)
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    written.append(cfg_path)
    return written


# -- shared helpers ----------------------------------------------------------------


def _order(errors, hs) -> list[float]:
    """Observed orders between consecutive levels; nan for the first."""
    out = [math.nan]
    for (e0, h0), (e1, h1) in zip(zip(errors, hs), zip(errors[1:], hs[1:])):
        ok = e0 > 0 and e1 > 0
        out.append(math.log(e0 / e1) / math.log(h0 / h1) if ok else math.nan)
    return out


def _slope(xs, ys) -> float:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if len(xs) < 2 or np.any(ys <= 0):
        return math.nan
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _load_input(cfg: ExperimentConfig, domain: Domain, grid_pad: float):
    """The field to process and, for named fields, its exact expression."""
    if cfg.input and cfg.field:
        raise UsageError("give either --input or --field, not both")
    if cfg.input:
        f = read_field(cfg.input)
        if f.n != cfg.n:
            raise UsageError(f"input field has n={f.n}, config has n={cfg.n}")
        return CliffordField(f.grid, f.data, f.mask & domain.mask(f.grid)), None
    expr = named_field(cfg.field or "sin1", cfg.n, cfg.potential().c)
    lo, hi = domain.bounds()
    grid = build_grid(lo - grid_pad, hi + grid_pad, cfg.res)
    return sample_field(expr, grid, domain, vectorized=True), expr


def _default_mesh(cfg: ExperimentConfig, domain: Domain, h: float) -> int:
    if cfg.mesh:
        return cfg.mesh
    if cfg.n == 2 and isinstance(domain, Ball):
        return 4 * cfg.res
    if isinstance(domain, Ball):
        return max(64, int(round(domain.surface_measure() / h**2)))
    lo, hi = domain.bounds()
    return 4 * cfg.res if cfg.n == 2 else max(64, int(round(2 * cfg.n * float(np.max(hi - lo)) ** 2 / h**2)))


def _check_files(cfg: ExperimentConfig) -> None:
    if cfg.input and not Path(cfg.input).is_file():
        raise UsageError(f"input file not found: {cfg.input}")


# -- commands -----------------------------------------------------------------------


def cmd_mollify(cfg: ExperimentConfig) -> Outputs:
    domain = parse_domain(cfg.domain, cfg.n)
    f, expr = _load_input(cfg, domain, grid_pad=0.1 * float(np.max(np.ptp(domain.bounds(), axis=0))))
    eps = sorted(cfg.eps, reverse=True)
    if not eps:
        raise UsageError("--eps needs at least one width")
    table = Table("mollify", ["eps", "nodes", "sup_error", "l2_error", "order", "sup_error_common"])
    exact = None if expr is None else expr(f.grid.nodes())
    results = [mollify_clifford(f, e, domain) for e in eps]
    # Omega_eps for the widest kernel lies inside every other one
    common = results[0].mask
    errs = []
    for e, g in zip(eps, results):
        row = dict(eps=e, nodes=int(g.mask.sum()), sup_error=math.nan, l2_error=math.nan,
                   order=math.nan, sup_error_common=math.nan)
        if exact is not None:
            diff = np.linalg.norm(g.data - exact, axis=-1)
            row["sup_error"] = float(diff[g.mask].max())
            row["l2_error"] = math.sqrt(float(np.sum(diff[g.mask] ** 2)) * f.grid.cell_volume)
            row["sup_error_common"] = float(diff[common].max())
            errs.append(row["sup_error"])
        table.add(**row)
    if exact is not None:
        for row, o in zip(table.rows, _order(errs, eps)):
            row["order"] = o
    last = results[-1]
    return Outputs([table], {"mollified.clf": last})


def cmd_smooth_approx(cfg: ExperimentConfig) -> Outputs:
    if not cfg.beta > 0:
        raise UsageError("--beta must be positive")
    domain = parse_domain(cfg.domain, cfg.n)
    eps_cap = 0.25
    f, _ = _load_input(cfg, domain, grid_pad=eps_cap + 0.15)
    result = global_smooth_approx(f, domain, cfg.beta, p=cfg.p, k=cfg.k, m=cfg.layers, eps_cap=eps_cap)
    table = Table("smooth_approx", ["component", "layer", "eps", "budget", "attained", "total", "beta"])
    for r in result.rows:
        table.add(component=r.component, layer=r.layer, eps=r.eps, budget=r.budget,
                  attained=r.attained, total=result.achieved, beta=cfg.beta)
    ok = result.achieved <= cfg.beta and all(r.attained <= r.budget for r in result.rows)
    msg = f"attained {result.achieved:.6g} with beta {cfg.beta:g}, m={result.m}"
    return Outputs([table], {"smooth.clf": result.psi}, ok, msg)


def _solver_setup(cfg: ExperimentConfig):
    domain = parse_domain(cfg.domain, cfg.n)
    kcfg = calibrate_kernel(cfg.n, cfg.potential())
    grid = grid_for_domain(domain, cfg.res, pad=0.05)
    mesh = boundary_mesh(domain, _default_mesh(cfg, domain, grid.h))
    return domain, kcfg, grid, mesh


def _solve_outputs(name, sol, rep, ref_expr):
    row = rep.as_row()
    if ref_expr is not None:
        ex = ref_expr(sol.grid.nodes()[sol.mask])
        row["reference_error"] = float(np.max(np.linalg.norm(sol.data[sol.mask] - ex, axis=-1)))
        row["reference_relative"] = row["reference_error"] / max(float(np.max(np.abs(ex))), 1e-300)
    else:
        row["reference_error"] = row["reference_relative"] = math.nan
    table = Table(name, ["grid_dims", "elements", "nodes", "margin", "residual_max", "residual_l2",
                         "trace_gap", "reference_error", "reference_relative"])
    table.add(**row)
    return Outputs([table], {"solution.clf": sol})


def cmd_solve_bvp(cfg: ExperimentConfig) -> Outputs:
    domain, kcfg, grid, mesh = _solver_setup(cfg)
    name = cfg.field or "const"
    expr = named_field(name, cfg.n, kcfg.potential.c, kcfg)
    ref = named_field(cfg.reference, cfg.n, kcfg.potential.c, kcfg) if cfg.reference else expr
    sol, rep = solve_bvp(boundary_data(mesh, expr), kcfg, grid, cfg.margin)
    return _solve_outputs("solve_bvp", sol, rep, ref)


def cmd_solve_nhbvp(cfg: ExperimentConfig) -> Outputs:
    domain, kcfg, grid, mesh = _solver_setup(cfg)
    c = kcfg.potential.c
    trace = named_field(cfg.field or "zero", cfg.n, c, kcfg)
    rhs_expr = named_field(cfg.rhs or "const", cfg.n, c, kcfg)
    ref = named_field(cfg.reference, cfg.n, c, kcfg) if cfg.reference else None
    rhs = sample_field(rhs_expr, grid, domain, vectorized=True)
    sol, rep = solve_nhbvp(rhs, boundary_data(mesh, trace), kcfg, grid, cfg.margin)
    return _solve_outputs("solve_nhbvp", sol, rep, ref)


# -- verification suites --------------------------------------------------------------


def _check(table: Table, suite: str, check: str, measured: float, tolerance: float, passed: bool, **extra):
    table.add(suite=suite, check=check, measured=float(measured), tolerance=float(tolerance),
              passed=bool(passed), **extra)


def suite_algebra(cfg: ExperimentConfig, table: Table) -> None:
    rng = np.random.default_rng(cfg.seed)
    for n in (2, 3, 4):
        size = 1 << n
        gens = [Multivector.generator(n, j) for j in range(1, n + 1)]
        worst = 0.0
        for i, a in enumerate(gens):
            for j, b in enumerate(gens):
                expected = Multivector.scalar(n, -2.0 if i == j else 0.0)
                worst = max(worst, float(np.max(np.abs((a * b + b * a - expected).coeffs))))
        _check(table, "algebra", f"anticommutation n={n}", worst, 0.0, worst == 0.0)
        u, v, w = (rng.uniform(-1, 1, (1000, size)) for _ in range(3))
        assoc = float(np.max(np.abs(gp(gp(u, v), w) - gp(u, gp(v, w)))))
        _check(table, "algebra", f"associativity n={n}", assoc, 1e-12, assoc <= 1e-12)
        anti = float(np.max(np.abs(conj_array(gp(u, v)) - gp(conj_array(v), conj_array(u)))))
        _check(table, "algebra", f"conjugation anti-automorphism n={n}", anti, 1e-12, anti <= 1e-12)


def suite_mollifier_mass(cfg: ExperimentConfig, table: Table) -> None:
    for n in (1, 2, 3):
        oracle = abs(kernel_constant(n) * BUMP_INTEGRALS[n] - 1.0)
        _check(table, "mollifier-mass", f"normalized mass n={n}", oracle, 1e-6, oracle <= 1e-6)
        h = 1 / 48 if n < 3 else 1 / 24
        riemann = abs(make_kernel(n, 1.0, h).mass - 1.0)
        _check(table, "mollifier-mass", f"grid mass n={n} h={h:.5g}", riemann, 1e-6, riemann <= 1e-6)
    n = cfg.n if cfg.n in (1, 2, 3) else 2
    domain = ball_domain(np.zeros(n), 1.0)
    res = 64 if n < 3 else 40
    grid = grid_for_domain(domain, res)
    one = sample_field(named_field("const", n, (0.0,) * n), grid, domain, vectorized=True)
    for e in (0.4, 0.2):
        g = mollify_clifford(one, e, domain)
        err = float(np.max(np.abs(g.data[g.mask] - one.data[g.mask])))
        _check(table, "mollifier-mass", f"constant field n={n} eps={e}", err, 1e-10, err <= 1e-10)


def suite_fundamental_solution(cfg: ExperimentConfig, table: Table) -> None:
    gamma = cfg.gamma if cfg.gamma is not None else [0.3, -0.2]
    if len(gamma) != 2:
        raise UsageError("the fundamental-solution suite runs in n=2; --gamma needs two coefficients")
    levels = cfg.levels or [32, 64, 128]
    for c in ((0.0, 0.0), tuple(gamma)):
        kcfg = calibrate_kernel(2, GradientPotential(c))
        for side in ("left", "right"):
            hs = [1.0 / lv for lv in levels]
            res = [annulus_residual(kcfg, h, side=side) for h in hs]
            s = _slope(hs, res)
            _check(table, "fundamental-solution", f"annulus slope c={_text(list(c))} {side}",
                   s, 0.3, abs(s - 2.0) <= 0.3, detail=";".join(f"h={h!r}:{r!r}" for h, r in zip(hs, res)))


def _bp_run(cfg: ExperimentConfig, res: int, m: int) -> float:
    domain = ball_domain(np.zeros(2), 1.0)
    kcfg = calibrate_kernel(2)
    grid = grid_for_domain(domain, res, pad=0.05)
    f = sample_field(named_field("bp", 2, (0.0, 0.0)), grid, None, vectorized=True)
    r, _ = borel_pompeiu_residual(f, kcfg, domain, boundary_mesh(domain, m), cfg.margin)
    return float(np.nanmax(r))


def suite_borel_pompeiu(cfg: ExperimentConfig, table: Table) -> None:
    res = cfg.res
    m = cfg.mesh or 4 * res
    coarse = _bp_run(cfg, res, m)
    fine = _bp_run(cfg, 2 * res, 2 * m)
    _check(table, "borel-pompeiu", f"sup residual res={res} m={m}", coarse, 5e-2, coarse <= 5e-2)
    _check(table, "borel-pompeiu", f"sup residual res={2 * res} m={2 * m}", fine, 5e-2, fine <= 5e-2)
    ratio = fine / coarse if coarse > 0 else 0.0
    _check(table, "borel-pompeiu", "refinement ratio", ratio, 0.5, ratio <= 0.5)


def suite_alexander(cfg: ExperimentConfig, table: Table) -> None:
    n = cfg.n
    kcfg = calibrate_kernel(n, cfg.potential())
    one = Multivector.scalar(n)
    res = 48 if n == 2 else 16
    rep = alexander_check(one, cfg.radii, kcfg, res=res)
    rep2 = alexander_check(one * 2.0, cfg.radii, kcfg, res=res)
    _check(table, "alexander", "slope", rep.slope, 0.1, abs(rep.slope - 1.0) <= 0.1)
    dev = max(abs(b.sup_teodorescu - 2 * a.sup_teodorescu) / (2 * a.sup_teodorescu)
              for a, b in zip(rep.rows, rep2.rows))
    _check(table, "alexander", "doubling the rhs doubles U", dev, 1e-10, dev <= 1e-10)
    _check(table, "alexander", "U extrapolates to zero", rep.intercept, 0.05 * max(r.sup_teodorescu for r in rep.rows),
           rep.limit_to_zero)


SUITE_FUNCS = {
    "algebra": suite_algebra,
    "mollifier-mass": suite_mollifier_mass,
    "fundamental-solution": suite_fundamental_solution,
    "borel-pompeiu": suite_borel_pompeiu,
    "alexander": suite_alexander,
}


def cmd_verify(cfg: ExperimentConfig) -> Outputs:
    if cfg.suite not in SUITE_FUNCS:
        raise UsageError(f"unknown suite {cfg.suite!r}; choose from {', '.join(SUITES)}")
    table = Table(f"verify_{cfg.suite.replace('-', '_')}",
                  ["suite", "check", "measured", "tolerance", "passed", "detail"])
    SUITE_FUNCS[cfg.suite](cfg, table)
    failed = [r["check"] for r in table.rows if not r["passed"]]
    msg = f"{len(table.rows) - len(failed)}/{len(table.rows)} checks passed"
    if failed:
        msg += "; failed: " + "; ".join(failed)
    return Outputs([table], {}, not failed, msg)


# -- convergence and alexander ----------------------------------------------------------


def cmd_convergence(cfg: ExperimentConfig) -> Outputs:
    if cfg.study not in STUDIES:
        raise UsageError(f"unknown study {cfg.study!r}; choose from {', '.join(STUDIES)}")
    table = Table(f"convergence_{cfg.study.replace('-', '_')}", ["level", "h", "side", "error", "order"])
    if cfg.study == "fundamental-solution":
        kcfg = calibrate_kernel(cfg.n, cfg.potential())
        levels = cfg.levels or [32, 64, 128]
        hs = [1.0 / lv for lv in levels]
        for side in ("left", "right"):
            errs = [annulus_residual(kcfg, h, side=side) for h in hs]
            for lv, h, e, o in zip(levels, hs, errs, _order(errs, hs)):
                table.add(level=lv, h=h, side=side, error=e, order=o)
        return Outputs([table])
    levels = cfg.levels or [64, 128]
    domain = parse_domain(cfg.domain, cfg.n)
    hs, errs = [], []
    for lv in levels:
        sub = ExperimentConfig(**{**asdict(cfg), "res": lv, "mesh": None})
        if cfg.study == "borel-pompeiu":
            kcfg = calibrate_kernel(cfg.n, cfg.potential())
            grid = grid_for_domain(domain, lv, pad=0.05)
            expr = named_field(cfg.field or "bp", cfg.n, kcfg.potential.c, kcfg)
            f = sample_field(expr, grid, None, vectorized=True)
            mesh = boundary_mesh(domain, _default_mesh(sub, domain, grid.h))
            r, _ = borel_pompeiu_residual(f, kcfg, domain, mesh, cfg.margin)
            err, h = float(np.nanmax(r)), grid.h
        else:
            out = cmd_solve_bvp(sub) if cfg.study == "bvp" else cmd_solve_nhbvp(sub)
            row = out.tables[0].rows[0]
            err, h = row["residual_max"], out.fields["solution.clf"].grid.h
        hs.append(h)
        errs.append(err)
    for lv, h, e, o in zip(levels, hs, errs, _order(errs, hs)):
        table.add(level=lv, h=h, side="left", error=e, order=o)
    return Outputs([table])


def cmd_alexander(cfg: ExperimentConfig) -> Outputs:
    kcfg = calibrate_kernel(cfg.n, cfg.potential())
    name = cfg.rhs or "const"
    rhs = Multivector.scalar(cfg.n) if name == "const" else named_field(name, cfg.n, kcfg.potential.c, kcfg)
    rep = alexander_check(rhs, cfg.radii, kcfg, res=cfg.res)
    rows = Table("alexander", ["radius", "measure", "scale", "sup_teodorescu", "rhs_sup", "ratio"])
    for r in rep.rows:
        rows.add(radius=r.radius, measure=r.measure, scale=r.scale, sup_teodorescu=r.sup_teodorescu,
                 rhs_sup=r.rhs_sup, ratio=r.ratio)
    fit = Table("alexander_fit", ["slope", "intercept", "limit_to_zero"])
    fit.add(slope=rep.slope, intercept=rep.intercept, limit_to_zero=rep.limit_to_zero)
    return Outputs([rows, fit])


COMMANDS = {
    "mollify": cmd_mollify,
    "smooth-approx": cmd_smooth_approx,
    "solve-bvp": cmd_solve_bvp,
    "solve-nhbvp": cmd_solve_nhbvp,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
    "alexander": cmd_alexander,
}


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.n < 1:
        raise UsageError("--n must be positive")
    if cfg.res < 2:
        raise UsageError("--res must be at least 2")
    if cfg.mesh is not None and cfg.mesh < 1:
        raise UsageError("--mesh must be positive")
    if cfg.command == "verify" and cfg.suite not in SUITE_FUNCS:
        raise UsageError(f"unknown suite {cfg.suite!r}; choose from {', '.join(SUITES)}")
    if cfg.command == "convergence" and cfg.study not in STUDIES:
        raise UsageError(f"unknown study {cfg.study!r}; choose from {', '.join(STUDIES)}")
    cfg.potential()
    parse_domain(cfg.domain, cfg.n)
    _check_files(cfg)


def _calibration_table(rows) -> str:
    lines = ["kernel_sign omega_name    omega_n  boundary_sign grid_residual reconstruction_error"]
    for r in rows:
        lines.append(f"{r.kernel_sign:+d}          {r.omega_name:<12} {r.omega_n:8.5f} {r.boundary_sign:+d}"
                     f"            {r.grid_residual:.3e}     {r.reconstruction_error:.3e}")
    return "\n".join(lines)


def run(cfg: ExperimentConfig) -> int:
    _validate(cfg)
    out = COMMANDS[cfg.command](cfg)
    for path in write_outputs(out, cfg):
        print(path)
    if out.message:
        print(out.message, file=sys.stderr if not out.ok else sys.stdout)
    return 0 if out.ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return run(cfg)
    except (UsageError, FileNotFoundError, FieldFormatError) as exc:
        print(f"cliffmoll: error: {exc}", file=sys.stderr)
        return 2
    except CalibrationError as exc:
        print(f"cliffmoll: {exc}\n{_calibration_table(exc.rows)}", file=sys.stderr)
        return 1
    except SmoothApproxError as exc:
        print(f"cliffmoll: {exc}", file=sys.stderr)
        print("component,layer,eps,budget,attained", file=sys.stderr)
        for r in exc.rows:
            print(f"{r.component},{r.layer},{r.eps!r},{r.budget!r},{r.attained!r}", file=sys.stderr)
        return 1
    except (UnderResolvedError, EmptyDomainError, StencilError, ValueError, RuntimeError) as exc:
        print(f"cliffmoll: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
