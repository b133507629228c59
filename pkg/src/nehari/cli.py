"""Command-line front end: flat text configs, field CSV dumps, JSON reports.

Usage::

    nehari solve  --config run.cfg --out results/
    nehari nodal  --config run.cfg --out results/ --override T=8
    nehari report --config run.cfg --out results/

Exit codes: 0 success, 1 solver non-convergence, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .calculus import ConvergenceError, Field
from .decay import fit_decay_rate, hopf_check
from .energy import ProblemParams
from .geometry import (DomainSpec, GeometryError, GridSpec, ball_domain, discretize,
                       discretize_cross_section, make_cross_section)
from .solvers import (NoRadialSolution, NodalCollapseError, SolveConfig, Solution, ground_state,
                      nodal_solution, radial_shooting)
from .spectral import principal_eigenpair
from .testfunctions import energy_gap_experiment, instanton_integrals, sobolev_level

__all__ = ["ConfigError", "RunConfig", "KEYS", "parse_config", "write_field", "read_field",
           "FieldFormatError", "run", "main", "COMMANDS"]

log = logging.getLogger(__name__)

COMMANDS = ("solve", "nodal", "eigen", "gap", "decay", "instanton", "shoot", "report")


class ConfigError(ValueError):
    """One or more invalid config lines; ``errors`` holds ``(line, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


class FieldFormatError(ValueError):
    pass


# -- config schema -------------------------------------------------------------------------

def _float_list(s: str) -> list:
    return [float(x) for x in s.replace(",", " ").split()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _choice(*opts):
    def conv(s):
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}, got {s!r}")
        return s
    return conv


def _opt_float(s: str):
    return None if s.strip().lower() in ("none", "") else float(s)


@dataclass(frozen=True)
class Key:
    conv: Callable[[str], Any]
    default: Any
    doc: str


_SOLVE_DEFAULTS = SolveConfig()

# every accepted key with its default; None means "derived" or "unused unless set"
KEYS = {
    # problem
    "N": Key(int, None, "space dimension; derived from ell and the cross-section if absent"),
    "ell": Key(int, 1, "number of unbounded (axial) directions"),
    "q": Key(float, 4.0, "subcritical exponent, 2 < q < p"),
    "mu": Key(float, 1.0, "coefficient of the subcritical term"),
    "p": Key(float, None, "critical exponent; defaults to 2N/(N-2)"),
    "lam": Key(float, 0.0, "linear coefficient lambda < lambda1"),
    # domain
    "family": Key(_choice("straight", "bump", "pinched", "ball"), "straight", "domain family"),
    "cross_section": Key(_choice("disk", "interval", "square"), "disk", "cross-section shape"),
    "radius": Key(float, 1.0, "disk radius"),
    "side": Key(float, 1.0, "square side"),
    "a": Key(float, 0.0, "interval left end"),
    "b": Key(float, 1.0, "interval right end"),
    "T": Key(float, 6.0, "axial truncation |t| < T"),
    "m": Key(float, None, "profile exponent (required for bump and pinched)"),
    "a0": Key(float, None, "profile amplitude (required for bump and pinched)"),
    "a1": Key(_opt_float, None, "lower amplitude for bump, default a0/2"),
    "R": Key(float, 1.0, "ball radius (family = ball and shoot)"),
    # grid
    "h": Key(float, 0.1, "grid spacing"),
    "quadrature": Key(_choice("p1", "nodal"), "p1", "volume quadrature"),
    "quad_order": Key(int, 3, "simplex rule order (exact to degree 2k-1)"),
    "max_points": Key(int, 4_000_000, "cap on the bounding-box size"),
    # solver
    "max_iters": Key(int, _SOLVE_DEFAULTS.max_iters, "descent iteration cap"),
    "tol_residual": Key(float, 1e-6, "relative H^1 gradient tolerance"),
    "step0": Key(float, _SOLVE_DEFAULTS.step0, "initial step"),
    "armijo_factor": Key(float, _SOLVE_DEFAULTS.armijo_factor, "backtracking factor"),
    "armijo_slope": Key(float, _SOLVE_DEFAULTS.armijo_slope, "sufficient-decrease constant"),
    "cg_tol": Key(float, _SOLVE_DEFAULTS.cg_tol, "final inner CG tolerance"),
    "init": Key(_choice("eigen_bump", "instanton", "two_bump", "file"), None,
                "initial guess; eigen_bump for solve, two_bump for nodal"),
    "init_file": Key(str, None, "field CSV for init = file"),
    "width": Key(float, 0.5, "initial-guess width in t"),
    "center": Key(float, 0.0, "initial-guess centre in t"),
    "separation": Key(_opt_float, None, "half distance of the two bumps"),
    "seed": Key(int, 0, "seed for any randomised step (none at present)"),
    # eigen / decay
    "window": Key(_float_list, None, "decay fit window R1, R2; default T/3, 2T/3"),
    "with_prefactor": Key(_bool, None, "fit the |t|^{-k} factor; default ell >= 2"),
    "eta": Key(float, -1.0, "Hopf lower-bound shift, eta < lam"),
    "field_file": Key(str, None, "decay: analyse this field instead of solving"),
    # gap
    "eps_list": Key(_float_list, None, "gap (pinched): concentration scales"),
    "R_list": Key(_float_list, None, "gap (bump): cutoff radii"),
    "M": Key(float, 5.0, "gap (bump): translation factor"),
    "A": Key(float, 2.0, "gap (bump): cutoff ratio"),
    "bubble_center": Key(_float_list, None, "gap (pinched): bubble centre (N numbers)"),
    # instanton
    "instanton_eps": Key(_float_list, [1.0], "instanton scales for the radial quadrature"),
    # report
    "c0_inf": Key(_opt_float, None, "report: level at infinity; computed if absent"),
}


@dataclass
class RunConfig:
    problem: Optional[ProblemParams]
    domain: DomainSpec
    h: float
    T: float
    solver: SolveConfig
    values: dict
    lines: dict = field(default_factory=dict)
    problem_error: Optional[ConfigError] = None

    def resolved(self) -> dict:
        """All keys with their final values; lists and None kept as JSON."""
        return {k: self.values[k] for k in sorted(self.values)}

    def grid(self) -> GridSpec:
        v = self.values
        return discretize(self.domain, self.h, v["max_points"], v["quadrature"], v["quad_order"])

    def straight(self) -> DomainSpec:
        return DomainSpec(ell=self.domain.ell, base=self.domain.base, T=self.domain.T)


def _cross_section(v):
    kind = v["cross_section"]
    if kind == "disk":
        return make_cross_section("disk", radius=v["radius"])
    if kind == "square":
        return make_cross_section("square", side=v["side"])
    return make_cross_section("interval", v["a"], v["b"])


def parse_config(text: str, overrides: Sequence[str] = ()) -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments) plus ``key=value`` overrides."""
    errors = []
    raw: dict = {}
    lines: dict = {}
    entries = [(i, ln) for i, ln in enumerate(text.splitlines(), 1)]
    entries += [(f"override {j}", o) for j, o in enumerate(overrides, 1)]
    for ln, line in entries:
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            errors.append((ln, f"expected 'key = value', got {body!r}"))
            continue
        k, val = (s.strip() for s in body.split("=", 1))
        if k not in KEYS:
            errors.append((ln, f"unknown key {k!r}"))
            continue
        if k in raw and isinstance(ln, int) and isinstance(lines[k], int):
            errors.append((ln, f"duplicate key {k!r} (first set on line {lines[k]})"))
            continue
        try:
            raw[k] = KEYS[k].conv(val)
        except ValueError as e:
            errors.append((ln, f"{k}: type mismatch: {e}"))
            continue
        lines[k] = ln
    if errors:
        raise ConfigError(errors)
    v = {k: (raw[k] if k in raw else spec.default) for k, spec in KEYS.items()}
    at = lambda k: lines.get(k, 0)

    if v["family"] in ("bump", "pinched"):
        for k in ("m", "a0"):
            if k not in raw:
                errors.append((at("family"), f"family = {v['family']} needs key {k!r}"))
    for k in ("h", "T", "radius", "side", "R", "mu"):
        if not v[k] > 0:
            errors.append((at(k), f"{k} must be positive"))
    if errors:
        raise ConfigError(errors)

    try:
        if v["family"] == "ball":
            N = v["N"] if v["N"] is not None else 3
            domain = ball_domain(N, v["R"])
            v["T"] = v["R"]
        else:
            F = _cross_section(v)
            kw = {}
            if v["family"] in ("bump", "pinched"):
                kw = dict(m=v["m"], a0=v["a0"], a1=v["a1"])
            domain = DomainSpec(ell=v["ell"], base=F, T=v["T"], family=v["family"], **kw)
    except (GeometryError, ValueError) as e:
        raise ConfigError([(at("family") or at("cross_section"), str(e))]) from None
    if v["N"] is not None and v["N"] != domain.N:
        raise ConfigError([(at("N"), f"N = {v['N']} does not match ell + cross-section "
                                     f"dimension = {domain.N}")])
    v["N"] = domain.N
    v["ell"] = domain.ell
    problem, deferred = None, None
    if domain.N < 3 and v["p"] is None:
        # no critical exponent: only the eigen command can run
        deferred = ConfigError([(at("cross_section") or at("ell"),
                                 f"N = {domain.N} has no critical exponent; set p or use eigen")])
    else:
        try:
            problem = ProblemParams(N=domain.N, ell=domain.ell, q=v["q"], mu=v["mu"], p=v["p"],
                                    lam=v["lam"])
        except ValueError as e:
            ln = at("q") if "q" in str(e) else at("mu") or at("ell")
            raise ConfigError([(ln or at("p"), str(e))]) from None
        v["p"] = problem.p
    if v["window"] is not None and len(v["window"]) != 2:
        raise ConfigError([(at("window"), "window needs two numbers R1, R2")])
    if v["init"] == "file" and v["init_file"] is None:
        raise ConfigError([(at("init"), "init = file needs init_file")])
    if not v["eta"] < v["lam"]:
        raise ConfigError([(at("eta"), "eta must be below lam")])
    try:
        solver = SolveConfig(max_iters=v["max_iters"], step0=v["step0"],
                             armijo_factor=v["armijo_factor"], armijo_slope=v["armijo_slope"],
                             tol_residual=v["tol_residual"], width=v["width"],
                             center=v["center"], separation=v["separation"], cg_tol=v["cg_tol"])
    except ValueError as e:
        raise ConfigError([(0, str(e))]) from None
    return RunConfig(problem, domain, v["h"], v["T"], solver, v, lines, deferred)


# -- field I/O ------------------------------------------------------------------------------

def _box_index(grid: GridSpec) -> np.ndarray:
    return np.stack(np.unravel_index(grid.flat_index, grid.shape), axis=-1)


def write_field(path, u: Field) -> None:
    """CSV: header ``nx,ny[,nz],h,T`` then ``i,j[,k],value`` per masked point."""
    g = u.grid
    idx = _box_index(g)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join([str(n) for n in g.shape] + [repr(float(g.h)), repr(float(g.T))]) + "\n")
        for row, val in zip(idx.tolist(), u.values.tolist()):
            f.write(",".join(map(str, row)) + "," + repr(val) + "\n")


def read_field(path, grid: GridSpec) -> Field:
    """Inverse of :func:`write_field` on the grid the field was written from."""
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        if not header.strip():
            raise FieldFormatError(f"{path}: missing header")
        parts = header.strip().split(",")
        try:
            dims = [int(x) for x in parts[:-2]]
            h, T = float(parts[-2]), float(parts[-1])
        except (ValueError, IndexError):
            raise FieldFormatError(f"{path}: malformed header {header.strip()!r}") from None
        if len(parts) < 3:
            raise FieldFormatError(f"{path}: malformed header {header.strip()!r}")
        if tuple(dims) != grid.shape or h != grid.h or T != grid.T:
            raise FieldFormatError(
                f"{path}: dimension mismatch: file {tuple(dims)}, h={h}, T={T}; "
                f"grid {grid.shape}, h={grid.h}, T={grid.T}")
        data = np.loadtxt(f, delimiter=",", ndmin=2, dtype=object)
    N = grid.N
    if data.shape[0] != grid.n or data.shape[1] != N + 1:
        raise FieldFormatError(f"{path}: expected {grid.n} rows of {N + 1} columns")
    idx = data[:, :N].astype(np.int64)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    pos = grid.index_map.reshape(-1)[flat]
    if np.any(pos < 0) or len(np.unique(pos)) != grid.n:
        raise FieldFormatError(f"{path}: rows do not match the grid mask")
    vals = np.empty(grid.n)
    vals[pos] = [float(x) for x in data[:, N]]
    return Field(grid, vals)


# -- commands -------------------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _solution_dict(s: Solution) -> dict:
    hist = s.history
    return {"level": s.level, "iterations": s.iterations, "converged": s.converged,
            "kind": s.kind, "energy": s.report.to_dict(),
            "final_relative_gradient": hist[-1][1] if hist else None,
            "history": [list(h) for h in hist[:: max(1, len(hist) // 50)]]}


def _solver_cfg(cfg: RunConfig, grid: GridSpec, default_init: str) -> SolveConfig:
    v = cfg.values
    init = v["init"] or default_init
    field_ = read_field(v["init_file"], grid) if init == "file" else None
    d = asdict(cfg.solver)
    d.update(init=init, init_field=field_)
    return SolveConfig(**d)


def _cmd_solve(cfg, out):
    grid = cfg.grid()
    s = ground_state(grid, cfg.problem, _solver_cfg(cfg, grid, "eigen_bump"))
    write_field(out / "solve_field.csv", s.field)
    return {"c0": s.level, "solution": _solution_dict(s), "points": grid.n}, s.converged


def _cmd_nodal(cfg, out):
    grid = cfg.grid()
    s = nodal_solution(grid, cfg.problem, _solver_cfg(cfg, grid, "two_bump"))
    write_field(out / "nodal_field.csv", s.field)
    return {"c1": s.level, "solution": _solution_dict(s), "points": grid.n}, s.converged


def _cmd_eigen(cfg, out):
    F = cfg.domain.base
    ep = principal_eigenpair(F, cfg.h)
    print(f"lambda1 = {ep.lambda1:.10g}")
    write_field(out / "eigen_field.csv", ep.phi)
    return {"lambda1": ep.lambda1, "iterations": ep.iterations, "residual": ep.residual,
            "points": ep.grid.n}, True


def _ground(cfg, grid):
    v = cfg.values
    if v["field_file"]:
        return read_field(v["field_file"], grid), True
    s = ground_state(grid, cfg.problem, _solver_cfg(cfg, grid, "eigen_bump"))
    return s.field, s.converged


def _cmd_decay(cfg, out):
    v = cfg.values
    grid = cfg.grid()
    u, ok = _ground(cfg, grid)
    win = v["window"] or [cfg.T / 3, 2 * cfg.T / 3]
    pre = v["with_prefactor"] if v["with_prefactor"] is not None else cfg.domain.ell >= 2
    fit = fit_decay_rate(u, win, with_prefactor=pre)
    ep = principal_eigenpair(cfg.domain.base, cfg.h)
    rep = {"rate": fit.rate, "expected_rate": math.sqrt(ep.lambda1 - cfg.problem.lam),
           "prefactor_exponent": fit.prefactor_exponent,
           "expected_prefactor_exponent": -(cfg.domain.ell - 1) / 2, "r2": fit.r2,
           "window": list(win), "lambda1": ep.lambda1, "hopf_beta": None}
    if np.all(u.values >= 0):
        hp = hopf_check(u, v["eta"], ep, cfg.problem.lam, t_max=win[1])
        rep["hopf_beta"] = hp.beta
        rep["hopf"] = hp.to_dict()
    return rep, ok


def _cmd_gap(cfg, out):
    v = cfg.values
    fam = cfg.domain.family
    grid = cfg.grid()
    s = ground_state(grid, cfg.problem, _solver_cfg(cfg, grid, "eigen_bump"))
    if fam == "pinched":
        vals = v["eps_list"] or list(np.logspace(-6, -1.5, 10))
        rep = energy_gap_experiment("pinched", cfg.problem, vals, v=s.field, c0=s.level,
                                    center=v["bubble_center"])
        ok = s.converged
    elif fam == "bump":
        sg = discretize(cfg.straight(), cfg.h, v["max_points"], v["quadrature"], v["quad_order"])
        sp_ = ground_state(sg, cfg.problem, _solver_cfg(cfg, sg, "eigen_bump"))
        vals = v["R_list"] or [0.5, 0.75, 1.0]
        rep = energy_gap_experiment("bump", cfg.problem, vals, v=s.field, c0=s.level,
                                    psi=sp_.field, c0_inf=sp_.level, M=v["M"], A=v["A"],
                                    m=cfg.domain.m, a0=cfg.domain.a0)
        ok = s.converged and sp_.converged
    else:
        raise ConfigError([(cfg.lines.get("family", 0),
                            "gap needs family = pinched or family = bump")])
    return {"c0": s.level, "gap": rep.to_dict()}, ok


def _cmd_instanton(cfg, out):
    N = cfg.problem.N
    rows = []
    for eps in cfg.values["instanton_eps"]:
        r = instanton_integrals(N, eps)
        rows.append({"eps": eps, **r})
    return {"N": N, "S_power": sobolev_level(N), "rows": rows}, True


def _cmd_shoot(cfg, out):
    P = cfg.problem
    r = radial_shooting(P.N, P.p, P.q, P.mu, R_ball=cfg.values["R"])
    return {"u0": r.u0, "level": r.level, "first_zero": r.first_zero,
            "integrals": r.integrals}, True


def _load(out, name):
    path = out / f"{name}.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _cmd_report(cfg, out):
    v = cfg.values
    solve, nodal = _load(out, "solve"), _load(out, "nodal")
    if solve is None or nodal is None:
        raise FileNotFoundError(f"report needs solve.json and nodal.json in {out}")
    c0, c1 = solve["result"]["c0"], nodal["result"]["c1"]
    fam = cfg.domain.family
    if v["c0_inf"] is not None:
        c0_inf, source = v["c0_inf"], "config"
    elif fam == "straight":
        c0_inf, source = c0, "straight cylinder: c0 itself"
    elif fam == "pinched":
        c0_inf, source = sobolev_level(cfg.problem.N) / cfg.problem.N, "S^{N/2}/N"
    else:
        sg = discretize(cfg.straight(), cfg.h, v["max_points"], v["quadrature"], v["quad_order"])
        s = ground_state(sg, cfg.problem, _solver_cfg(cfg, sg, "eigen_bump"))
        c0_inf, source = s.level, "ground state of the straight cylinder"
    N = cfg.problem.N
    S_N = sobolev_level(N) / N
    table = [
        {"claim": "c0 > 0", "lhs": c0, "rhs": 0.0, "holds": c0 > 0},
        {"claim": "c0 < S^{N/2}/N", "lhs": c0, "rhs": S_N, "holds": c0 < S_N},
        {"claim": "c1 >= 2 c0", "lhs": c1, "rhs": 2 * c0, "holds": c1 >= 2 * c0 * (1 - 1e-3)},
        {"claim": "c1 < c0 + c0_inf", "lhs": c1, "rhs": c0 + c0_inf, "holds": c1 < c0 + c0_inf},
    ]
    return {"c0": c0, "c1": c1, "c0_inf": c0_inf, "c0_inf_source": source,
            "inequalities": table}, True


_HANDLERS = {"solve": _cmd_solve, "nodal": _cmd_nodal, "eigen": _cmd_eigen, "gap": _cmd_gap,
             "decay": _cmd_decay, "instanton": _cmd_instanton, "shoot": _cmd_shoot,
             "report": _cmd_report}


def run(command: str, cfg: RunConfig, out) -> int:
    """Execute ``command``; writes ``<command>.json`` and ``<command>.meta.json`` to ``out``."""
    if command not in _HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    if command != "eigen" and cfg.problem_error is not None:
        raise cfg.problem_error
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    code = 0
    try:
        body, ok = _HANDLERS[command](cfg, out)
        code = 0 if ok else 1
    except ConfigError:
        raise
    except (ConvergenceError, NodalCollapseError, NoRadialSolution) as e:
        body, code = {"error": type(e).__name__, "message": str(e)}, 1
    report = {"command": command, "config": cfg.resolved(), "result": body,
              "status": "ok" if code == 0 else "not converged"}
    (out / f"{command}.json").write_text(_dump(report), encoding="utf-8")
    meta = {"command": command, "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(t0)),
            "seconds": round(time.time() - t0, 3), "exit_code": code}
    (out / f"{command}.meta.json").write_text(_dump(meta), encoding="utf-8")
    if code:
        print(f"{command}: {report['status']}", file=sys.stderr)
    return code


def _threads():
    n = os.environ.get("NEHARI_THREADS")
    if not n:
        return None
    try:
        k = int(n)
    except ValueError:
        raise ConfigError([(0, f"NEHARI_THREADS must be an integer, got {n!r}")]) from None
    if k < 1:
        raise ConfigError([(0, "NEHARI_THREADS must be at least 1")])
    return k


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="nehari", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="flat key = value file")
    ap.add_argument("--out", type=Path, default=Path("nehari_out"), help="output directory")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = parse_config(text, args.override)
        threads = _threads()
        if threads is None:
            return run(args.command, cfg, args.out)
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=threads):
            return run(args.command, cfg, args.out)
    except ConfigError as e:
        print(f"config error:\n{e}", file=sys.stderr)
        return 2
    except (OSError, FieldFormatError, GeometryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
