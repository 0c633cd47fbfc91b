"""Configuration-driven command line: selftest, solve, check-domain.

The config file is flat ``key = value`` text (``#`` comments allowed);
every key can also be supplied or overridden by a flag.  Reports are CSV
or JSON tables of the homotopy path; solution dumps are little-endian
binary arrays next to a JSON header.  See the README for the schema.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from nconvex import selftest
from nconvex.barriers import barrier_section, recipe_params
from nconvex.discretize import (
    DiscreteField,
    Grid,
    ProblemSpec,
    SampledProblem,
    homotopy_constant,
    sample_problem,
)
from nconvex.geometry import DomainSpec, pinching_check, project_to_boundary_batch
from nconvex.solver import ContinuationFailure, SolverConfig, continuation

__all__ = ["main", "named_case", "parse_config", "config_digest",
           "write_solution_dump", "load_solution_dump"]

NAMED_CASES = ("ball-constant", "ball-manufactured-exp", "ellipsoid-near-sphere")
MANUFACTURED_AMPLITUDE = 0.05


# -- problem construction -----------------------------------------------------


def _extended_normal(domain):
    def nu(pts):
        _, normal, _ = project_to_boundary_batch(domain, pts)
        return normal

    return nu


def _quadratic_phi(domain):
    """Boundary datum that makes u = |x|^2/2 exact: x.nu + |x|^2/2."""
    nu = _extended_normal(domain)

    def phi(pts):
        return np.einsum("ij,ij->i", pts, nu(pts)) + 0.5 * np.sum(pts**2, axis=1)

    return phi


def named_case(name: str, n: int = 3, domain: DomainSpec | None = None):
    """Return (domain, problem, exact_solution_or_None) for a built-in case.

    A config may override the domain: the data formulas are rebuilt against
    it (the boundary datum uses the actual domain's normal field), so the
    exact solutions stay exact.
    """
    if name == "ball-constant":
        if domain is None:
            domain = DomainSpec.ball(1.0, n=n)
        c0 = homotopy_constant(domain.n)
        problem = ProblemSpec(
            n=domain.n,
            f=lambda pts: np.full(pts.shape[0], c0),
            phi=_quadratic_phi(domain),
            name=name,
        )
        return domain, problem, lambda pts: 0.5 * np.sum(pts**2, axis=1)
    if name == "ball-manufactured-exp":
        if n != 3 or (domain is not None and domain.n != 3):
            raise ValueError("ball-manufactured-exp is a three-dimensional case")
        if domain is None:
            domain = DomainSpec.ball(1.0, n=3)
        amp = MANUFACTURED_AMPLITUDE

        def u_star(pts):
            return 0.5 * np.sum(pts**2, axis=1) + amp * np.exp(pts[:, 0])

        def f(pts):
            a = amp * np.exp(pts[:, 0])
            return 2.0 * (2.0 + a) ** 2  # lifted spectrum (2+a, 2+a, 2)

        nu = _extended_normal(domain)

        def phi(pts):
            grad = pts.copy()
            grad[:, 0] += amp * np.exp(pts[:, 0])
            return np.einsum("ij,ij->i", grad, nu(pts)) + u_star(pts)

        return domain, ProblemSpec(n=3, f=f, phi=phi, name=name), u_star
    if name == "ellipsoid-near-sphere":
        if n != 3 or (domain is not None and domain.n != 3):
            raise ValueError("ellipsoid-near-sphere is a three-dimensional case")
        if domain is None:
            domain = DomainSpec.ellipsoid((1.0, 1.0, 1.05))
        c0 = homotopy_constant(3)
        problem = ProblemSpec(
            n=3,
            f=lambda pts: np.full(pts.shape[0], c0),
            phi=_quadratic_phi(domain),
            name=name,
        )
        return domain, problem, lambda pts: 0.5 * np.sum(pts**2, axis=1)
    raise ValueError(f"unknown case {name!r}; available: {', '.join(NAMED_CASES)}")


def _array_problem(domain, grid, f_path, phi_path):
    """Problem data from raw little-endian float64 files matching the grid."""
    f_vals = np.fromfile(f_path, dtype="<f8")
    phi_vals = np.fromfile(phi_path, dtype="<f8")
    if f_vals.size != grid.n_active:
        raise ValueError(
            f"f array has {f_vals.size} values, grid has {grid.n_active} active points"
        )
    if phi_vals.size != grid.n_colloc:
        raise ValueError(
            f"phi array has {phi_vals.size} values, grid has {grid.n_colloc} "
            "collocation points"
        )
    if np.any(f_vals <= 0.0):
        raise ValueError("sampled right-hand side must be positive everywhere")
    return SampledProblem(n=grid.n, f_active=f_vals, phi_colloc=phi_vals, spec=None)


# -- config file --------------------------------------------------------------

DEFAULTS = {
    "case": "ball-constant",
    "n": 3,
    "resolution": 17,
    "homotopy_steps": 10,
    "newton_tol": 1e-10,
    "max_newton_iters": 30,
    "min_step": 1.0 / 1280.0,
    "damping": 0.5,
    "report": "csv",
    "verify_barriers": False,
    "barrier.gamma": 0.5,
    "barrier.sigma": 0.5,
    "barrier.epsilon": 0.45,
    "output": "out",
    "seed": 0,
}

_INT_KEYS = {"n", "resolution", "homotopy_steps", "max_newton_iters", "seed"}
_FLOAT_KEYS = {"newton_tol", "min_step", "damping", "domain.radius",
               "barrier.gamma", "barrier.sigma", "barrier.epsilon"}
_BOOL_KEYS = {"verify_barriers", "force"}
_LIST_KEYS = {"domain.center", "domain.semi_axes"}


def parse_config(path) -> dict:
    """Flat ``key = value`` file into a typed dict over the defaults."""
    cfg = dict(DEFAULTS)
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        cfg[key] = _coerce(key, value)
    return cfg


def _coerce(key, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        return value.lower() in ("1", "true", "yes", "on")
    if key in _LIST_KEYS:
        return tuple(float(v) for v in value.split(","))
    return value


def config_digest(cfg: dict) -> str:
    canon = json.dumps({k: cfg[k] for k in sorted(cfg)}, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _domain_from_config(cfg) -> DomainSpec:
    kind = cfg.get("domain.kind")
    n = int(cfg["n"])
    if kind is None:
        domain, _, _ = named_case(cfg["case"], n=n)
        return domain
    center = cfg.get("domain.center")
    if kind == "ball":
        return DomainSpec.ball(float(cfg["domain.radius"]), center=center, n=n)
    if kind == "ellipsoid":
        return DomainSpec.ellipsoid(cfg["domain.semi_axes"], center=center)
    raise ValueError(f"unknown domain.kind {kind!r}")


# -- dumps and reports ---------------------------------------------------------


def write_solution_dump(directory, grid: Grid, field: DiscreteField, t: float):
    """Header JSON plus flat little-endian arrays; lossless for reload."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    header = {
        "format": "nconvex-dump-1",
        "n": grid.n,
        "resolution": grid.resolution,
        "h": grid.h,
        "domain": {
            "kind": grid.domain.kind,
            "center": list(grid.domain.center),
            "semi_axes": list(grid.domain.semi_axes),
        },
        "counts": {"active": grid.n_active, "colloc": grid.n_colloc},
        "t": t,
        "byte_order": "little",
    }
    (out / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True))
    field.values.astype("<f8").tofile(out / "values.bin")
    field.trace.astype("<f8").tofile(out / "trace.bin")
    grid.active_idx.astype("<i8").tofile(out / "active_idx.bin")
    grid.colloc_y.astype("<f8").tofile(out / "colloc_y.bin")
    return out


def load_solution_dump(directory):
    """Rebuild (grid, field, t) from a dump; counts are cross-checked."""
    src = Path(directory)
    header = json.loads((src / "header.json").read_text())
    if header.get("format") != "nconvex-dump-1":
        raise ValueError(f"unrecognized dump format in {src}")
    dom = header["domain"]
    if dom["kind"] == "ball":
        domain = DomainSpec.ball(dom["semi_axes"][0], center=dom["center"], n=header["n"])
    else:
        domain = DomainSpec.ellipsoid(dom["semi_axes"], center=dom["center"])
    grid = Grid(domain, header["resolution"])
    if grid.n_active != header["counts"]["active"] or grid.n_colloc != header["counts"]["colloc"]:
        raise ValueError("dump counts do not match the rebuilt grid")
    values = np.fromfile(src / "values.bin", dtype="<f8")
    trace = np.fromfile(src / "trace.bin", dtype="<f8")
    field = DiscreteField(values=values, trace=trace)
    field.check(grid)
    return grid, field, float(header["t"])


def _write_report(report, cfg, out_dir: Path):
    fmt = cfg["report"]
    if fmt == "csv":
        path = out_dir / "path_report.csv"
        path.write_text(report.to_csv())
    elif fmt == "json":
        path = out_dir / "path_report.json"
        path.write_text(report.to_json())
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


# -- commands ------------------------------------------------------------------


def cmd_selftest(args) -> int:
    try:
        results = selftest.run_all(seed=args.seed, max_n=args.max_n)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} suites failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} suites passed (seed {args.seed})")
    return 0


def _load_run(args):
    cfg = dict(DEFAULTS) if args.config is None else parse_config(args.config)
    for key in ("resolution", "homotopy_steps"):
        override = getattr(args, key.replace("-", "_"), None)
        if override is not None:
            cfg[key] = override
    if getattr(args, "report", None):
        cfg["report"] = args.report
    if getattr(args, "verify_barriers", False):
        cfg["verify_barriers"] = True
    if getattr(args, "force", False):
        cfg["force"] = True
    if getattr(args, "output", None):
        cfg["output"] = args.output
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def cmd_solve(args) -> int:
    cfg = _load_run(args)
    digest = config_digest(cfg)
    domain = _domain_from_config(cfg)
    if domain.n < 3:
        print("PDE runs need n >= 3", file=sys.stderr)
        return 2
    gate = pinching_check(domain)
    if not gate.passes and not cfg.get("force", False):
        print(
            "refusing to solve: " + gate.summary()
            + " (curvature spread exceeds H/(2(n-1)(n-2)); use --force to override)",
            file=sys.stderr,
        )
        return 1
    grid = Grid(domain, int(cfg["resolution"]))
    exact = None
    if cfg.get("f.file") or cfg.get("phi.file"):
        if not (cfg.get("f.file") and cfg.get("phi.file")):
            print("custom data needs both f.file and phi.file", file=sys.stderr)
            return 2
        problem = _array_problem(domain, grid, cfg["f.file"], cfg["phi.file"])
    else:
        _, spec, exact = named_case(cfg["case"], n=int(cfg["n"]), domain=domain)
        problem = sample_problem(spec, grid)
    config = SolverConfig(
        newton_tol=float(cfg["newton_tol"]),
        max_newton_iters=int(cfg["max_newton_iters"]),
        homotopy_steps=int(cfg["homotopy_steps"]),
        min_step=float(cfg["min_step"]),
        damping=float(cfg["damping"]),
    )
    out_dir = Path(cfg["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        state, report = continuation(problem, grid, config,
                                     force=bool(cfg.get("force", False)))
    except ContinuationFailure as exc:
        print(f"continuation failed: {exc}", file=sys.stderr)
        if exc.state is not None:
            dump = write_solution_dump(out_dir / "last_good", grid, exc.state.field,
                                       exc.state.t)
            exc.report.config_digest = digest
            _write_report(exc.report, cfg, out_dir)
            print(f"last good state (t={exc.state.t:.6g}) dumped to {dump}",
                  file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"refusing to solve: {exc}", file=sys.stderr)
        return 1
    report.config_digest = digest
    if exact is not None:
        ref = np.asarray(exact(grid.active_pts), dtype=float)
        report.exact_error = float(np.max(np.abs(state.field.values - ref)))
    if cfg.get("verify_barriers", False):
        if problem.spec is None:
            print("barrier verification needs a named case (callable data); skipped",
                  file=sys.stderr)
        else:
            try:
                params = recipe_params(
                    domain, state, grid, problem,
                    gamma=float(cfg["barrier.gamma"]),
                    sigma=float(cfg["barrier.sigma"]),
                    epsilon=float(cfg["barrier.epsilon"]),
                )
                report.barriers = barrier_section(domain, state, grid, problem, params)
            except ValueError as exc:
                # diagnostics never abort a finished solve
                print(f"barrier verification skipped: {exc}", file=sys.stderr)
                report.barriers = {"error": str(exc)}
    dump_dir = write_solution_dump(out_dir / "solution", grid, state.field, state.t)
    report_path = _write_report(report, cfg, out_dir)
    for row in report.rows:
        print(
            f"t={row['t']:.4f}  residual={row['residual']:.3e}  "
            f"margin={row['margin']:.4f}  sup_d2u={row['sup_d2u']:.4f}"
        )
    print(f"reached t={state.t}; solution dump: {dump_dir}; report: {report_path}")
    if report.exact_error is not None:
        print(f"sup error vs reference solution: {report.exact_error:.6e}")
    print(f"config digest: {digest}")
    return 0


def cmd_check_domain(args) -> int:
    cfg = _load_run(args)
    domain = _domain_from_config(cfg)
    gate = pinching_check(domain)
    print(gate.summary())
    if domain.n == 3:
        print(f"n=3 corollary form (kmax < 5/3 kmin): "
              f"{'PASS' if gate.corollary_passes else 'FAIL'}; "
              f"agrees pointwise with the general form: {gate.corollary_agrees}")
    print(
        f"strip parameters: mu0={domain.mu0:.6g}, kappa_min={domain.kappa_min_global:.6g}, "
        f"kappa_max={domain.kappa_max_global:.6g}"
    )
    samples_h = (domain.n - 1) / domain.radius if domain.is_ball else None
    if samples_h is not None:
        print(f"mean curvature H = {samples_h:.6g} (constant on a ball)")
    else:
        from nconvex.geometry import boundary_samples

        hs = [s.H for s in boundary_samples(domain, 4000)]
        print(f"mean curvature H in [{min(hs):.6g}, {max(hs):.6g}]")
    if not gate.passes:
        print(
            f"worst sampled boundary point: {np.round(gate.worst_point, 6).tolist()}"
        )
        print("domain would be refused by `solve` without --force")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nconvex",
        description="Determinant-of-Hessian-lift Neumann solver and verifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_self = sub.add_parser("selftest", help="run the seeded property battery")
    p_self.add_argument("--seed", type=int, default=0)
    p_self.add_argument("--max-n", type=int, default=selftest.SUPPORTED_MAX_N,
                        dest="max_n")
    p_self.set_defaults(func=cmd_selftest)

    p_solve = sub.add_parser("solve", help="run a continuation solve")
    p_solve.add_argument("--config", type=str, default=None)
    p_solve.add_argument("--resolution", type=int, default=None)
    p_solve.add_argument("--homotopy-steps", type=int, default=None,
                         dest="homotopy_steps")
    p_solve.add_argument("--report", choices=("csv", "json"), default=None)
    p_solve.add_argument("--verify-barriers", action="store_true",
                         dest="verify_barriers")
    p_solve.add_argument("--force", action="store_true")
    p_solve.add_argument("--output", type=str, default=None)
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.set_defaults(func=cmd_solve)

    p_dom = sub.add_parser("check-domain", help="report the curvature gate")
    p_dom.add_argument("--config", type=str, default=None)
    p_dom.set_defaults(func=cmd_check_domain)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
