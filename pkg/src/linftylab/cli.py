"""Command-line front end.

Subcommands: run, list-presets, check, rates.  Exit codes: 0 success,
1 usage error, 2 solver divergence, 3 invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile

import numpy as np

from . import experiments, fem, measures, solver
from .boundary_data import catalog_lookup
from .errors import InvariantViolationError, NewtonDivergenceError, SingularSystemError
from .mesh import RegionSpec, build_square_mesh, resolve_subdomain

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGENCE = 2
EXIT_INVARIANT = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="linfty",
                     description="p-Laplace continuation solves and "
                                 "concentration-measure diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a preset or a key=value config file")
    run.add_argument("target", help="preset name or path to a config file")
    run.add_argument("--n", type=int, default=None, help="mesh resolution knob")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--ladder", default=None, help="comma-separated exponents")
    run.add_argument("--tol", type=float, default=None, help="Newton relative tolerance")
    run.add_argument("--eps", type=float, default=None,
                     help="relative regularisation of the Newton weights")
    run.add_argument("--seed", type=int, default=None, help="seed for random probes")
    run.add_argument("--sequential", action="store_true",
                     help="bit-exact deterministic mode")

    sub.add_parser("list-presets", help="print the known experiment names")

    check = sub.add_parser("check", help="run the invariant suite on a small mesh")
    check.add_argument("--n", type=int, default=8)
    check.add_argument("--out", default=None)

    rates = sub.add_parser("rates", help="h-p coupled convergence study")
    rates.add_argument("datum", help="boundary datum name (e.g. aronsson)")
    rates.add_argument("coupling", help="h^-1/2 (singular) or h^-1 (smooth)")
    rates.add_argument("--ns", default="8,16,32", help="comma-separated resolutions")
    rates.add_argument("--lambda", dest="lam", type=float, default=None)
    rates.add_argument("--out", default=None, help="write the rate table CSV here")
    rates.add_argument("--tol", type=float, default=None)
    return parser


def _parse_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _region_from_string(text: str) -> RegionSpec:
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    params = [float(tok) for tok in rest.split(",") if tok.strip()] if rest else []
    if kind == "whole_domain":
        return RegionSpec.whole_domain()
    if kind == "axis_square":
        if len(params) != 3:
            raise UsageError("axis_square region needs cx,cy,half_width")
        return RegionSpec.axis_square((params[0], params[1]), params[2])
    if kind == "annulus":
        if len(params) != 2:
            raise UsageError("annulus region needs r_in,r_out")
        return RegionSpec.annulus(params[0], params[1])
    if kind == "astroid_band":
        return RegionSpec.astroid_band(*params[:1]) if params else RegionSpec.astroid_band()
    raise UsageError(f"unknown region kind {kind!r}")


def _config_from_file(path: str) -> experiments.ExperimentConfig:
    kv = _parse_config_file(path)
    name = kv.pop("preset", None) or kv.pop("name", None)
    if name is None:
        raise UsageError(f"{path}: missing 'preset' or 'name'")
    overrides = {}
    if "n" in kv:
        overrides["n"] = int(kv.pop("n"))
    if name in experiments.PRESET_NAMES:
        config = experiments.preset_config(name, **overrides)
    elif name == "custom":
        if "datum" not in kv:
            raise UsageError(f"{path}: custom run needs a datum")
        n = overrides.get("n", experiments.DEFAULT_FIGURE_N)
        mesh_kind = kv.pop("mesh", "square")
        mesh = experiments.MeshSpec("square", n) if mesh_kind == "square" \
            else experiments.annulus_spec_for(n)
        region = _region_from_string(kv.pop("region", "whole_domain"))
        config = experiments.ExperimentConfig(
            name="custom", mesh=mesh, datum=kv.pop("datum"),
            lam=float(kv.pop("lambda")) if "lambda" in kv else None,
            regions=(("O", region),),
        )
    else:
        raise UsageError(f"{path}: unknown experiment name {name!r}")
    return _apply_overrides(config, kv)


def _apply_overrides(config, kv: dict):
    from dataclasses import replace

    if "ladder" in kv:
        ladder = tuple(float(tok) for tok in str(kv.pop("ladder")).split(","))
        config = replace(config, ladder=ladder,
                         reporting=tuple(p for p in config.reporting if p <= ladder[-1]))
    simple = {"rel_tol": float, "max_iters": int, "epsilon_rel": float,
              "seed": int, "out": str, "sequential": lambda v: str(v).lower() in ("1", "true", "yes")}
    for key, conv in simple.items():
        if key in kv:
            val = conv(kv.pop(key))
            config = replace(config, **({"out_dir": val} if key == "out" else {key: val}))
    if kv:
        raise UsageError(f"unknown config keys: {', '.join(sorted(kv))}")
    return config


def _cmd_run(args) -> int:
    from dataclasses import replace

    if args.target in experiments.PRESET_NAMES:
        n = args.n if args.n is not None else experiments.DEFAULT_FIGURE_N
        config = experiments.preset_config(args.target, n=n)
    elif os.path.exists(args.target):
        config = _config_from_file(args.target)
        if args.n is not None:
            base = config.mesh
            mesh = experiments.MeshSpec("square", args.n) if base.kind == "square" \
                else experiments.annulus_spec_for(args.n, base.r_in, base.r_out)
            config = replace(config, mesh=mesh)
    else:
        raise UsageError(f"{args.target!r} is neither a preset nor a config file")

    if args.ladder is not None:
        ladder = tuple(float(tok) for tok in args.ladder.split(","))
        config = replace(config, ladder=ladder,
                         reporting=tuple(p for p in config.reporting if p <= ladder[-1]))
    if args.tol is not None:
        config = replace(config, rel_tol=args.tol)
    if args.eps is not None:
        config = replace(config, epsilon_rel=args.eps)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.sequential:
        config = replace(config, sequential=True)
    if args.out is not None:
        config = replace(config, out_dir=args.out)

    summary = experiments.run_experiment(config)
    worst = max((s.iterations for s in summary.solve_report.steps), default=0)
    print(f"{config.name}: ladder of {len(summary.solve_report.steps)} exponents "
          f"converged={summary.solve_report.converged} "
          f"(max {worst} Newton iterations/step)")
    print(f"artifacts in {summary.out_dir}")
    return EXIT_OK


def _cmd_list_presets() -> int:
    for name in experiments.PRESET_NAMES:
        config = experiments.preset_config(name, n=experiments.DEFAULT_TEST_N)
        region_kind = config.regions[0][1].kind
        print(f"{name:16s} datum={config.datum:15s} mesh={config.mesh.kind:7s} "
              f"region={region_kind}")
    print(f"{'custom':16s} (requires a config file with explicit fields)")
    return EXIT_OK


def _cmd_check(args) -> int:
    """Invariant battery on a small mesh; failures exit with code 3."""
    n = args.n
    failures = []

    def item(label, ok, detail=""):
        print(f"[{'ok' if ok else 'FAIL'}] {label}" + (f" ({detail})" if detail else ""))
        if not ok:
            failures.append(label)

    mesh = build_square_mesh(n)
    area = float(mesh.element_area.sum())
    item("square mesh total area", abs(area - 4.0) < 1e-12, f"area={area!r}")
    item("shape regularity floor", mesh.shape_regularity > 0.1,
         f"mu={mesh.shape_regularity:.4f}")
    item("quasi-uniformity cap", mesh.quasi_uniformity <= 4.0,
         f"spread={mesh.quasi_uniformity:.3f}")

    datum = catalog_lookup("affine", matrix=[[1.0, 2.0], [0.5, -1.0]])
    plan = solver.default_ladder(10)
    solutions, report = solver.solve_p_laplace(mesh, datum, plan)
    interp = fem.interpolate_boundary(mesh, datum)
    dev = max(float(np.abs(f.values - interp.values).max()) for _, f in solutions)
    item("affine exactness", dev <= 1e-10, f"max deviation={dev:.2e}")

    aronsson = catalog_lookup("aronsson")
    solutions, report = solver.solve_p_laplace(mesh, aronsson, solver.default_ladder(20))
    region = resolve_subdomain(mesh, RegionSpec.axis_square((0.5, 0.5), 0.375))
    ok_tail = True
    try:
        for p, f in solutions:
            if p > 2:
                sigma = measures.build_sigma(f, p, region)
                measures.tail_bound_check(sigma, f)
    except InvariantViolationError as err:
        ok_tail = False
        detailed = str(err)
    item("tail bound on aronsson ladder", ok_tail,
         "" if ok_tail else detailed)

    p_last, f_last = solutions[-1]
    violation = measures.divergence_free_check(f_last, p_last, region)
    item("divergence-free form", violation <= 100.0 * report.steps[-1].relative_residual
         + 100.0 * 1e-8, f"violation={violation:.2e}")

    sigma1 = measures.build_sigma(f_last, p_last, region)
    doubled = fem.FEField(mesh, 2.0 * f_last.values)
    sigma2 = measures.build_sigma(doubled, p_last, region)
    drift = float(np.abs(sigma1.weights - sigma2.weights).max())
    item("sigma scaling invariance", drift <= 1e-12, f"drift={drift:.2e}")

    out = args.out or os.path.join(tempfile.mkdtemp(prefix="linfty_check_"), "run")
    config = experiments.preset_config("aronsson_fig1", n=n, out_dir=out,
                                       ladder=tuple(solver.default_ladder(10).ladder),
                                       reporting=(2, 4, 10))
    summary = experiments.run_experiment(config)
    try:
        experiments.validate_summary(os.path.join(summary.out_dir, "summary.json"))
        item("summary schema", True)
    except Exception as err:  # jsonschema.ValidationError or IO errors
        item("summary schema", False, str(err))

    if failures:
        print(f"{len(failures)} invariant check(s) failed")
        return EXIT_INVARIANT
    print("all invariant checks passed")
    return EXIT_OK


def _cmd_rates(args) -> int:
    datum = catalog_lookup(args.datum, lam=args.lam)
    ns = [int(tok) for tok in args.ns.split(",") if tok.strip()]
    opts = solver.NewtonOptions(rel_tol=args.tol) if args.tol else solver.NewtonOptions()
    table = solver.hp_coupled_run(datum, args.coupling, ns, opts)
    print(f"datum={table.datum} coupling={table.coupling}")
    print("      n           h      p        error")
    for row in table.rows:
        print(f"{row.n:7d} {row.h:11.5g} {row.p:6g} {row.error:12.5e}")
    if table.slope is not None:
        print(f"fitted slope: {table.slope:.3f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "h", "p", "error"])
            for row in table.rows:
                w.writerow([row.n, format(row.h, ".17g"), row.p,
                            format(row.error, ".17g")])
        print(f"rate table written to {args.out}")
    return EXIT_OK


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list-presets":
            return _cmd_list_presets()
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "rates":
            return _cmd_rates(args)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ValueError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NewtonDivergenceError, SingularSystemError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except InvariantViolationError as err:
        print(f"invariant violation: {err}", file=sys.stderr)
        return EXIT_INVARIANT


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
