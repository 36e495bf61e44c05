"""Experiment registry and orchestration: solve, measure, persist.

Each preset reproduces one of the published experiment set-ups: a boundary
datum, a mesh of the square or the annulus, a region O, and diagnostics over
the exponent ladder.  Artifacts per run: mesh CSVs, per-exponent solution
CSVs and VTK files, per-(exponent, region) sigma CSVs, and summary.json.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field as dfield, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fem, measures, solver
from .boundary_data import catalog_lookup
from .mesh import (
    Mesh,
    RegionSpec,
    build_annulus_mesh,
    build_square_mesh,
    resolve_subdomain,
    write_mesh_csv,
)

SCHEMA_TAG = "linftylab/summary/v1"
DEFAULT_FIGURE_N = 64
DEFAULT_TEST_N = 16


@dataclass(frozen=True)
class MeshSpec:
    kind: str = "square"            # "square" or "annulus"
    n: int = DEFAULT_FIGURE_N
    n_r: int = 0
    n_theta: int = 0
    r_in: float = 0.2
    r_out: float = 0.8

    def build(self) -> Mesh:
        if self.kind == "square":
            return build_square_mesh(self.n)
        if self.kind == "annulus":
            return build_annulus_mesh(self.n_r, self.n_theta, self.r_in, self.r_out)
        raise ValueError(f"unknown mesh kind {self.kind!r}")

    def as_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n}
        if self.kind == "annulus":
            d.update(n_r=self.n_r, n_theta=self.n_theta,
                     r_in=self.r_in, r_out=self.r_out)
        return d


def annulus_spec_for(n: int, r_in: float = 0.2, r_out: float = 0.8) -> MeshSpec:
    """Annulus resolution matched to a square resolution knob n.

    n_r = n/2 radial layers and n_theta = 3n sectors balance the radial and
    angular element sizes for r_out/r_in = 4, keeping the quasi-uniformity
    spread below 2.
    """
    return MeshSpec("annulus", n=n, n_r=max(2, n // 2),
                    n_theta=max(8, 3 * n), r_in=r_in, r_out=r_out)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    mesh: MeshSpec
    datum: str
    lam: Optional[float] = None
    ladder: tuple = solver._BASE_LADDER
    reporting: tuple = solver.REPORTING_EXPONENTS
    regions: tuple = (("O", RegionSpec.whole_domain()),)
    corner_hints: tuple = ()
    pinned_points: tuple = ()
    rel_tol: float = 1e-8
    max_iters: int = 20
    epsilon_rel: float = 1e-10
    tail_alphas: tuple = measures.DEFAULT_TAIL_ALPHAS
    probe_trials: int = 64
    probe_amplitude: float = 1e-2
    seed: int = 0
    sequential: bool = False
    out_dir: Optional[str] = None

    def newton_options(self) -> solver.NewtonOptions:
        return solver.NewtonOptions(rel_tol=self.rel_tol, max_iters=self.max_iters,
                                    epsilon_rel=self.epsilon_rel)

    def plan(self) -> solver.ContinuationPlan:
        return solver.ContinuationPlan(self.ladder)

    def lookup_datum(self):
        return catalog_lookup(self.datum, lam=self.lam)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "mesh": self.mesh.as_dict(),
            "datum": self.datum,
            "lam": self.lam,
            "ladder": [float(p) for p in self.ladder],
            "reporting": [float(p) for p in self.reporting],
            "regions": [
                {"name": rname, "kind": spec.kind,
                 "params": {k: v for k, v in spec.params.items() if k != "fn"}}
                for rname, spec in self.regions
            ],
            "corner_hints": [list(map(float, pt)) for pt in self.corner_hints],
            "pinned_points": [list(map(float, pt)) for pt in self.pinned_points],
            "rel_tol": self.rel_tol,
            "max_iters": self.max_iters,
            "epsilon_rel": self.epsilon_rel,
            "tail_alphas": list(self.tail_alphas),
            "probe_trials": self.probe_trials,
            "probe_amplitude": self.probe_amplitude,
            "seed": self.seed,
            "sequential": self.sequential,
        }


def _square_corners(hw: float, center=(0.0, 0.0)) -> tuple:
    cx, cy = center
    return ((cx - hw, cy - hw), (cx + hw, cy - hw), (cx - hw, cy + hw), (cx + hw, cy + hw))


def _preset_aronsson_fig1(n):
    return ExperimentConfig(
        name="aronsson_fig1", mesh=MeshSpec("square", n), datum="aronsson",
        regions=(("O", RegionSpec.axis_square((0.5, 0.5), 0.375)),),
        corner_hints=((0.875, 0.875),),
    )


def _preset_aronsson_fig2(n):
    return ExperimentConfig(
        name="aronsson_fig2", mesh=MeshSpec("square", n), datum="aronsson",
        regions=(("O", RegionSpec.axis_square((0.0, 0.0), 0.25)),),
        corner_hints=_square_corners(0.25),
    )


def _preset_aronsson_fig3(n):
    return ExperimentConfig(
        name="aronsson_fig3", mesh=MeshSpec("square", n), datum="aronsson",
        regions=(("O", RegionSpec.axis_square((0.0, 0.0), 0.35)),),
        corner_hints=_square_corners(0.35),
    )


def _preset_aronsson_fig4(n):
    return ExperimentConfig(
        name="aronsson_fig4", mesh=MeshSpec("square", n), datum="aronsson",
        regions=(("O", RegionSpec.astroid_band(0.5)),),
    )


def _preset_scalar_eikonal(n):
    # the cone vertex is held at its datum value: the free p-harmonic field
    # relaxes away from the cone (|x| fails to be a subsolution at its tip),
    # while the published experiment studies the eikonal solution itself;
    # points have positive p-capacity for p > 2, so this is well posed
    return ExperimentConfig(
        name="scalar_eikonal", mesh=MeshSpec("square", n), datum="cone",
        regions=(("O", RegionSpec.axis_square((0.5, 0.5), 0.375)),),
        pinned_points=((0.0, 0.0),),
    )


def _preset_vec_eikonal(n):
    return ExperimentConfig(
        name="vec_eikonal", mesh=MeshSpec("square", n), datum="vec_eikonal",
        regions=(("O", RegionSpec.axis_square((0.0, 0.0), np.pi / 4.0)),),
    )


def _preset_mixed(n, lam, name):
    return ExperimentConfig(
        name=name, mesh=MeshSpec("square", n), datum="mixed", lam=lam,
        regions=(("O", RegionSpec.whole_domain()),),
        corner_hints=((-1.0, -1.0), (0.0, -1.0), (-1.0, 1.0), (0.0, 1.0)),
    )


def _preset_diffeo(n):
    return ExperimentConfig(
        name="diffeo", mesh=annulus_spec_for(n), datum="diffeo",
        regions=(("O", RegionSpec.whole_domain()),),
    )


_PRESET_BUILDERS = {
    "aronsson_fig1": _preset_aronsson_fig1,
    "aronsson_fig2": _preset_aronsson_fig2,
    "aronsson_fig3": _preset_aronsson_fig3,
    "aronsson_fig4": _preset_aronsson_fig4,
    "scalar_eikonal": _preset_scalar_eikonal,
    "vec_eikonal": _preset_vec_eikonal,
    "mixed_pos": lambda n: _preset_mixed(n, 0.5, "mixed_pos"),
    "mixed_neg": lambda n: _preset_mixed(n, -0.5, "mixed_neg"),
    "diffeo": _preset_diffeo,
}

PRESET_NAMES = tuple(_PRESET_BUILDERS)
CONFIG_NAMES = PRESET_NAMES + ("custom",)


def preset_config(name: str, n: int = DEFAULT_FIGURE_N, **overrides) -> ExperimentConfig:
    if name not in _PRESET_BUILDERS:
        raise ValueError(f"unknown preset {name!r}; presets: {', '.join(PRESET_NAMES)}")
    config = _PRESET_BUILDERS[name](n)
    return replace(config, **overrides) if overrides else config


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _p_tag(p: float) -> str:
    return str(int(p)) if float(p).is_integer() else f"{p:g}".replace(".", "_")


def export_vtk(mesh: Mesh, field: fem.FEField, sigma_weights, path) -> str:
    """ASCII legacy VTK unstructured grid with solution and measure data.

    Point data carries the solution (scalar for N = 1, 3-padded vector for
    N = 2); cell data carries grad_norm, sigma_weight and log_density.
    sigma_weights is a per-element array, zero outside the measured region.
    Coordinates are written with 17 significant digits so a reread reproduces
    them exactly.
    """
    sigma_weights = np.asarray(sigma_weights, dtype=float)
    if sigma_weights.shape != (mesh.num_triangles,):
        raise ValueError("sigma_weights must have one entry per element")
    grads = fem.compute_gradients(field)
    with np.errstate(divide="ignore"):
        log_density = np.where(sigma_weights > 0.0, np.log(sigma_weights), 0.0)
    lines = [
        "# vtk DataFile Version 3.0",
        "linftylab field export",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}")
    for tri in mesh.triangles:
        lines.append(f"3 {tri[0]} {tri[1]} {tri[2]}")
    lines.append(f"CELL_TYPES {mesh.num_triangles}")
    lines.extend(["5"] * mesh.num_triangles)
    lines.append(f"POINT_DATA {mesh.num_vertices}")
    if field.target_dim == 1:
        lines.append("SCALARS solution double 1")
        lines.append("LOOKUP_TABLE default")
        for v in field.values[:, 0]:
            lines.append(_fmt(v))
    else:
        lines.append("VECTORS solution double")
        for row in field.values:
            padded = list(row) + [0.0] * (3 - len(row))
            lines.append(" ".join(_fmt(v) for v in padded[:3]))
    lines.append(f"CELL_DATA {mesh.num_triangles}")
    for label, data in (("grad_norm", grads.norms),
                        ("sigma_weight", sigma_weights),
                        ("log_density", log_density)):
        lines.append(f"SCALARS {label} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in data)
    path = str(path)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _write_solution_csv(field: fem.FEField, path: str) -> str:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex_id"] + [f"u_{k + 1}" for k in range(field.target_dim)])
        for i, row in enumerate(field.values):
            w.writerow([i] + [_fmt(v) for v in row])
    return path


def _write_sigma_csv(measure: measures.SigmaMeasure, path: str) -> str:
    mesh = measure.subdomain.mesh
    bary = mesh.barycenters()[measure.elements]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element_id", "barycenter_x", "barycenter_y",
                    "grad_norm", "log_density", "weight"])
        for eid, (bx, by), g, ld, wt in zip(
                measure.elements, bary, measure.grad_norms,
                measure.log_density, measure.weights):
            w.writerow([int(eid), _fmt(bx), _fmt(by), _fmt(g),
                        _fmt(ld) if np.isfinite(ld) else "-inf", _fmt(wt)])
    return path


SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "config", "solve_report", "measures", "manifest"],
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "config": {"type": "object", "required": ["name", "mesh", "datum", "ladder"]},
        "solve_report": {
            "type": "object",
            "required": ["converged", "steps"],
            "properties": {
                "converged": {"type": "boolean"},
                "steps": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["p", "iterations", "converged",
                                     "relative_residual"],
                    },
                },
            },
        },
        "measures": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["p", "region", "report", "divergence_violation"],
            },
        },
        "manifest": {"type": "array", "items": {"type": "string"}},
        "errors": {"type": "array"},
    },
}


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    out_dir: str
    solve_report: solver.SolveReport
    measure_entries: list = dfield(default_factory=list)
    probe_entries: list = dfield(default_factory=list)
    manifest: list = dfield(default_factory=list)
    errors: list = dfield(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA_TAG,
            "config": self.config.as_dict(),
            "out_dir": self.out_dir,
            "solve_report": self.solve_report.as_dict(),
            "measures": self.measure_entries,
            "probes": self.probe_entries,
            "manifest": [os.path.basename(p) for p in self.manifest],
            "errors": self.errors,
        }


def default_output_root() -> str:
    return os.environ.get("LINFTY_OUT", "linfty_out")


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Solve the ladder, build every reporting measure, write all artifacts."""
    out_dir = Path(config.out_dir or os.path.join(default_output_root(), config.name))
    out_dir.mkdir(parents=True, exist_ok=True)

    mesh = config.mesh.build()
    datum = config.lookup_datum()
    regions = [(rname, resolve_subdomain(mesh, spec)) for rname, spec in config.regions]
    manifest = list(write_mesh_csv(mesh, out_dir))
    pinned = tuple(
        int(np.argmin(np.linalg.norm(mesh.vertices - np.asarray(pt, dtype=float), axis=1)))
        for pt in config.pinned_points
    )

    summary = ExperimentSummary(config, str(out_dir), solver.SolveReport(),
                                manifest=manifest)
    try:
        solutions, report = solver.solve_p_laplace(
            mesh, datum, config.plan(), config.newton_options(),
            pinned_vertices=pinned)
    except Exception as err:
        summary.errors.append(f"solver failure: {err}")
        if getattr(err, "report", None) is not None:
            summary.solve_report = err.report
        _write_summary(summary, out_dir)
        raise
    summary.solve_report = report

    fields = dict(solutions)
    reporting = [p for p in config.reporting if p in fields]
    rng = np.random.default_rng(config.seed)
    p_final = reporting[-1] if reporting else None

    for p in reporting:
        field = fields[p]
        tag = _p_tag(p)
        manifest.append(_write_solution_csv(field, str(out_dir / f"solution_p{tag}.csv")))
        primary_region = regions[0][1]
        sigma = measures.build_sigma(field, p, primary_region)
        weights_full = np.zeros(mesh.num_triangles)
        weights_full[sigma.elements] = sigma.weights
        manifest.append(export_vtk(mesh, field, weights_full,
                                   str(out_dir / f"field_p{tag}.vtk")))

        for rname, region in regions:
            sigma_r = measures.build_sigma(field, p, region)
            violation = measures.divergence_free_check(field, p, region)
            report_r = measures.concentration_diagnostics(
                sigma_r, corner_points=config.corner_hints, field=field)
            path = str(out_dir / f"sigma_{config.name}_p{tag}_{rname}.csv")
            manifest.append(_write_sigma_csv(sigma_r, path))
            summary.measure_entries.append({
                "p": float(p),
                "region": rname,
                "region_area": region.area,
                "divergence_violation": violation,
                "divergence_contract": 100.0 * config.rel_tol,
                "report": report_r.as_dict(),
            })
            if p == p_final and region.interior_vertices().size > 0:
                probe = measures.absolute_minimiser_probe(
                    field, region, trials=config.probe_trials,
                    amplitude=config.probe_amplitude, rng=rng)
                summary.probe_entries.append(
                    {"p": float(p), "region": rname, **probe.as_dict()})

    _write_summary(summary, out_dir)
    missing = [p for p in summary.manifest if not os.path.exists(p)]
    if missing:
        raise RuntimeError(f"manifest entries missing on disk: {missing}")
    return summary


def _write_summary(summary: ExperimentSummary, out_dir: Path) -> str:
    path = out_dir / "summary.json"
    with open(path, "w") as fh:
        json.dump(summary.as_dict(), fh, indent=2)
        fh.write("\n")
    if str(path) not in summary.manifest:
        summary.manifest.append(str(path))
    return str(path)


def validate_summary(path) -> dict:
    """Load a summary.json and check it against the versioned schema."""
    import jsonschema

    with open(path) as fh:
        data = json.load(fh)
    jsonschema.validate(data, SUMMARY_SCHEMA)
    return data
