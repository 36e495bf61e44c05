"""Contour panels of the concentration measures, one image per exponent."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

from . import io

DEFAULT_LEVEL_COUNT = 10


@dataclass
class FigureSpec:
    """What to render for one experiment directory."""

    experiment_dir: str
    exponents: Optional[Sequence[float]] = None  # default: the summary's reporting set
    level_count: int = DEFAULT_LEVEL_COUNT
    variable: str = "density"                    # or "log_density"
    out_dir: Optional[str] = None
    image_format: str = "png"

    def __post_init__(self):
        if self.level_count < 2:
            raise ValueError("need at least two contour levels")
        if self.variable not in ("density", "log_density"):
            raise ValueError("variable must be 'density' or 'log_density'")
        if self.out_dir is None:
            self.out_dir = os.path.join(self.experiment_dir, "figures")


@dataclass
class PanelResult:
    p: float
    image_path: Optional[str]
    levels: Optional[np.ndarray]
    note: str


@dataclass
class RenderResult:
    panels: list = field(default_factory=list)
    log_path: str = ""

    @property
    def rendered(self):
        return [p for p in self.panels if p.image_path]

    @property
    def clean(self) -> bool:
        return all(p.image_path for p in self.panels)


def equal_levels(vmin: float, vmax: float, count: int) -> Optional[np.ndarray]:
    """count levels equally spaced between the extremes; None when flat.

    Ranges below double-precision resolution (relative spread < 1e-12) count
    as flat, otherwise the levels would collide.
    """
    if not vmax > vmin:
        return None
    if vmax - vmin <= 1e-12 * max(abs(vmax), abs(vmin)):
        return None
    return np.linspace(vmin, vmax, count)


def cell_to_point(mesh: io.MeshData, element_ids, cell_values) -> tuple:
    """Area-weighted average of cell values onto the vertices they touch.

    Returns (local vertices, local triangles, vertex values) restricted to the
    region spanned by the listed elements, ready for triangulation-based
    contouring.
    """
    tris = mesh.triangles[element_ids]
    areas = mesh.areas[element_ids]
    used = np.unique(tris)
    remap = -np.ones(mesh.vertices.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    local_tris = remap[tris]

    acc = np.zeros(used.size)
    wsum = np.zeros(used.size)
    np.add.at(acc, local_tris.ravel(), np.repeat(cell_values * areas, 3))
    np.add.at(wsum, local_tris.ravel(), np.repeat(areas, 3))
    return mesh.vertices[used], local_tris, acc / wsum


def _region_outline(mesh: io.MeshData, element_ids) -> np.ndarray:
    tris = mesh.triangles[element_ids]
    edges = np.sort(np.concatenate(
        [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq[counts == 1]


def render_sigma_panels(spec: FigureSpec) -> RenderResult:
    """One contour image per exponent; missing inputs are skipped with a
    warning collected in render_log.txt."""
    name, region, reporting = io.experiment_panels(spec.experiment_dir)
    exponents = list(spec.exponents) if spec.exponents is not None else reporting
    mesh = io.load_mesh(spec.experiment_dir)
    os.makedirs(spec.out_dir, exist_ok=True)

    result = RenderResult()
    log_lines = [f"experiment {name}, region {region}, variable {spec.variable}"]
    for p in exponents:
        tag = str(int(p)) if float(p).is_integer() else f"{p:g}"
        path = io.sigma_path(spec.experiment_dir, name, p, region)
        if not os.path.exists(path):
            note = f"p={tag}: SKIP missing {os.path.basename(path)}"
            log_lines.append(note)
            result.panels.append(PanelResult(p, None, None, note))
            continue
        sigma = io.load_sigma(path)
        areas = mesh.areas[sigma.element_ids]
        if spec.variable == "density":
            cell_values = sigma.weights / areas
        else:
            # log of the normalised density; useful where the linear scale
            # saturates at large p
            with np.errstate(divide="ignore"):
                cell_values = np.where(sigma.weights > 0.0,
                                       np.log(sigma.weights / areas), -np.inf)
            finite = np.isfinite(cell_values)
            if finite.any():
                cell_values = np.maximum(cell_values, cell_values[finite].min())
            else:
                cell_values = np.zeros_like(cell_values)

        verts, tris, point_values = cell_to_point(mesh, sigma.element_ids, cell_values)
        levels = equal_levels(float(cell_values.min()), float(cell_values.max()),
                              spec.level_count)
        triangulation = mtri.Triangulation(verts[:, 0], verts[:, 1], tris)

        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        if levels is None:
            ax.tripcolor(triangulation, np.zeros(verts.shape[0]),
                         shading="gouraud", cmap="viridis")
            note = f"p={tag}: OK (flat field, uniform fill)"
        else:
            ax.tricontour(triangulation, point_values, levels=levels,
                          cmap="viridis", linewidths=0.9)
            note = f"p={tag}: OK ({len(levels)} levels)"
        for a, b in _region_outline(mesh, sigma.element_ids):
            seg = mesh.vertices[[a, b]]
            ax.plot(seg[:, 0], seg[:, 1], color="black", linewidth=0.6)
        ax.set_xlim(-1.05, 1.05)
        ax.set_ylim(-1.05, 1.05)
        ax.set_aspect("equal")
        ax.set_title(f"$p = {tag}$")
        image_path = os.path.join(spec.out_dir,
                                  f"{name}_p{tag}_{region}.{spec.image_format}")
        fig.savefig(image_path, dpi=150)
        plt.close(fig)

        log_lines.append(note)
        result.panels.append(PanelResult(p, image_path, levels, note))

    result.log_path = os.path.join(spec.out_dir, "render_log.txt")
    with open(result.log_path, "w") as fh:
        fh.write("\n".join(log_lines) + "\n")
    return result
