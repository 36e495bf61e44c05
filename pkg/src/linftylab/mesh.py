"""Structured triangulations of the square and the annulus, and element-set regions.

Meshes are conforming: any two closed triangles meet in nothing, a common
vertex or a common full edge.  Generated meshes are validated at build time
for positive orientation, shape regularity (min inradius/diameter > 0.1) and
quasi-uniformity (diameter spread <= 4).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EmptySubdomainError

SHAPE_REGULARITY_FLOOR = 0.1
QUASI_UNIFORMITY_CAP = 4.0


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with per-element geometry.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    boundary_vertices : sorted int array of vertices on the domain boundary
    element_area, element_diameter, element_inradius : (nt,) float arrays
    basis_gradients : (nt, 3, 2) gradients of the local P1 hat functions
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertices: np.ndarray
    element_area: np.ndarray
    element_diameter: np.ndarray
    element_inradius: np.ndarray
    basis_gradients: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def shape_regularity(self) -> float:
        """min over elements of inradius/diameter."""
        return float(np.min(self.element_inradius / self.element_diameter))

    @property
    def quasi_uniformity(self) -> float:
        """max/min element diameter; an upper bound for the meshsize-function spread."""
        return float(np.max(self.element_diameter) / np.min(self.element_diameter))

    @property
    def meshsize(self) -> float:
        """max element diameter (the sup of the meshsize function)."""
        return float(np.max(self.element_diameter))

    def interior_vertex_mask(self) -> np.ndarray:
        mask = np.ones(self.num_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return mask

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)


def _element_geometry(vertices, triangles):
    """Areas, diameters, inradii and P1 basis gradients for all elements."""
    p = vertices[triangles]            # (nt, 3, 2)
    e0 = p[:, 2] - p[:, 1]             # edge opposite local vertex 0
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    cross = e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0])
    area = 0.5 * cross                 # signed; positive iff counterclockwise
    lengths = np.stack(
        [np.linalg.norm(e0, axis=1), np.linalg.norm(e1, axis=1), np.linalg.norm(e2, axis=1)],
        axis=1,
    )
    diameter = lengths.max(axis=1)
    perimeter = lengths.sum(axis=1)
    inradius = 2.0 * np.abs(area) / perimeter
    # grad of hat_i = rot90(opposite edge) / (2 area), with rot90 (x,y)->(-y,x)
    edges = np.stack([e0, e1, e2], axis=1)          # (nt, 3, 2)
    grads = np.empty_like(edges)
    grads[:, :, 0] = -edges[:, :, 1]
    grads[:, :, 1] = edges[:, :, 0]
    grads /= (2.0 * area)[:, None, None]
    return area, diameter, inradius, grads


def _sorted_edges(triangles):
    """All element edges as sorted vertex pairs, shape (3*nt, 2)."""
    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=0
    )
    return np.sort(e, axis=1)


def boundary_edges(mesh_or_triangles) -> np.ndarray:
    """Edges that belong to exactly one triangle."""
    triangles = getattr(mesh_or_triangles, "triangles", mesh_or_triangles)
    edges = _sorted_edges(triangles)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq[counts == 1]


def _finalize(vertices, triangles) -> Mesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    area, diameter, inradius, grads = _element_geometry(vertices, triangles)
    if np.any(area <= 0.0):
        raise ValueError("triangulation contains non-positively-oriented elements")
    edges = _sorted_edges(triangles)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if counts.max() > 2:
        raise ValueError("non-conforming triangulation: an edge is shared by > 2 elements")
    bdry = np.unique(boundary_edges(triangles))
    mesh = Mesh(vertices, triangles, bdry, area, diameter, inradius, grads)
    if mesh.shape_regularity <= SHAPE_REGULARITY_FLOOR:
        raise ValueError(
            f"mesh fails shape regularity: {mesh.shape_regularity:.4f} <= {SHAPE_REGULARITY_FLOOR}"
        )
    if mesh.quasi_uniformity > QUASI_UNIFORMITY_CAP:
        raise ValueError(
            f"mesh fails quasi-uniformity: {mesh.quasi_uniformity:.3f} > {QUASI_UNIFORMITY_CAP}"
        )
    return mesh


def build_square_mesh(n: int) -> Mesh:
    """Criss-cross triangulation of [-1, 1]^2 with n cells per axis.

    Each grid cell is split into four triangles by its centre, giving
    (n+1)^2 + n^2 vertices and 4 n^2 congruent elements.  The pattern is
    symmetric under x <-> -x and y <-> -y, so it does not bias the
    reflection-symmetric experiments.

    Parameters
    ----------
    n : int
        Subdivisions per axis, at least 2.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"square mesh needs integer n >= 2, got {n!r}")
    ticks = np.linspace(-1.0, 1.0, n + 1)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    centres_1d = 0.5 * (ticks[:-1] + ticks[1:])
    cx, cy = np.meshgrid(centres_1d, centres_1d, indexing="ij")
    centres = np.column_stack([cx.ravel(), cy.ravel()])
    vertices = np.vstack([grid, centres])

    def gid(i, j):
        return i * (n + 1) + j

    n_grid = (n + 1) * (n + 1)
    triangles = []
    for i in range(n):
        for j in range(n):
            sw, se = gid(i, j), gid(i + 1, j)
            nw, ne = gid(i, j + 1), gid(i + 1, j + 1)
            c = n_grid + i * n + j
            triangles += [(sw, se, c), (se, ne, c), (ne, nw, c), (nw, sw, c)]
    return _finalize(vertices, np.array(triangles))


def build_annulus_mesh(n_r: int, n_theta: int, r_in: float, r_out: float) -> Mesh:
    """Polar-grid triangulation of the annulus r_in < |x| < r_out.

    (n_r+1) * n_theta vertices, periodic in angle; each polar quad is split
    into two triangles, giving 2 * n_r * n_theta elements.  Radii are graded
    geometrically so elements are self-similar (local size proportional to
    the radius, matching the 1/r curvature scale of radial data); the
    meshsize spread is then about r_out/r_in, which must stay within the
    quasi-uniformity cap.
    """
    if not (0.0 < r_in < r_out):
        raise ValueError(f"annulus needs 0 < r_in < r_out, got {r_in}, {r_out}")
    if n_r < 2 or n_theta < 8:
        raise ValueError("annulus mesh needs n_r >= 2 and n_theta >= 8")
    radii = r_in * (r_out / r_in) ** (np.arange(n_r + 1) / n_r)
    angles = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    rr, tt = np.meshgrid(radii, angles, indexing="ij")
    vertices = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])

    def vid(i, j):
        return i * n_theta + (j % n_theta)

    triangles = []
    for i in range(n_r):
        for j in range(n_theta):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            triangles += [(v00, v10, v11), (v00, v11, v01)]
    return _finalize(vertices, np.array(triangles))


@dataclass(frozen=True)
class Subdomain:
    """A union of mesh elements standing in for an open subset of the domain."""

    mesh: Mesh
    elements: np.ndarray          # sorted triangle indices
    closure_vertices: np.ndarray  # vertices incident to the selected elements
    boundary_edges: np.ndarray    # (m, 2) vertex pairs on the region boundary

    @property
    def area(self) -> float:
        return float(self.mesh.element_area[self.elements].sum())

    def contains_elements(self, elements) -> bool:
        return bool(np.isin(elements, self.elements).all())

    def interior_vertices(self) -> np.ndarray:
        """Vertices all of whose incident elements lie in the region, minus ∂Ω.

        Hat functions of these vertices vanish on the region boundary, so they
        span the region's interior test space.
        """
        nv = self.mesh.num_vertices
        incident_total = np.bincount(self.mesh.triangles.ravel(), minlength=nv)
        incident_inside = np.bincount(
            self.mesh.triangles[self.elements].ravel(), minlength=nv
        )
        mask = (incident_inside == incident_total) & (incident_inside > 0)
        mask[self.mesh.boundary_vertices] = False
        return np.flatnonzero(mask)


def make_subdomain(mesh: Mesh, element_indices) -> Subdomain:
    elements = np.unique(np.asarray(element_indices, dtype=np.int64))
    if elements.size == 0:
        raise EmptySubdomainError("subdomain selects no elements")
    if elements[0] < 0 or elements[-1] >= mesh.num_triangles:
        raise ValueError("subdomain element index out of range")
    tris = mesh.triangles[elements]
    closure = np.unique(tris)
    edges = _sorted_edges(tris)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return Subdomain(mesh, elements, closure, uniq[counts == 1])


@dataclass(frozen=True)
class RegionSpec:
    """Declarative description of an open region, resolved to whole elements."""

    kind: str
    params: dict = field(default_factory=dict)

    @staticmethod
    def whole_domain() -> "RegionSpec":
        return RegionSpec("whole_domain")

    @staticmethod
    def axis_square(center, half_width: float) -> "RegionSpec":
        if half_width <= 0.0:
            raise ValueError("axis_square needs positive half_width")
        return RegionSpec(
            "axis_square", {"center": (float(center[0]), float(center[1])),
                            "half_width": float(half_width)}
        )

    @staticmethod
    def annulus(r_in: float, r_out: float) -> "RegionSpec":
        if not (0.0 <= r_in < r_out):
            raise ValueError("annulus region needs 0 <= r_in < r_out")
        return RegionSpec("annulus", {"r_in": float(r_in), "r_out": float(r_out)})

    @staticmethod
    def astroid_band(half_width: float = 0.5) -> "RegionSpec":
        """Square of the given half-width clipped to |x|^(2/3) + |y|^(2/3) <= 1.

        The boundary then contains four arcs of the curve y = (1 - x^(2/3))^(3/2),
        one per quadrant, spanning x in [0.225, 0.5] for the default half-width.
        """
        return RegionSpec("astroid_band", {"half_width": float(half_width)})

    @staticmethod
    def predicate(fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "RegionSpec":
        """Custom membership test, vectorised over coordinate arrays."""
        return RegionSpec("predicate_table", {"fn": fn})


def _region_mask(spec: RegionSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if spec.kind == "whole_domain":
        return np.ones_like(x, dtype=bool)
    if spec.kind == "axis_square":
        cx, cy = spec.params["center"]
        hw = spec.params["half_width"]
        return (np.abs(x - cx) <= hw) & (np.abs(y - cy) <= hw)
    if spec.kind == "annulus":
        r = np.hypot(x, y)
        return (spec.params["r_in"] <= r) & (r <= spec.params["r_out"])
    if spec.kind == "astroid_band":
        hw = spec.params["half_width"]
        inside_square = (np.abs(x) <= hw) & (np.abs(y) <= hw)
        inside_astroid = np.cbrt(x * x) + np.cbrt(y * y) <= 1.0
        return inside_square & inside_astroid
    if spec.kind == "predicate_table":
        return np.asarray(spec.params["fn"](x, y), dtype=bool)
    raise ValueError(f"unknown region kind {spec.kind!r}")


def resolve_subdomain(mesh: Mesh, spec: RegionSpec) -> Subdomain:
    """Select the elements whose barycentre satisfies the region predicate."""
    bary = mesh.barycenters()
    mask = _region_mask(spec, bary[:, 0], bary[:, 1])
    if not mask.any():
        raise EmptySubdomainError(f"region {spec.kind!r} selects no elements")
    return make_subdomain(mesh, np.flatnonzero(mask))


def write_mesh_csv(mesh: Mesh, out_dir) -> list:
    """Write vertices.csv (id,x,y,is_boundary) and triangles.csv (id,v0,v1,v2)."""
    out_dir = str(out_dir)
    bmask = np.zeros(mesh.num_vertices, dtype=int)
    bmask[mesh.boundary_vertices] = 1
    vpath = f"{out_dir}/vertices.csv"
    with open(vpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "is_boundary"])
        for i, (x, y) in enumerate(mesh.vertices):
            w.writerow([i, format(x, ".17g"), format(y, ".17g"), bmask[i]])
    tpath = f"{out_dir}/triangles.csv"
    with open(tpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "v0", "v1", "v2"])
        for i, tri in enumerate(mesh.triangles):
            w.writerow([i, tri[0], tri[1], tri[2]])
    return [vpath, tpath]
