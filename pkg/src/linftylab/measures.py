"""Element-supported concentration measures and their diagnostics.

The measure of a region assigns each element the normalised weight
|DU|^{p-2} * area, computed in log space so that p ~ 100 never overflows.
Densities are piecewise constant, so Borel sets are approximated by element
unions.  All computations here use the raw gradients (no regularisation).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import fem
from .errors import (
    DegenerateMeasureError,
    DegenerateProbeError,
    InvariantViolationError,
)
from .mesh import Subdomain

TAIL_TOLERANCE = 1e-12
DEFAULT_TAIL_ALPHAS = (0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class SigmaMeasure:
    """Discrete concentration measure of a field over a region.

    weights sum to 1 and are invariant under field scaling U -> cU; the
    log densities are (p-2) * log|DU|_K (-inf on zero-gradient elements).
    """

    subdomain: Subdomain
    p: float
    log_density: np.ndarray   # per region element
    weights: np.ndarray       # per region element, sums to 1
    grad_norms: np.ndarray    # per region element

    @property
    def elements(self) -> np.ndarray:
        return self.subdomain.elements


def build_sigma(field: fem.FEField, p: float, region: Subdomain) -> SigmaMeasure:
    """Normalised measure with density |DU|^{p-2} on the region.

    For p = 2 the density is identically one and the normalised area measure
    is returned exactly.
    """
    if p < 2.0:
        raise ValueError("build_sigma needs p >= 2")
    areas = field.mesh.element_area[region.elements]
    norms = fem.compute_gradients(field).norms[region.elements]
    if p == 2.0:
        logdens = np.zeros_like(norms)
        weights = areas / areas.sum()
        return SigmaMeasure(region, p, logdens, weights, norms)
    if norms.max() == 0.0:
        raise DegenerateMeasureError(
            "all gradients vanish on the region; the density is undefined"
        )
    with np.errstate(divide="ignore"):
        logdens = (p - 2.0) * np.log(norms)
    raw = np.exp(logdens - logdens.max()) * areas
    weights = raw / raw.sum()
    return SigmaMeasure(region, p, logdens, weights, norms)


def sigma_of_set(measure: SigmaMeasure, subset) -> float:
    """Measure of an element union; the subset must live inside the region."""
    if isinstance(subset, Subdomain):
        wanted = subset.elements
    else:
        wanted = np.unique(np.asarray(subset, dtype=np.int64))
    if wanted.size == 0:
        return 0.0
    pos = np.searchsorted(measure.elements, wanted)
    inside = (pos < measure.elements.size) & \
        (measure.elements[np.minimum(pos, measure.elements.size - 1)] == wanted)
    if not inside.all():
        raise ValueError("subset contains elements outside the measure's region")
    return float(measure.weights[pos].sum())


def _log_power_integral(field: fem.FEField, p: float, region: Subdomain) -> float:
    """log of sum over region of |DU|^{p-2} * area."""
    norms = fem.compute_gradients(field).norms[region.elements]
    areas = field.mesh.element_area[region.elements]
    if norms.max() == 0.0:
        raise DegenerateMeasureError("all gradients vanish on the region")
    with np.errstate(divide="ignore"):
        logs = (p - 2.0) * np.log(norms) + np.log(areas)
    return float(logsumexp(logs))


def lp_functional(field: fem.FEField, p: float, region: Subdomain) -> float:
    """(integral over the region of |DU|^{p-2})^{1/(p-2)}, via log-sum-exp."""
    if p <= 2.0:
        raise ValueError("lp_functional needs p > 2")
    return float(np.exp(_log_power_integral(field, p, region) / (p - 2.0)))


def mean_power_level(field: fem.FEField, p: float, region: Subdomain) -> float:
    """Power mean of order p-2 of |DU| over the region.

    Equals lp_functional / area^{1/(p-2)}; never exceeds the sup of |DU|, so
    sub-level fractions measured against it obey the exact tail bound for
    regions of any area.
    """
    if p <= 2.0:
        raise ValueError("mean_power_level needs p > 2")
    log_int = _log_power_integral(field, p, region)
    log_area = np.log(field.mesh.element_area[region.elements].sum())
    return float(np.exp((log_int - log_area) / (p - 2.0)))


@dataclass(frozen=True)
class TailRow:
    alpha: float
    mass: float
    bound: float

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "mass": self.mass, "bound": self.bound}


def tail_bound_check(measure: SigmaMeasure, field: fem.FEField,
                     alphas: Sequence[float] = DEFAULT_TAIL_ALPHAS):
    """Verify sigma({ |DU| <= alpha * level }) <= alpha^{p-2} per alpha.

    `level` is the order-(p-2) power mean of |DU| over the region, so the
    inequality is a theorem of the definitions at the discrete level; any
    violation beyond 1e-12 is an implementation bug and raises.
    """
    p = measure.p
    if p <= 2.0:
        raise ValueError("tail_bound_check needs p > 2")
    region = measure.subdomain
    norms = fem.compute_gradients(field).norms[region.elements]
    log_int = _log_power_integral(field, p, region)
    log_area = np.log(field.mesh.element_area[region.elements].sum())
    log_level = (log_int - log_area) / (p - 2.0)
    rows = []
    with np.errstate(divide="ignore"):
        log_norms = np.log(norms)
    for alpha in alphas:
        if not (0.0 < alpha < 1.0):
            raise ValueError("tail alphas must lie in (0, 1)")
        sub = log_norms <= np.log(alpha) + log_level
        mass = float(measure.weights[sub].sum())
        bound = float(alpha ** (p - 2.0))
        if mass > bound + TAIL_TOLERANCE:
            raise InvariantViolationError(
                f"tail bound violated at alpha={alpha}, p={p}: "
                f"mass {mass:.3e} > bound {bound:.3e}"
            )
        rows.append(TailRow(float(alpha), mass, bound))
    return rows


def divergence_free_check(field: fem.FEField, p: float, region: Subdomain,
                          tol: Optional[float] = None) -> float:
    """Max normalised violation of the sigma-weighted orthogonality relation.

    For every hat-function test field supported strictly inside the region,
    evaluates  integral of DU : Dphi dsigma  and normalises by the largest
    absolute-value counterpart (the natural magnitude of the form), making the
    result scale invariant.  For element-union regions the interior test space
    is a subspace of the global one, so a solved field keeps this at the
    solver-tolerance scale; `tol`, when given, is the contract to compare
    against (no exception is raised here).
    """
    mesh = field.mesh
    grads = fem.compute_gradients(field)
    elems = region.elements
    norms = grads.norms[elems]
    if p > 2.0 and norms.max() == 0.0:
        raise DegenerateMeasureError("all gradients vanish on the region")
    sq = norms ** 2
    scale = float(np.log(norms.max())) if norms.max() > 0.0 else 0.0
    ctx = fem.PContext(p=p, epsilon=0.0, scale=scale)
    w = fem._log_weights(sq, ctx)
    mass = w * mesh.element_area[elems]
    total = mass.sum()

    # signed form and its absolute-value majorant, per test dof
    dots = np.einsum("ktd,knd->ktn", mesh.basis_gradients[elems],
                     grads.matrices[elems])
    signed = mass[:, None, None] * dots
    majorant = mass[:, None, None] * np.abs(dots)
    N = field.target_dim
    acc_signed = np.zeros((mesh.num_vertices, N))
    acc_major = np.zeros((mesh.num_vertices, N))
    idx = mesh.triangles[elems].ravel()
    np.add.at(acc_signed, idx, signed.reshape(-1, N))
    np.add.at(acc_major, idx, majorant.reshape(-1, N))

    test = region.interior_vertices()
    if test.size == 0:
        return 0.0
    num = np.abs(acc_signed[test]).max() / total
    den = acc_major[test].max() / total
    if den == 0.0:
        return 0.0
    return float(num / den)


@dataclass
class ProbeResult:
    worst_deficit: float
    deficits: np.ndarray
    trials: int
    amplitude: float

    def as_dict(self) -> dict:
        return {
            "worst_deficit": float(self.worst_deficit),
            "trials": self.trials,
            "amplitude": self.amplitude,
        }


def absolute_minimiser_probe(field: fem.FEField, region: Subdomain,
                             trials: int = 100, amplitude: float = 1e-2,
                             rng=None) -> ProbeResult:
    """Compare the sup-energy of the field against random interior variations.

    Draws variations vanishing outside the region's interior vertices with
    nodal sup-norm `amplitude` and reports the worst value of
    E_inf(U + Phi) - E_inf(U) over the region.  Negative values quantify how
    far the discrete field is from minimising on the region; no pass threshold
    is implied at finite p.
    """
    interior = region.interior_vertices()
    if interior.size == 0:
        raise DegenerateProbeError("region has no interior vertices to perturb")
    if rng is None:
        rng = np.random.default_rng(0)
    base = fem.energy_inf(field, region)
    deficits = np.empty(trials)
    for k in range(trials):
        bump = rng.standard_normal((interior.size, field.target_dim))
        peak = np.abs(bump).max()
        if peak > 0.0 and amplitude > 0.0:
            bump *= amplitude / peak
        else:
            bump[:] = 0.0
        values = field.values.copy()
        values[interior] += bump
        deficits[k] = fem.energy_inf(fem.FEField(field.mesh, values), region) - base
    return ProbeResult(float(deficits.min()), deficits, trials, amplitude)


@dataclass
class ConcentrationReport:
    """Summary statistics of one measure against the region geometry."""

    p: float
    lp: Optional[float]
    level: Optional[float]
    energy_inf: float
    second_moment_ratio: float
    tail: list
    corner_masses: list           # [(point, mass), ...]
    corner_mass_total: float
    corner_radius: float
    boundary_band_mass: float
    boundary_band_width: float
    interior_mass: float
    density_min: float
    density_max: float
    density_ratio: Optional[float]
    tv_distance: float

    def as_dict(self) -> dict:
        def safe(x):
            if x is None:
                return None
            x = float(x)
            return x if np.isfinite(x) else None

        return {
            "p": self.p,
            "lp": safe(self.lp),
            "level": safe(self.level),
            "energy_inf": self.energy_inf,
            "second_moment_ratio": self.second_moment_ratio,
            "tail": [row.as_dict() for row in self.tail],
            "corner_masses": [
                {"point": list(pt), "mass": m} for pt, m in self.corner_masses
            ],
            "corner_mass_total": self.corner_mass_total,
            "corner_radius": self.corner_radius,
            "boundary_band_mass": self.boundary_band_mass,
            "boundary_band_width": self.boundary_band_width,
            "interior_mass": self.interior_mass,
            "density_min": self.density_min,
            "density_max": safe(self.density_max),
            "density_ratio": safe(self.density_ratio),
            "tv_distance": self.tv_distance,
        }


def _distance_to_edges(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Min distance from each point to a set of segments ((m, 2, 2) array)."""
    a = segments[:, 0]
    ab = segments[:, 1] - a
    ab_sq = np.einsum("md,md->m", ab, ab)
    diff = points[:, None, :] - a[None, :, :]        # (n, m, 2)
    t = np.clip(np.einsum("nmd,md->nm", diff, ab) / ab_sq[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return d.min(axis=1)


def concentration_diagnostics(measure: SigmaMeasure,
                              corner_points: Sequence = (),
                              corner_radius: Optional[float] = None,
                              band_width: Optional[float] = None,
                              field: Optional[fem.FEField] = None) -> ConcentrationReport:
    """Mass localisation, density contrast and distance-to-uniform statistics.

    corner_radius defaults to 3h and band_width to 2h, h being the meshsize;
    the boundary band is measured from the region's own boundary edges.
    When the field is supplied the tail table and the L^{p-2} level are
    recomputed and included.
    """
    region = measure.subdomain
    mesh = region.mesh
    h = mesh.meshsize
    r = 3.0 * h if corner_radius is None else float(corner_radius)
    band = 2.0 * h if band_width is None else float(band_width)

    areas = mesh.element_area[region.elements]
    bary = mesh.barycenters()[region.elements]
    density = measure.weights / areas

    corner_masses = []
    union = np.zeros(region.elements.size, dtype=bool)
    for pt in corner_points:
        near = np.linalg.norm(bary - np.asarray(pt, dtype=float), axis=1) <= r
        corner_masses.append((tuple(float(c) for c in pt),
                              float(measure.weights[near].sum())))
        union |= near
    corner_total = float(measure.weights[union].sum())

    segs = mesh.vertices[region.boundary_edges]
    in_band = _distance_to_edges(bary, segs) <= band
    band_mass = float(measure.weights[in_band].sum())

    dmin, dmax = float(density.min()), float(density.max())
    # infinite when the minimum density underflows to zero at large p
    ratio = dmax / dmin if dmin > 0.0 else float("inf")
    uniform = areas / areas.sum()
    tv = 0.5 * float(np.abs(measure.weights - uniform).sum())

    einf = float(measure.grad_norms.max())
    second = float(np.sum(measure.weights * measure.grad_norms ** 2))
    second_ratio = second / einf ** 2 if einf > 0.0 else 1.0

    lp = level = None
    tail = []
    if field is not None and measure.p > 2.0:
        lp = lp_functional(field, measure.p, region)
        level = mean_power_level(field, measure.p, region)
        tail = tail_bound_check(measure, field)

    return ConcentrationReport(
        p=measure.p, lp=lp, level=level, energy_inf=einf,
        second_moment_ratio=second_ratio, tail=tail,
        corner_masses=corner_masses, corner_mass_total=corner_total,
        corner_radius=r, boundary_band_mass=band_mass,
        boundary_band_width=band, interior_mass=1.0 - band_mass,
        density_min=dmin, density_max=dmax,
        density_ratio=ratio,
        tv_distance=tv,
    )
