"""P1 finite element core for the vectorial p-Laplace system.

Gradients of continuous piecewise-linear fields are constant per element, so
all integrands here are piecewise constant and one-point quadrature is exact.
The p-power weights |DU|^{p-2} are handled in log space relative to a scale
anchor carried by `PContext`: residual and Jacobian are returned with the
common positive factor exp((p-2) * scale) divided out, which cancels in Newton
directions and in measure normalisation and keeps p ~ 100 finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .boundary_data import BoundaryDatum
from .errors import EvaluationError
from .mesh import Mesh, Subdomain


@dataclass
class FEField:
    """Nodal values of a continuous piecewise-linear map mesh -> R^N."""

    mesh: Mesh
    values: np.ndarray  # (nv, N)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.mesh.num_vertices:
            raise ValueError("field length does not match the mesh")
        if not np.isfinite(self.values).all():
            raise ValueError("field contains non-finite values")

    @property
    def target_dim(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "FEField":
        return FEField(self.mesh, self.values.copy())


@dataclass(frozen=True)
class ElementGradient:
    """Constant per-element gradient matrices and their Frobenius norms."""

    matrices: np.ndarray  # (nt, N, 2)
    norms: np.ndarray     # (nt,)


@dataclass(frozen=True)
class PContext:
    """Exponent, regularisation and log-space anchor for one assembly.

    scale is log(max element gradient norm) of the field the context was
    built from; weights are exp((p-2) * (log|DU|_K - scale)).
    epsilon smooths the weight to (|DU|^2 + eps^2)^{(p-2)/2}, guarding the
    Jacobian where DU ~ 0.  Measure computations always use epsilon = 0.
    """

    p: float
    epsilon: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        if self.p < 2.0:
            raise ValueError("p must be >= 2")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")


def make_context(field: FEField, p: float, epsilon_rel: float = 1e-10) -> PContext:
    """Context anchored at the field's own gradient scale."""
    gmax = float(compute_gradients(field).norms.max())
    scale = np.log(gmax) if gmax > 0.0 else 0.0
    return PContext(p=float(p), epsilon=epsilon_rel * gmax, scale=scale)


def interpolate_boundary(mesh: Mesh, datum: BoundaryDatum) -> FEField:
    """Nodal interpolant of the datum on the whole mesh.

    Boundary vertices carry the Dirichlet data; interior vertices are filled
    by evaluating the same formula, which doubles as the p = 2 initial guess.
    """
    values = datum.evaluate(mesh.vertices)
    if not np.isfinite(values).all():
        bad = np.flatnonzero(~np.isfinite(values).all(axis=1))[:3]
        raise EvaluationError(
            f"{datum.name} is not finite at mesh vertices {bad.tolist()}"
        )
    return FEField(mesh, values)


def compute_gradients(field: FEField) -> ElementGradient:
    """Exact per-element gradients from the nodal values."""
    mesh = field.mesh
    local = field.values[mesh.triangles]                    # (nt, 3, N)
    mats = np.einsum("ktd,ktn->knd", mesh.basis_gradients, local)
    norms = np.sqrt(np.einsum("knd,knd->k", mats, mats))
    return ElementGradient(mats, norms)


def _log_weights(sq_norms: np.ndarray, ctx: PContext, power_shift: float = 0.0):
    """Weights (|DU|^2 + eps^2)^{(p-2)/2 + power_shift} / exp((p-2) * scale).

    power_shift = -1 gives the w' of the Jacobian's rank-one term.
    """
    exponent = 0.5 * (ctx.p - 2.0) + power_shift
    reg = sq_norms + ctx.epsilon ** 2
    shift = (ctx.p - 2.0) * ctx.scale
    if exponent == 0.0:
        # |.|^0 == 1 everywhere, including zero-gradient elements
        return np.full_like(reg, np.exp(-shift))
    with np.errstate(divide="ignore"):
        logs = exponent * np.log(reg)
    with np.errstate(over="ignore"):
        w = np.exp(logs - shift)
    if exponent < 0.0:
        # only reached through the Jacobian's w', whose factor (DU : .) is
        # then zero as well: realise the limit 0 directly
        w[reg == 0.0] = 0.0
    return w


def energy_p(field: FEField, p: float, region: Subdomain) -> float:
    """(sum over region of |DU|^p * area)^(1/p), accumulated in log space."""
    if p < 1.0:
        raise ValueError("energy_p needs p >= 1")
    norms = compute_gradients(field).norms[region.elements]
    areas = field.mesh.element_area[region.elements]
    gmax = norms.max()
    if gmax == 0.0:
        return 0.0
    with np.errstate(divide="ignore"):
        logs = p * np.log(norms / gmax)
    total = np.sum(np.exp(logs) * areas)
    return float(gmax * total ** (1.0 / p))


def energy_inf(field: FEField, region: Subdomain) -> float:
    """Max Frobenius gradient norm over the region's elements."""
    return float(compute_gradients(field).norms[region.elements].max())


def interior_vertices(mesh: Mesh) -> np.ndarray:
    return np.flatnonzero(mesh.interior_vertex_mask())


def free_vertex_mask(mesh: Mesh, pinned_vertices=()) -> np.ndarray:
    """Unknown vertices: interior minus any additionally pinned ones.

    Pinned vertices carry Dirichlet values like the boundary; they realise
    point conditions such as fixing a cone vertex (points have positive
    p-capacity in the plane for p > 2, so this discretises a well-posed
    constraint).
    """
    mask = mesh.interior_vertex_mask()
    pinned = np.asarray(list(pinned_vertices), dtype=np.int64)
    if pinned.size:
        mask[pinned] = False
    return mask


def residual(field: FEField, ctx: PContext,
             grads: Optional[ElementGradient] = None,
             absolute: bool = False,
             free_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Scaled Galerkin residual of the p-Laplace form on the free vertices.

    Entry (i, alpha) is  sum_K w_K area_K (DU_K row alpha . grad hat_i)  with
    w_K = (|DU|_K^2 + eps^2)^{(p-2)/2} evaluated relative to ctx.scale.
    Returns an (n_free, N) array; free defaults to all interior vertices.
    With absolute=True the element contributions are accumulated by absolute
    value, giving the cancellation majorant of the residual (the smallest
    norm floating point can resolve).
    """
    mesh = field.mesh
    if grads is None:
        grads = compute_gradients(field)
    sq = grads.norms ** 2
    w = _log_weights(sq, ctx)
    # (nt, 3, N): weighted dot of each local hat gradient with each DU row
    contrib = np.einsum("k,ktd,knd->ktn", w * mesh.element_area,
                        mesh.basis_gradients, grads.matrices)
    if absolute:
        contrib = np.abs(contrib)
    full = np.zeros((mesh.num_vertices, field.target_dim))
    np.add.at(full, mesh.triangles.ravel(),
              contrib.reshape(-1, field.target_dim))
    if free_mask is None:
        free_mask = mesh.interior_vertex_mask()
    return full[free_mask]


def residual_scales(field: FEField, ctx: PContext,
                    grads: Optional[ElementGradient] = None,
                    free_mask: Optional[np.ndarray] = None):
    """Per-dof magnitude scales of the residual: (majorant, noise).

    majorant accumulates the element contributions by absolute value (the
    natural size of the residual entry before cancellation).  noise estimates
    the floating-point evaluation floor of the entry: gradients are formed
    from nodal values of size |u|, so each weighted dot product carries an
    absolute rounding error of order eps * w * area * sum_t |u_t| |Dhat_t| *
    |Dhat_i|.  Equations whose majorant sits at or below their noise are
    satisfied as well as double precision can express.
    """
    mesh = field.mesh
    if grads is None:
        grads = compute_gradients(field)
    w = _log_weights(grads.norms ** 2, ctx)
    wa = w * mesh.element_area
    dots = np.abs(np.einsum("ktd,knd->ktn", mesh.basis_gradients, grads.matrices))
    major_full = np.zeros((mesh.num_vertices, field.target_dim))
    np.add.at(major_full, mesh.triangles.ravel(),
              (wa[:, None, None] * dots).reshape(-1, field.target_dim))

    eps_mach = np.finfo(float).eps
    bnorm = np.linalg.norm(mesh.basis_gradients, axis=2)        # (nt, 3)
    vnorm = np.linalg.norm(field.values, axis=1)                # (nv,)
    value_scale = (vnorm[mesh.triangles] * bnorm).sum(axis=1)   # (nt,)
    noise_tri = eps_mach * (wa * value_scale)[:, None] * bnorm  # (nt, 3)
    noise_full = np.zeros(mesh.num_vertices)
    np.add.at(noise_full, mesh.triangles.ravel(), noise_tri.ravel())
    noise_full = np.repeat(noise_full[:, None], field.target_dim, axis=1)

    if free_mask is None:
        free_mask = mesh.interior_vertex_mask()
    return major_full[free_mask], noise_full[free_mask]


def jacobian(field: FEField, ctx: PContext,
             grads: Optional[ElementGradient] = None,
             free_mask: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """Exact linearisation of the residual on the free degrees of freedom.

    J[phi, psi] = sum_K area_K [ w_K (Dphi : Dpsi)
                                 + (p-2) w'_K (DU : Dphi)(DU : Dpsi) ]
    with w'_K = (|DU|^2 + eps^2)^{(p-4)/2}, in the same scaling as `residual`.
    Symmetric positive semidefinite by construction.
    """
    mesh = field.mesh
    N = field.target_dim
    if grads is None:
        grads = compute_gradients(field)
    sq = grads.norms ** 2
    w = _log_weights(sq, ctx)
    area = mesh.element_area
    gram = np.einsum("kad,kbd->kab", mesh.basis_gradients, mesh.basis_gradients)
    blocks = np.zeros((mesh.num_triangles, 3, N, 3, N))
    eye = np.eye(N)
    blocks += (w * area)[:, None, None, None, None] * \
        gram[:, :, None, :, None] * eye[None, None, :, None, :]
    if ctx.p != 2.0:
        # w' in the same scaling; zero-gradient elements contribute nothing
        wprime = _log_weights(sq, ctx, power_shift=-1.0)
        proj = np.einsum("ktd,knd->ktn", mesh.basis_gradients, grads.matrices)
        blocks += ((ctx.p - 2.0) * wprime * area)[:, None, None, None, None] * \
            proj[:, :, :, None, None] * proj[:, None, None, :, :]

    # global dof = free position * N + component; constrained rows/cols drop
    imask = mesh.interior_vertex_mask() if free_mask is None else free_mask
    vmap = -np.ones(mesh.num_vertices, dtype=np.int64)
    vmap[imask] = np.arange(int(imask.sum()))
    tri_dof = vmap[mesh.triangles]                       # (nt, 3), -1 on boundary
    comp = np.arange(N)
    dof = tri_dof[:, :, None] * N + comp[None, None, :]  # (nt, 3, N)
    rows = np.broadcast_to(dof[:, :, :, None, None], blocks.shape).ravel()
    cols = np.broadcast_to(dof[:, None, None, :, :], blocks.shape).ravel()
    keep = (np.broadcast_to(tri_dof[:, :, None, None, None] >= 0, blocks.shape)
            & np.broadcast_to(tri_dof[:, None, None, :, None] >= 0, blocks.shape)).ravel()
    ndof = int(imask.sum()) * N
    mat = sp.coo_matrix(
        (blocks.ravel()[keep], (rows[keep], cols[keep])), shape=(ndof, ndof)
    )
    return mat.tocsr()


def scaled_residual_lognorm(res: np.ndarray, ctx: PContext) -> float:
    """log of the true (unscaled) Euclidean residual norm; -inf for zero."""
    nrm = float(np.linalg.norm(res))
    if nrm == 0.0:
        return -np.inf
    if not np.isfinite(nrm):
        return np.inf
    return np.log(nrm) + (ctx.p - 2.0) * ctx.scale

