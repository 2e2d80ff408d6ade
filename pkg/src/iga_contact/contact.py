"""Augmented Lagrangian contact terms for a rigid plane.

The multiplier lives in the degree p-2 space on the contact face; gaps are
averaged into multiplier coefficients through the weighted-average
projection (integral of v B_K divided by the measure of B_K). The
active-set test, residual and tangent follow the coefficient-level
branch selection in the measure-weighted coefficient metric: with the
active set frozen, the contact energy

    (1/2r) * sum over K of m_K * ([lambda_K + r (Pi g)_K]_-^2 - lambda_K^2)

(m_K the measure of B_K) is smooth, and the residual/tangent returned
here are its exact gradient and Hessian. At a solution this pins
inactive multiplier coefficients to zero and drives the projected gap of
active ones to zero. Ties (branch value exactly zero) count as inactive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spaces import (
    DualSpace,
    PrimalSpace,
    dual_basis_values,
    face_quadrature,
    trace_matrix,
)

GAP_SEED_TOL = 1e-9


def neg_part(z):
    """Negative part min(0, z), elementwise."""
    return np.minimum(0.0, z)


@dataclass(frozen=True)
class RigidPlane:
    """Rigid half-space boundary: points x with n . x = offset.

    ``normal`` points from the rigid body toward the elastic body; the
    admissible region is n . x >= offset.
    """

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if not np.isclose(np.linalg.norm(n), 1.0):
            raise ValueError("plane normal must be a unit vector")
        object.__setattr__(self, "normal", n)
        self.normal.setflags(write=False)

    def gap(self, x: np.ndarray) -> np.ndarray:
        """Signed distance of points above the plane."""
        return np.atleast_2d(x) @ self.normal - self.offset


@dataclass(frozen=True)
class AugmentedParams:
    """Augmentation scale r0 and derived r = r0 / h (contact-face h)."""

    r0: float
    h_contact: float

    def __post_init__(self):
        if self.r0 <= 0 or self.h_contact <= 0:
            raise ValueError("r0 and h must be positive")

    @property
    def r(self) -> float:
        return self.r0 / self.h_contact


@dataclass(frozen=True)
class ActiveSet:
    """Boolean flag per multiplier index."""

    flags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "flags", np.asarray(self.flags, dtype=bool))
        self.flags.setflags(write=False)

    def __eq__(self, other):
        return isinstance(other, ActiveSet) and \
            self.flags.shape == other.flags.shape and \
            bool(np.all(self.flags == other.flags))

    @property
    def count(self) -> int:
        return int(self.flags.sum())


@dataclass(frozen=True)
class ProjectionData:
    """Quadrature-built coupling data between dual and primal spaces.

    Attributes:
        measures: integral of B_K over Gamma_C, per K.
        mass: dual mass matrix M[K, k] = integral of B_K B_k.
        coupling: G[K, j] = integral of B_K (N_j . n) for face dofs j.
        face_dofs: global displacement dof indices of the coupling columns.
        gap0: projection coefficients of the geometric gap at u = 0.
        quad_pts, quad_w, quad_x: face quadrature (parametric points,
            weights including surface measure, physical points).
        dual_at_q: multiplier basis values at the quadrature points.
        trace_at_q: normal-trace matrix at the quadrature points.
    """

    measures: np.ndarray
    mass: np.ndarray
    coupling: np.ndarray
    face_dofs: np.ndarray
    gap0: np.ndarray
    quad_pts: np.ndarray
    quad_w: np.ndarray
    quad_x: np.ndarray
    dual_at_q: np.ndarray
    trace_at_q: np.ndarray


def build_projection_data(space: PrimalSpace, dual: DualSpace,
                          plane: RigidPlane,
                          points_per_dir: int = None) -> ProjectionData:
    """Precompute all contact-face integrals for a space pairing."""
    if points_per_dir is None:
        points_per_dir = space.degree + 1
    pts, w, x, _ = face_quadrature(dual.face, points_per_dir)
    B = dual_basis_values(dual, pts)                   # (n, K)
    measures = B.T @ w
    mass = (B * w[:, None]).T @ B
    T, fdofs = trace_matrix(space, dual.face, pts, plane.normal)
    coupling = (B * w[:, None]).T @ T                  # (K, nfd)
    g0 = plane.gap(x)
    gap0 = (B * w[:, None]).T @ g0 / measures
    return ProjectionData(measures=measures, mass=mass, coupling=coupling,
                          face_dofs=fdofs, gap0=gap0, quad_pts=pts, quad_w=w,
                          quad_x=x, dual_at_q=B, trace_at_q=T)


def project(dual: DualSpace, values_at_q: np.ndarray, pdata: ProjectionData) -> np.ndarray:
    """Weighted-average projection coefficients of a face field.

    ``values_at_q`` are samples of the field at ``pdata.quad_pts``.
    """
    return (pdata.dual_at_q * pdata.quad_w[:, None]).T @ values_at_q \
        / pdata.measures


def gap_projection(pdata: ProjectionData, u: np.ndarray) -> np.ndarray:
    """(Pi g)_K for the displaced configuration, affine in u."""
    return pdata.gap0 + (pdata.coupling @ u[pdata.face_dofs]) / pdata.measures


def update_active_set(lam: np.ndarray, gap_proj: np.ndarray,
                      params: AugmentedParams) -> ActiveSet:
    """K active iff lambda_K + r (Pi g)_K < 0 (ties are inactive)."""
    return ActiveSet(lam + params.r * gap_proj < 0.0)


def seed_active_set(dual: DualSpace, pdata: ProjectionData,
                    plane: RigidPlane, tol: float = GAP_SEED_TOL) -> ActiveSet:
    """Initial active set from the geometric gap.

    A multiplier is seeded active when the gap drops to ``tol`` anywhere on
    its support (sampled densely, support endpoints included), so an
    initial touching point activates its surrounding multipliers.
    """
    flags = np.zeros(dual.num_funcs, dtype=bool)
    fp = dual.face.face_patch()
    kvs = dual.basis.kvs
    samples_1d = []
    for kv in kvs:
        supp = []
        for i in range(kv.num_funcs):
            a, b = kv.knots[i], kv.knots[i + kv.degree + 1]
            supp.append(np.linspace(a, b, 8))
        samples_1d.append(supp)
    for K in range(dual.num_funcs):
        multi = dual.basis.multi_index(K)
        grids = np.meshgrid(*[samples_1d[d][i] for d, i in enumerate(multi)],
                            indexing="ij")
        pts = np.stack([g.reshape(-1) for g in grids], axis=1)
        # positions only: avoids the frame normal, which is undefined at
        # degenerate parameterization corners (sphere pole)
        x = fp.evaluate(pts, nders=0)["x"]
        if plane.gap(x).min() <= tol:
            flags[K] = True
    return ActiveSet(flags)


def contact_residual(pdata: ProjectionData, lam: np.ndarray, u: np.ndarray,
                     params: AugmentedParams, active: ActiveSet,
                     num_dofs: int):
    """Contact contributions (R_u, R_lambda) at the frozen active set."""
    r = params.r
    a = active.flags
    gp = gap_projection(pdata, u)
    c = lam + r * gp                                   # branch coefficients
    m = pdata.measures
    R_u = np.zeros(num_dofs)
    R_lam = np.where(a, m * gp, -m * lam / r)
    if a.any():
        R_u[pdata.face_dofs] = c[a] @ pdata.coupling[a]
    return R_u, R_lam


def contact_tangent(pdata: ProjectionData, params: AugmentedParams,
                    active: ActiveSet):
    """Exact derivative of :func:`contact_residual` at the frozen set.

    Returns dense blocks ``(H_uu, H_ul, H_ll)`` where the u blocks act on
    the face dofs (``pdata.face_dofs``); callers scatter them into the
    global saddle matrix.
    """
    r = params.r
    a = active.flags
    m = pdata.measures
    nl = m.size
    nfd = pdata.face_dofs.size
    H_ll = np.diag(np.where(a, 0.0, -m / r))
    H_uu = np.zeros((nfd, nfd))
    H_ul = np.zeros((nfd, nl))
    if a.any():
        Ga = pdata.coupling[a]                                # (Ka, nfd)
        H_uu = r * Ga.T @ (Ga / m[a][:, None])
        H_ul[:, a] = Ga.T
    return H_uu, H_ul, H_ll


def contact_energy(pdata: ProjectionData, lam: np.ndarray, u: np.ndarray,
                   params: AugmentedParams, active: ActiveSet = None) -> float:
    """Augmented contact energy in the measure-weighted coefficient metric.

    (1/2r) sum_K m_K ([lambda_K + r (Pi g)_K]_-^2 - lambda_K^2). With
    ``active`` given, the branch is frozen to that set (the gradient then
    matches :func:`contact_residual`); otherwise the true negative part of
    the coefficient field is used.
    """
    r = params.r
    gp = gap_projection(pdata, u)
    c = lam + r * gp
    if active is None:
        ca = neg_part(c)
    else:
        ca = np.where(active.flags, c, 0.0)
    m = pdata.measures
    return float(m @ (ca ** 2 - lam ** 2)) / (2 * r)
