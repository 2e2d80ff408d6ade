"""Discrete primal (displacement) and dual (multiplier) spaces.

The primal space is the vector-valued NURBS space of the geometry patch
with Dirichlet/symmetry constraints imposed strongly by coefficient
elimination. The dual space lives on the contact face and consists of
B-splines of degree p-2 on the trimmed knot vectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BoundaryFace,
    NurbsPatch,
    QuadratureRule,
    boundary_frame,
    gauss_rule,
)
from .splines import TensorBasis, trim_for_dual


class SpaceError(ValueError):
    """Raised for inconsistent space construction input."""


@dataclass(frozen=True)
class DirichletBC:
    """Constraint on one patch face: fix the listed components to a value."""

    axis: int
    side: int
    components: tuple
    value: float = 0.0


@dataclass(frozen=True)
class PrimalSpace:
    """Vector NURBS displacement space with strong Dirichlet constraints.

    DOF numbering: control point i, component c -> dof i * d + c.
    """

    patch: NurbsPatch
    dirichlet: tuple

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", tuple(self.dirichlet))
        nd = self.patch.pdim
        ncp = self.patch.basis.num_funcs
        values = {}
        for bc in self.dirichlet:
            face = BoundaryFace(self.patch, bc.axis, bc.side)
            for i in face.volume_indices():
                for c in bc.components:
                    if not 0 <= c < nd:
                        raise SpaceError(f"component {c} out of range")
                    values[int(i) * nd + c] = bc.value
        if not values:
            warnings.warn("no Dirichlet constraints anywhere (meas(Gamma_D)=0); "
                          "system may be singular without contact", stacklevel=2)
        constrained = np.array(sorted(values), dtype=np.intp)
        mask = np.zeros(ncp * nd, dtype=bool)
        mask[constrained] = True
        object.__setattr__(self, "_constrained", constrained)
        object.__setattr__(self, "_values", np.array([values[k] for k in sorted(values)]))
        object.__setattr__(self, "_free", np.nonzero(~mask)[0].astype(np.intp))

    @property
    def degree(self) -> int:
        return self.patch.basis.degrees[0]

    @property
    def ncomp(self) -> int:
        return self.patch.pdim

    @property
    def num_dofs(self) -> int:
        return self.patch.basis.num_funcs * self.ncomp

    @property
    def free_dofs(self) -> np.ndarray:
        return self._free

    @property
    def constrained_dofs(self) -> np.ndarray:
        return self._constrained

    @property
    def constrained_values(self) -> np.ndarray:
        return self._values

    def full_vector(self, load_factor: float = 1.0) -> np.ndarray:
        """Zero displacement vector with constrained entries filled in."""
        u = np.zeros(self.num_dofs)
        u[self._constrained] = load_factor * self._values
        return u

    def apply_constraints(self, u: np.ndarray, load_factor: float = 1.0) -> np.ndarray:
        u = u.copy()
        u[self._constrained] = load_factor * self._values
        return u


def build_primal(patch: NurbsPatch, dirichlet_spec) -> PrimalSpace:
    """Build the displacement space; ``dirichlet_spec`` is a list of
    ``DirichletBC`` (or (axis, side, components, value) tuples)."""
    bcs = []
    for bc in dirichlet_spec:
        if not isinstance(bc, DirichletBC):
            bc = DirichletBC(bc[0], bc[1], tuple(bc[2]),
                             bc[3] if len(bc) > 3 else 0.0)
        # reject non-existent faces early
        BoundaryFace(patch, bc.axis, bc.side)
        bcs.append(bc)
    return PrimalSpace(patch=patch, dirichlet=tuple(bcs))


# ---------------------------------------------------------------------------
# dual space

@dataclass(frozen=True)
class DualSpace:
    """Scalar multiplier space of degree p-2 on the contact face.

    ``measures[K]`` is the surface integral of basis function K; these are
    the denominators of the weighted-average projection.
    """

    face: BoundaryFace
    basis: TensorBasis
    measures: np.ndarray

    @property
    def num_funcs(self) -> int:
        return self.basis.num_funcs

    @property
    def degree(self) -> int:
        return self.basis.degrees[0]

    def greville_points(self) -> np.ndarray:
        """Parametric Greville points, one per multiplier, shape (K, d-1)."""
        gs = [kv.greville() for kv in self.basis.kvs]
        mesh = np.meshgrid(*gs, indexing="ij")
        return np.stack([m.reshape(-1, order="F") for m in mesh], axis=1)


def face_quadrature(face: BoundaryFace, points_per_dir: int):
    """Gauss points/weights with surface measure on a face.

    Returns (pts (n, d-1), w (n,), x (n, pdim), normal (n, pdim)); ``w``
    includes the surface factor so that sum(w * f) integrates f over the
    physical face.
    """
    rule = gauss_rule([kv.breakpoints for kv in face.basis.kvs], points_per_dir)
    grids = np.meshgrid(*[p.reshape(-1) for p in rule.points], indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    wg = None
    for w in rule.weights:
        w = w.reshape(-1)
        wg = w if wg is None else (wg[:, None] * w[None, :]).reshape(-1)
    x, normal, factor = boundary_frame(face, pts)
    return pts, wg * factor, x, normal


def dual_basis_values(dual: DualSpace, pts: np.ndarray) -> np.ndarray:
    """Dense matrix of all multiplier basis values at face points (n, K)."""
    from .splines import eval_basis_many

    pts = np.atleast_2d(pts)
    n = pts.shape[0]
    out = np.zeros((n, dual.num_funcs))
    per_dir = []
    for d, kv in enumerate(dual.basis.kvs):
        spans, ders = eval_basis_many(kv, pts[:, d], 0)
        dense = np.zeros((n, kv.num_funcs))
        for j in range(kv.degree + 1):
            cols = spans - kv.degree + j
            dense[np.arange(n), cols] = ders[:, 0, j]
        per_dir.append(dense)
    full = per_dir[0]
    for dense in per_dir[1:]:
        full = (dense[:, :, None] * full[:, None, :]).reshape(n, -1)
    return full


def build_dual(face: BoundaryFace, points_per_dir: int = None) -> DualSpace:
    """Multiplier space on the trimmed knot vectors of the contact face."""
    degrees = face.basis.degrees
    if min(degrees) < 2:
        raise SpaceError("dual space requires primal degree >= 2")
    trimmed = TensorBasis(tuple(trim_for_dual(kv) for kv in face.basis.kvs))
    if points_per_dir is None:
        points_per_dir = max(degrees) + 1
    dummy = DualSpace(face=face, basis=trimmed,
                      measures=np.ones(trimmed.num_funcs))
    pts, w, _, _ = face_quadrature(face, points_per_dir)
    B = dual_basis_values(dummy, pts)
    measures = B.T @ w
    if np.any(measures <= 0):
        raise SpaceError("non-positive multiplier measure")
    return DualSpace(face=face, basis=trimmed, measures=measures)


# ---------------------------------------------------------------------------
# traces

def face_dof_indices(space: PrimalSpace, face: BoundaryFace) -> np.ndarray:
    """Global displacement dofs of the face-adjacent control layer.

    Ordered control-point-major (face flat numbering), component fastest.
    """
    vol_idx = face.volume_indices()
    nd = space.ncomp
    return (vol_idx[:, None] * nd + np.arange(nd)[None, :]).reshape(-1)


def trace_matrix(space: PrimalSpace, face: BoundaryFace, pts: np.ndarray,
                 normal):
    """Compact normal-trace matrix: v_n(pts) = T @ u[face_dofs].

    ``normal`` is the direction used for the normal component (the rigid
    plane normal for contact terms), shape (d,) or (n, d). Returns
    ``(T, face_dofs)`` with T of shape (n, len(face_dofs)).
    """
    fp = face.face_patch()
    res = fp.evaluate(np.atleast_2d(pts), nders=0)
    R, conn = res["R"], res["conn"]
    nd = space.ncomp
    n = R.shape[0]
    nfc = fp.basis.num_funcs
    normal = np.broadcast_to(np.atleast_2d(np.asarray(normal, dtype=float)),
                             (n, nd))
    T = np.zeros((n, nfc * nd))
    rows = np.repeat(np.arange(n), conn.shape[1])
    for c in range(nd):
        cols = conn.reshape(-1) * nd + c
        np.add.at(T, (rows, cols), (R * normal[:, [c]]).reshape(-1))
    return T, face_dof_indices(space, face)


def trace_normal(space: PrimalSpace, face: BoundaryFace, normal):
    """Evaluator: coefficients, face points -> normal displacement values."""

    def evaluate(u: np.ndarray, pts: np.ndarray) -> np.ndarray:
        T, fdofs = trace_matrix(space, face, pts, normal)
        return T @ u[fdofs]

    return evaluate
