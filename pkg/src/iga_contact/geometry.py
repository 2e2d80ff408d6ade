"""NURBS geometry maps, quadrature and the benchmark geometries.

A :class:`NurbsPatch` maps the parametric box [0,1]^d onto the physical
domain. Quarter-disc (2D) and octant-of-sphere (3D) patches are built
exactly from rational quadratic arcs; uniform knot insertion preserves the
geometry bit-for-bit, which the refined-reference error methodology relies
on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .splines import (
    KnotVector,
    SplineError,
    TensorBasis,
    eval_basis_many,
    refine_with_coefs,
)


class GeometryError(ValueError):
    """Raised for degenerate geometry or invalid construction input."""


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the elements of a breakpoint grid.

    ``points[d]`` and ``weights[d]`` have shape (n_elems_d, n) holding the
    mapped abscissae/weights per element of direction ``d``.
    """

    points: tuple
    weights: tuple

    @property
    def ndim(self) -> int:
        return len(self.points)

    @property
    def points_per_dir(self) -> int:
        return self.points[0].shape[1]


def gauss_rule(breakpoints, points_per_dir: int) -> QuadratureRule:
    """Per-element Gauss-Legendre rule, exact for degree 2n-1 per direction.

    ``breakpoints`` is a sequence of 1D breakpoint arrays, one per
    parametric direction.
    """
    if points_per_dir < 1:
        raise GeometryError("need at least one quadrature point")
    xg, wg = np.polynomial.legendre.leggauss(points_per_dir)
    pts, wts = [], []
    for z in breakpoints:
        z = np.asarray(z, dtype=float)
        a, b = z[:-1], z[1:]
        half = 0.5 * (b - a)
        pts.append(0.5 * (a + b)[:, None] + half[:, None] * xg[None, :])
        wts.append(half[:, None] * wg[None, :])
    return QuadratureRule(points=tuple(pts), weights=tuple(wts))


def graded_knots(n_elems: int, fraction_elems: float, fraction_length: float,
                 refined_end: str = "end") -> np.ndarray:
    """Breakpoints with a refined band adjacent to one end of [0, 1].

    ``round(fraction_elems * n_elems)`` uniform spans fill the band of
    parametric length ``fraction_length``; the remaining spans (at least
    one) cover the rest uniformly.
    """
    if n_elems < 2:
        raise GeometryError("graded mesh needs at least 2 elements")
    if not 0.0 < fraction_length < 1.0:
        raise GeometryError("fraction_length must be in (0, 1)")
    k = int(round(fraction_elems * n_elems))
    if k < 1:
        raise GeometryError("refined band must contain at least one span")
    if n_elems - k < 1:
        raise GeometryError("at least one span must remain outside the band")
    if refined_end not in ("start", "end"):
        raise GeometryError("refined_end must be 'start' or 'end'")
    band = np.linspace(1.0 - fraction_length, 1.0, k + 1)
    rest = np.linspace(0.0, 1.0 - fraction_length, n_elems - k + 1)
    z = np.concatenate([rest[:-1], band])
    if refined_end == "start":
        z = np.sort(1.0 - z)
    return z


# ---------------------------------------------------------------------------
# patches

def _tensor_rows(factors):
    """Row-wise tensor product; first factor index runs fastest."""
    out = factors[0]
    for f in factors[1:]:
        out = (f[:, :, None] * out[:, None, :]).reshape(out.shape[0], -1)
    return out


@dataclass(frozen=True)
class NurbsPatch:
    """Tensor-product NURBS geometry map.

    ``ctrl`` has shape (num_funcs, d) (flat lexicographic numbering, first
    direction fastest) and ``weights`` shape (num_funcs,).
    """

    basis: TensorBasis
    ctrl: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ctrl", np.asarray(self.ctrl, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.ctrl.shape[0] != self.basis.num_funcs:
            raise GeometryError("control net does not match basis")
        if np.any(self.weights <= 0):
            raise GeometryError("weights must be strictly positive")
        self.ctrl.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def ndim(self) -> int:
        return self.basis.ndim

    @property
    def pdim(self) -> int:
        """Physical dimension (columns of the control net)."""
        return self.ctrl.shape[1]

    def homogeneous(self) -> np.ndarray:
        return np.concatenate(
            [self.ctrl * self.weights[:, None], self.weights[:, None]], axis=1)

    def refine_uniform(self, levels: int = 1) -> "NurbsPatch":
        """Knot-insertion refinement reproducing the geometry exactly."""
        target = self.basis.refine_uniform(levels)
        return self.with_knots(target)

    def with_knots(self, target: TensorBasis) -> "NurbsPatch":
        """Re-express the patch on a nested refinement of its knot vectors."""
        hm = self.homogeneous()
        shape = self.basis.shape
        for d in range(self.ndim):
            n_d = shape[d]
            # move direction d to axis 0 of a (n_d, rest) matrix
            full = hm.reshape(*shape, hm.shape[-1], order="F")
            moved = np.moveaxis(full, d, 0)
            flat = moved.reshape(n_d, -1)
            _, flat = _refine_axis(self.basis.kvs[d], target.kvs[d], flat)
            new_shape = list(shape)
            new_shape[d] = target.kvs[d].num_funcs
            moved = flat.reshape(new_shape[d], *[s for i, s in enumerate(shape) if i != d],
                                 hm.shape[-1])
            full = np.moveaxis(moved, 0, d)
            hm = full.reshape(-1, hm.shape[-1], order="F")
            shape = tuple(new_shape)
        w = hm[:, -1]
        return NurbsPatch(TensorBasis(tuple(target.kvs)), hm[:, :-1] / w[:, None], w)

    # -- evaluation -------------------------------------------------------

    def evaluate(self, pts: np.ndarray, nders: int = 1):
        """Map, Jacobian and rational basis data at parametric points.

        ``pts`` has shape (npts, ndim). Returns a dict with keys ``x``
        (npts, pdim), ``jac`` (npts, pdim, ndim), ``det`` (npts,), ``conn``
        (npts, nloc), ``R`` (npts, nloc) and ``dR`` (npts, nloc, ndim)
        (parametric gradients of the rational basis).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        npts = pts.shape[0]
        vals, ders, firsts = [], [], []
        for d, kv in enumerate(self.basis.kvs):
            spans, dd = eval_basis_many(kv, pts[:, d], min(nders, 1))
            vals.append(dd[:, 0, :])
            ders.append(dd[:, 1, :] if nders >= 1 else None)
            firsts.append(spans - kv.degree)
        B = _tensor_rows(vals)
        nloc = B.shape[1]
        dB = np.empty((npts, nloc, self.ndim)) if nders >= 1 else None
        if nders >= 1:
            for d in range(self.ndim):
                factors = [ders[i] if i == d else vals[i] for i in range(self.ndim)]
                dB[:, :, d] = _tensor_rows(factors)
        conn = _connectivity_at(self.basis, firsts, npts)
        w = self.weights[conn]
        W = np.einsum("na,na->n", w, B)
        R = w * B / W[:, None]
        out = {"conn": conn, "R": R}
        cx = self.ctrl[conn]                             # (npts, nloc, pdim)
        out["x"] = np.einsum("na,nai->ni", R, cx)
        if nders >= 1:
            dW = np.einsum("na,nad->nd", w, dB)
            dR = (w[:, :, None] * dB - R[:, :, None] * dW[:, None, :]) / W[:, None, None]
            out["dR"] = dR
            out["jac"] = np.einsum("nad,nai->nid", dR, cx)
            if self.pdim == self.ndim:
                out["det"] = np.linalg.det(out["jac"])
        return out

    def eval_map(self, xi):
        """Physical point, Jacobian and determinant at one parametric point."""
        res = self.evaluate(np.asarray(xi, dtype=float)[None, :], nders=1)
        det = float(res["det"][0]) if "det" in res else None
        if det is not None and det <= 0:
            raise GeometryError(f"non-positive Jacobian determinant {det} at {xi}")
        return res["x"][0], res["jac"][0], det


def _refine_axis(kv: KnotVector, target: KnotVector, coefs: np.ndarray):
    return target, refine_with_coefs(kv, target, coefs)


def _connectivity_at(basis: TensorBasis, firsts, npts: int) -> np.ndarray:
    """Flat volume function indices of the non-zero tensor functions."""
    strides = np.cumprod([1] + list(basis.shape[:-1]))
    flat_local = _local_offsets(basis)
    base = sum(np.asarray(f) * s for f, s in zip(firsts, strides))
    return base[:, None] + flat_local[None, :]


# ---------------------------------------------------------------------------
# element data for assembly

@dataclass(frozen=True)
class ElementData:
    """Per-element quadrature data on a patch.

    Shapes: ``conn`` (n_el, nloc); ``x`` (n_el, ngp, pdim); ``wdet``
    (n_el, ngp) quadrature weight times |det J|; ``R`` (n_el, ngp, nloc);
    ``gradR`` (n_el, ngp, nloc, d) physical gradients; ``h`` (n_el,)
    element diameters.
    """

    conn: np.ndarray
    x: np.ndarray
    wdet: np.ndarray
    R: np.ndarray
    gradR: np.ndarray
    h: np.ndarray


def element_data(patch: NurbsPatch, quad: QuadratureRule) -> ElementData:
    """Tabulate rational basis values and physical gradients per element."""
    nd = patch.ndim
    if quad.ndim != nd:
        raise GeometryError("quadrature dimension mismatch")
    basis = patch.basis
    # univariate tables
    uv, ud, ufirst = [], [], []
    for d, kv in enumerate(basis.kvs):
        pts = quad.points[d]
        spans, dd = eval_basis_many(kv, pts.reshape(-1), 1)
        ne, ng = pts.shape
        uv.append(dd[:, 0, :].reshape(ne, ng, kv.degree + 1))
        ud.append(dd[:, 1, :].reshape(ne, ng, kv.degree + 1))
        ufirst.append((spans.reshape(ne, ng)[:, 0] - kv.degree).astype(np.intp))

    elems = basis.element_multi_indices()
    n_el = elems.shape[0]
    ngp = int(np.prod([quad.points[d].shape[1] for d in range(nd)]))
    nloc = int(np.prod([p + 1 for p in basis.degrees]))

    # tensor values/gradients per element, built direction by direction
    def assemble_tensor(deriv_dir):
        out = None
        for d in range(nd):
            tab = ud[d] if d == deriv_dir else uv[d]
            fac = tab[elems[:, d]]                     # (n_el, ng_d, m_d)
            if out is None:
                out = fac
            else:
                # combine gauss axes and local axes keeping dir-0 fastest
                out = np.einsum("egm,ehn->eghnm", out, fac)
                e, g, h2, n2, m2 = out.shape
                out = out.reshape(e, g * h2, n2 * m2)
        return out                                     # (n_el, ngp, nloc)

    B = assemble_tensor(-1)
    dB = np.stack([assemble_tensor(d) for d in range(nd)], axis=-1)

    # gauss weights (tensor product) per element
    wt = None
    for d in range(nd):
        w = quad.weights[d][elems[:, d]]               # (n_el, ng_d)
        wt = w if wt is None else (wt[:, :, None] * w[:, None, :]).reshape(n_el, -1)

    # connectivity
    strides = np.cumprod([1] + list(basis.shape[:-1]))
    offsets = [np.arange(p + 1) for p in basis.degrees]
    mesh = np.meshgrid(*offsets, indexing="ij")
    # local flat offsets must match the value ordering built above
    flat_local = _local_offsets(basis)
    base = sum(ufirst[d][elems[:, d]] * strides[d] for d in range(nd))
    conn = base[:, None] + flat_local[None, :]

    w = patch.weights[conn]                            # (n_el, nloc)
    W = np.einsum("ea,ega->eg", w, B)
    R = w[:, None, :] * B / W[:, :, None]
    dW = np.einsum("ea,egad->egd", w, dB)
    dR = (w[:, None, :, None] * dB - R[:, :, :, None] * dW[:, :, None, :]) \
        / W[:, :, None, None]

    cx = patch.ctrl[conn]                              # (n_el, nloc, pdim)
    x = np.einsum("ega,eai->egi", R, cx)
    jac = np.einsum("egad,eai->egid", dR, cx)
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        raise GeometryError("non-positive Jacobian determinant at a quadrature point")
    jinv = np.linalg.inv(jac)
    gradR = np.einsum("egad,egdi->egai", dR, jinv)
    wdet = wt * det

    h = _element_diameters(patch, elems)
    return ElementData(conn=conn, x=x, wdet=wdet, R=R, gradR=gradR, h=h)


def _local_offsets(basis: TensorBasis) -> np.ndarray:
    """Flat local offsets matching the tensor value ordering (dir 0 fastest)."""
    strides = np.cumprod([1] + list(basis.shape[:-1]))
    mesh = np.meshgrid(*[np.arange(p + 1) for p in basis.degrees], indexing="ij")
    return sum(m.reshape(-1, order="F") * s for m, s in zip(mesh, strides)).astype(np.intp)


def _element_diameters(patch: NurbsPatch, elems: np.ndarray) -> np.ndarray:
    """Element diameters from mapped parametric corners."""
    nd = patch.ndim
    zs = [kv.breakpoints for kv in patch.basis.kvs]
    corners = np.array(np.meshgrid(*([[0, 1]] * nd), indexing="ij")).reshape(nd, -1).T
    n_el = elems.shape[0]
    pts = np.empty((n_el * corners.shape[0], nd))
    k = 0
    for e in range(n_el):
        for c in corners:
            pts[k] = [zs[d][elems[e, d] + c[d]] for d in range(nd)]
            k += 1
    xs = patch.evaluate(pts, nders=0)["x"].reshape(n_el, corners.shape[0], -1)
    diffs = xs[:, :, None, :] - xs[:, None, :, :]
    return np.sqrt((diffs ** 2).sum(-1)).max(axis=(1, 2))


def mesh_size(patch: NurbsPatch, quad: QuadratureRule = None) -> float:
    """Maximal physical element diameter."""
    elems = patch.basis.element_multi_indices()
    return float(_element_diameters(patch, elems).max())


# ---------------------------------------------------------------------------
# boundary faces

@dataclass(frozen=True)
class BoundaryFace:
    """One full parametric face of a patch (direction ``axis``, ``side`` 0/1)."""

    patch: NurbsPatch
    axis: int
    side: int

    def __post_init__(self):
        if not 0 <= self.axis < self.patch.ndim or self.side not in (0, 1):
            raise GeometryError("invalid face identifier")

    @property
    def face_dirs(self) -> tuple:
        return tuple(d for d in range(self.patch.ndim) if d != self.axis)

    @property
    def basis(self) -> TensorBasis:
        return TensorBasis(tuple(self.patch.basis.kvs[d] for d in self.face_dirs))

    def volume_indices(self) -> np.ndarray:
        """Flat volume function indices of the face-adjacent control layer.

        Ordered like the face basis flat numbering.
        """
        vb = self.patch.basis
        shape = vb.shape
        strides = np.cumprod([1] + list(shape[:-1]))
        layer = 0 if self.side == 0 else shape[self.axis] - 1
        grids = np.meshgrid(*[np.arange(shape[d]) for d in self.face_dirs],
                            indexing="ij")
        flats = [g.reshape(-1, order="F") for g in grids]
        idx = layer * strides[self.axis]
        for g, d in zip(flats, self.face_dirs):
            idx = idx + g * strides[d]
        return np.asarray(idx, dtype=np.intp)

    def face_patch(self) -> NurbsPatch:
        """The face as a (d-1)-dimensional patch in physical space."""
        idx = self.volume_indices()
        return NurbsPatch(self.basis, self.patch.ctrl[idx], self.patch.weights[idx])

    def volume_point(self, pts_face: np.ndarray) -> np.ndarray:
        """Embed face parametric points into the volume parametric domain."""
        pts_face = np.atleast_2d(pts_face)
        out = np.empty((pts_face.shape[0], self.patch.ndim))
        out[:, self.axis] = float(self.side)
        for j, d in enumerate(self.face_dirs):
            out[:, d] = pts_face[:, j]
        return out


def boundary_frame(face: BoundaryFace, pts_face: np.ndarray):
    """Physical point, unit outward normal and surface measure factor.

    Vectorized over ``pts_face`` of shape (npts, d-1); for d = 2 also
    accepts shape (npts, 1).
    """
    pts_face = np.atleast_2d(np.asarray(pts_face, dtype=float))
    fp = face.face_patch()
    res = fp.evaluate(pts_face, nders=1)
    tang = res["jac"]                                  # (npts, pdim, d-1)
    pd = face.patch.pdim
    if pd == 2:
        t = tang[:, :, 0]
        normal = np.stack([t[:, 1], -t[:, 0]], axis=1)
    else:
        normal = np.cross(tang[:, :, 0], tang[:, :, 1])
    factor = np.linalg.norm(normal, axis=1)
    if np.any(factor <= 0):
        raise GeometryError("degenerate face tangents")
    normal = normal / factor[:, None]
    # orient outward using the volume Jacobian column of the face axis
    vres = face.patch.evaluate(face.volume_point(pts_face), nders=1)
    grow = vres["jac"][:, :, face.axis]
    sign = np.sign(np.einsum("ni,ni->n", normal, grow))
    if face.side == 0:
        sign = -sign
    normal = normal * sign[:, None]
    return res["x"], normal, factor


# ---------------------------------------------------------------------------
# benchmark geometries

def make_box(degree: int = 2, n_elems: int = 1, dim: int = 2,
             lengths=None) -> NurbsPatch:
    """Axis-aligned box [0, L1] x ... with an identity-like parameterization.

    Control points at Greville abscissae and unit weights make the map
    affine (exactly linear in each direction).
    """
    if lengths is None:
        lengths = [1.0] * dim
    kvs = []
    for _ in range(dim):
        kv = _bezier_kv(degree)
        from .splines import refine_uniform as _ru
        levels = int(np.log2(n_elems)) if n_elems > 1 else 0
        if 2 ** levels != n_elems:
            raise GeometryError("n_elems must be a power of two")
        kvs.append(_ru(kv, levels))
    grev = [kv.greville() * L for kv, L in zip(kvs, lengths)]
    mesh = np.meshgrid(*grev, indexing="ij")
    ctrl = np.stack([m.reshape(-1, order="F") for m in mesh], axis=1)
    basis = TensorBasis(tuple(kvs))
    return NurbsPatch(basis, ctrl, np.ones(basis.num_funcs))


_W_ARC = np.sqrt(2.0) / 2.0


def _elevate_bezier(h: np.ndarray, axis: int, times: int) -> np.ndarray:
    """Degree elevation of a single-span Bezier net in homogeneous coords."""
    for _ in range(times):
        h = np.moveaxis(h, axis, 0)
        p = h.shape[0] - 1
        out = np.empty((p + 2,) + h.shape[1:])
        out[0] = h[0]
        out[-1] = h[-1]
        for i in range(1, p + 1):
            a = i / (p + 1)
            out[i] = a * h[i - 1] + (1 - a) * h[i]
        h = np.moveaxis(out, 0, axis)
    return h


def _bezier_kv(p: int) -> KnotVector:
    return KnotVector(p, np.array([0.0] * (p + 1) + [1.0] * (p + 1)))


def _patch_from_homogeneous(h: np.ndarray, kvs) -> NurbsPatch:
    flat = h.reshape(-1, h.shape[-1], order="F")
    w = flat[:, -1]
    return NurbsPatch(TensorBasis(tuple(kvs)), flat[:, :-1] / w[:, None], w)


def make_quarter_disc(R: float, degree: int = 2) -> NurbsPatch:
    """Exact quarter disc {x >= 0, y <= 0, |x| <= R}.

    Direction 0 is radial (0 at the center, 1 on the arc), direction 1 runs
    along the arc from the contact pole (0, -R) to (R, 0). Faces: (0, 1)
    arc / contact; (1, 0) symmetry edge on x = 0; (1, 1) top edge on y = 0.
    """
    if R <= 0:
        raise GeometryError("radius must be positive")
    if degree < 2:
        raise GeometryError("degree must be >= 2")
    s = _W_ARC
    arc = np.array([[0.0, -R, 1.0],
                    [s * R, -s * R, s],
                    [R, 0.0, 1.0]])
    h = np.empty((2, 3, 3))
    h[0] = np.column_stack([np.zeros(3), np.zeros(3), arc[:, 2]])
    h[1] = arc
    h = _elevate_bezier(h, 0, degree - 1)
    h = _elevate_bezier(h, 1, degree - 2)
    return _patch_from_homogeneous(h, [_bezier_kv(degree)] * 2)


def make_octant_sphere(R: float, degree: int = 2) -> NurbsPatch:
    """Exact octant of a ball, contact pole at (0, 0, -R).

    Direction 0 is radial; direction 1 follows the meridian from the
    equator (z = 0) to the pole; direction 2 sweeps from the plane y = 0 to
    the plane x = 0. Faces: (0, 1) spherical surface / contact; (1, 0) top
    quarter disc on z = 0; (2, 0) symmetry y = 0; (2, 1) symmetry x = 0.
    """
    if R <= 0:
        raise GeometryError("radius must be positive")
    if degree < 2:
        raise GeometryError("degree must be >= 2")
    s = _W_ARC
    # meridian (rho, z) from equator (R, 0) to pole (0, -R), homogeneous
    mer = np.array([[R, 0.0, 1.0],
                    [s * R, -s * R, s],
                    [0.0, -R, 1.0]])
    # unit quarter arc in the xy-plane from (1, 0) to (0, 1), homogeneous
    ang = np.array([[1.0, 0.0, 1.0],
                    [s, s, s],
                    [0.0, 1.0, 1.0]])
    surf = np.empty((3, 3, 4))
    for i in range(3):
        for j in range(3):
            surf[i, j, 0] = mer[i, 0] * ang[j, 0]
            surf[i, j, 1] = mer[i, 0] * ang[j, 1]
            surf[i, j, 2] = mer[i, 1] * ang[j, 2]
            surf[i, j, 3] = mer[i, 2] * ang[j, 2]
    h = np.empty((2, 3, 3, 4))
    h[0, :, :, :3] = 0.0
    h[0, :, :, 3] = surf[:, :, 3]
    h[1] = surf
    h = _elevate_bezier(h, 0, degree - 1)
    h = _elevate_bezier(h, 1, degree - 2)
    h = _elevate_bezier(h, 2, degree - 2)
    return _patch_from_homogeneous(h, [_bezier_kv(degree)] * 3)
