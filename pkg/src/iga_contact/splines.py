"""Univariate and tensor-product B-spline machinery.

Open knot vectors, Cox-de Boor evaluation with derivatives, uniform
h-refinement by knot insertion, and the trimmed (degree reduced by two)
knot vector used for the multiplier basis on the contact face.

All evaluation routines are pure; the container types are immutable after
construction and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MAX_DEGREE = 4


class SplineError(ValueError):
    """Raised for invalid knot vectors, degrees or evaluation points."""


@dataclass(frozen=True)
class KnotVector:
    """Open univariate knot vector on [0, 1] (or any interval).

    Attributes:
        degree: polynomial degree p >= 0.
        knots: non-decreasing knot values; the first and last value each
            repeated exactly ``degree + 1`` times.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "knots", np.asarray(self.knots, dtype=float))
        p, t = self.degree, self.knots
        if p < 0 or p > MAX_DEGREE:
            raise SplineError(f"degree must be in [0, {MAX_DEGREE}], got {p}")
        if t.ndim != 1 or t.size < 2 * (p + 1):
            raise SplineError("knot vector too short for degree")
        if np.any(np.diff(t) < 0):
            raise SplineError("knots must be non-decreasing")
        if not (np.all(t[: p + 1] == t[0]) and np.all(t[-(p + 1):] == t[-1])):
            raise SplineError("knot vector must be open (end multiplicity p+1)")
        if t.size > 2 * (p + 1):
            if t[p + 1] == t[0] or t[-(p + 2)] == t[-1]:
                raise SplineError("end knot multiplicity exceeds p+1")
        # Interior smoothness: multiplicity <= p-1 for p >= 2 (C^1 at least),
        # <= p for lower degrees (C^0).
        interior = t[p + 1: t.size - p - 1]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            cap = p - 1 if p >= 2 else 1
            if np.any(counts > cap):
                raise SplineError("interior knot multiplicity too high")
        if self.num_funcs < p + 1:
            raise SplineError("not enough basis functions")
        self.knots.setflags(write=False)

    @property
    def num_funcs(self) -> int:
        """Dimension of the spline space, len(knots) - p - 1."""
        return self.knots.size - self.degree - 1

    @cached_property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (element boundaries)."""
        return np.unique(self.knots)

    @property
    def num_elements(self) -> int:
        return self.breakpoints.size - 1

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])

    def span_of_element(self, e: int) -> int:
        """Knot-span index of element ``e`` (between breakpoints e and e+1)."""
        return find_span(self, 0.5 * (self.breakpoints[e] + self.breakpoints[e + 1]))

    def greville(self) -> np.ndarray:
        """Greville abscissae (p-knot averages), one per basis function."""
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        out = np.empty(self.num_funcs)
        for i in range(self.num_funcs):
            out[i] = self.knots[i + 1: i + p + 1].mean()
        return out


def find_span(kv: KnotVector, xi: float) -> int:
    """Knot-span index i with knots[i] <= xi < knots[i+1].

    The domain end is closed on the right: xi == last knot returns the last
    non-empty span.
    """
    t, p = kv.knots, kv.degree
    if xi < t[0] or xi > t[-1]:
        raise SplineError(f"point {xi} outside knot range [{t[0]}, {t[-1]}]")
    if xi >= t[-1]:
        # last non-empty span
        return int(np.searchsorted(t, t[-1], side="left") - 1)
    return int(np.searchsorted(t, xi, side="right") - 1)


def find_spans(kv: KnotVector, xi: np.ndarray) -> np.ndarray:
    """Vectorized :func:`find_span`."""
    t = kv.knots
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < t[0]) or np.any(xi > t[-1]):
        raise SplineError("point outside knot range")
    spans = np.searchsorted(t, xi, side="right") - 1
    last = np.searchsorted(t, t[-1], side="left") - 1
    return np.minimum(spans, last).astype(np.intp)


@dataclass(frozen=True)
class BasisEval:
    """Non-zero basis values/derivatives at one parametric point.

    ``ders[k, j]`` is the k-th derivative of function ``first + j``.
    """

    span: int
    first: int
    ders: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.ders[0]


def _ders_basis_funs(t: np.ndarray, p: int, spans: np.ndarray,
                     xi: np.ndarray, nders: int) -> np.ndarray:
    """Cox-de Boor values and derivatives, vectorized over points.

    Returns array of shape (npts, nders + 1, p + 1); derivative orders
    beyond the degree are zero.
    """
    npts = xi.size
    ndu = np.empty((npts, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.empty((npts, p + 1))
    right = np.empty((npts, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xi - t[spans + 1 - j]
        right[:, j] = t[spans + j] - xi
        saved = np.zeros(npts)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((npts, nders + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    nk = min(nders, p)
    a = np.empty((npts, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:, 0, 0] = 1.0
        for k in range(1, nk + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d += a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    # multiply through by the correct factors
    fac = float(p)
    for k in range(1, nk + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return ders


def eval_basis(kv: KnotVector, xi: float, deriv_order: int = 0) -> BasisEval:
    """Values and derivatives of the p+1 functions non-zero at ``xi``."""
    span = find_span(kv, xi)
    ders = _ders_basis_funs(kv.knots, kv.degree,
                            np.array([span], dtype=np.intp),
                            np.array([float(xi)]), deriv_order)[0]
    return BasisEval(span=span, first=span - kv.degree, ders=ders)


def eval_basis_many(kv: KnotVector, xi: np.ndarray, deriv_order: int = 0):
    """Vectorized basis evaluation.

    Returns ``(spans, ders)`` with ``ders`` of shape
    (npts, deriv_order + 1, p + 1); the functions non-zero at point i are
    ``spans[i] - p .. spans[i]``.
    """
    xi = np.asarray(xi, dtype=float)
    spans = find_spans(kv, xi)
    ders = _ders_basis_funs(kv.knots, kv.degree, spans, xi, deriv_order)
    return spans, ders


def refine_uniform(kv: KnotVector, levels: int = 1) -> KnotVector:
    """Bisect every non-empty knot span ``levels`` times (nested spaces)."""
    if levels < 0:
        raise SplineError("levels must be >= 0")
    knots = kv.knots
    for _ in range(levels):
        z = np.unique(knots)
        mids = 0.5 * (z[:-1] + z[1:])
        knots = np.sort(np.concatenate([knots, mids]))
    return KnotVector(kv.degree, knots)


def insert_knot(kv: KnotVector, x: float, coefs: np.ndarray):
    """Boehm single-knot insertion.

    ``coefs`` has shape (num_funcs, m); returns the refined knot vector and
    coefficients representing the same spline.
    """
    t, p = kv.knots, kv.degree
    k = find_span(kv, x)
    coefs = np.asarray(coefs, dtype=float)
    n = kv.num_funcs
    new = np.empty((n + 1, coefs.shape[1]))
    new[: k - p + 1] = coefs[: k - p + 1]
    for i in range(k - p + 1, k + 1):
        denom = t[i + p] - t[i]
        alpha = (x - t[i]) / denom if denom > 0 else 0.0
        new[i] = alpha * coefs[i] + (1.0 - alpha) * coefs[i - 1]
    new[k + 1:] = coefs[k:]
    return KnotVector(p, np.insert(t, k + 1, x)), new


def insert_knots(kv: KnotVector, xs, coefs: np.ndarray):
    """Insert several knots in sequence (see :func:`insert_knot`)."""
    for x in sorted(xs):
        kv, coefs = insert_knot(kv, x, coefs)
    return kv, coefs


def refine_with_coefs(kv: KnotVector, target: KnotVector, coefs: np.ndarray):
    """Re-express ``coefs`` on a nested refinement ``target`` of ``kv``."""
    if target.degree != kv.degree:
        raise SplineError("refinement must preserve degree")
    extra = _multiset_difference(target.knots, kv.knots)
    kv2, coefs2 = insert_knots(kv, extra, coefs)
    if not np.allclose(kv2.knots, target.knots):
        raise SplineError("target knot vector is not a refinement")
    return coefs2


def _multiset_difference(big: np.ndarray, small: np.ndarray) -> list:
    out = []
    j = 0
    for x in big:
        if j < small.size and np.isclose(x, small[j]):
            j += 1
        else:
            out.append(float(x))
    if j != small.size:
        raise SplineError("knot vectors are not nested")
    return out


def trim_for_dual(kv: KnotVector) -> KnotVector:
    """Open knot vector of degree p-2 over the same breakpoints.

    Drops the first two and last two knot values so the end multiplicity
    becomes (p+1) - 2 = p - 1, which is open for degree p - 2.
    """
    if kv.degree < 2:
        raise SplineError("dual space requires degree >= 2")
    return KnotVector(kv.degree - 2, kv.knots[2:-2])


@dataclass(frozen=True)
class TensorBasis:
    """Tensor product of univariate knot vectors, lexicographic unrolling.

    The first direction runs fastest in the flat numbering.
    """

    kvs: tuple

    def __post_init__(self):
        object.__setattr__(self, "kvs", tuple(self.kvs))
        if not 1 <= len(self.kvs) <= 3:
            raise SplineError("1 to 3 directions supported")

    @property
    def ndim(self) -> int:
        return len(self.kvs)

    @property
    def shape(self) -> tuple:
        return tuple(kv.num_funcs for kv in self.kvs)

    @property
    def num_funcs(self) -> int:
        return int(np.prod(self.shape))

    @property
    def degrees(self) -> tuple:
        return tuple(kv.degree for kv in self.kvs)

    @property
    def num_elements(self) -> int:
        return int(np.prod([kv.num_elements for kv in self.kvs]))

    def flat_index(self, multi) -> int:
        idx, stride = 0, 1
        for i, kv in zip(multi, self.kvs):
            if not 0 <= i < kv.num_funcs:
                raise SplineError("multi-index out of range")
            idx += i * stride
            stride *= kv.num_funcs
        return idx

    def multi_index(self, flat: int) -> tuple:
        out = []
        for kv in self.kvs:
            out.append(flat % kv.num_funcs)
            flat //= kv.num_funcs
        return tuple(out)

    def element_multi_indices(self) -> np.ndarray:
        """All element multi-indices, first direction fastest."""
        grids = np.meshgrid(*[np.arange(kv.num_elements) for kv in self.kvs],
                            indexing="ij")
        return np.stack([g.reshape(-1, order="F") for g in grids], axis=1)

    def refine_uniform(self, levels: int = 1) -> "TensorBasis":
        return TensorBasis(tuple(refine_uniform(kv, levels) for kv in self.kvs))
