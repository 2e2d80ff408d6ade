"""Primal/dual space construction, projection denominators and traces."""

import numpy as np
import pytest

from iga_contact.geometry import (
    BoundaryFace,
    boundary_frame,
    make_box,
    make_quarter_disc,
)
from iga_contact.spaces import (
    SpaceError,
    build_dual,
    build_primal,
    dual_basis_values,
    face_dof_indices,
    face_quadrature,
    trace_matrix,
    trace_normal,
)


@pytest.fixture(scope="module")
def disc2():
    return make_quarter_disc(1.0, 2).refine_uniform(2)


@pytest.fixture(scope="module")
def disc3():
    return make_quarter_disc(1.0, 3).refine_uniform(1)


# ---------------------------------------------------------------------------
# primal space

def test_primal_constraint_elimination(disc2):
    space = build_primal(disc2, [(1, 0, (0,), 0.0)])
    n = space.num_dofs
    assert space.free_dofs.size + space.constrained_dofs.size == n
    assert np.intersect1d(space.free_dofs, space.constrained_dofs).size == 0
    # the symmetry face x=0 has one control column; only x-components fixed
    face = BoundaryFace(disc2, 1, 0)
    expected = set(int(i) * 2 for i in face.volume_indices())
    assert set(map(int, space.constrained_dofs)) == expected


def test_primal_inhomogeneous_values(disc2):
    space = build_primal(disc2, [(1, 1, (1,), -0.4)])
    u = space.full_vector()
    assert np.allclose(u[space.constrained_dofs], -0.4)
    assert np.allclose(np.delete(u, space.constrained_dofs), 0.0)
    u_half = space.full_vector(0.5)
    assert np.allclose(u_half[space.constrained_dofs], -0.2)
    v = space.apply_constraints(np.ones(space.num_dofs), 1.0)
    assert np.allclose(v[space.constrained_dofs], -0.4)
    assert np.allclose(v[space.free_dofs], 1.0)


def test_primal_rejects_bad_component(disc2):
    with pytest.raises(SpaceError):
        build_primal(disc2, [(1, 0, (2,), 0.0)])


def test_primal_warns_without_constraints(disc2):
    with pytest.warns(UserWarning):
        build_primal(disc2, [])


# ---------------------------------------------------------------------------
# dual space

@pytest.mark.parametrize("fixture,p", [("disc2", 2), ("disc3", 3)])
def test_dual_degree_and_dimension(fixture, p, request):
    patch = request.getfixturevalue(fixture)
    face = BoundaryFace(patch, 0, 1)
    dual = build_dual(face)
    n_el = face.basis.kvs[0].num_elements
    assert dual.degree == p - 2
    if p == 2:
        assert dual.num_funcs == n_el            # S0: one constant per element
    else:
        assert dual.num_funcs == n_el + 1        # S1: hat functions


def test_dual_partition_of_unity(disc2, disc3):
    rng = np.random.default_rng(0)
    for patch in (disc2, disc3):
        dual = build_dual(BoundaryFace(patch, 0, 1))
        pts = rng.uniform(0, 1, (500, 1))
        B = dual_basis_values(dual, pts)
        assert B.min() >= -1e-14
        np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-13)


def test_dual_measures_positive_and_sum(disc2):
    for levels in (0, 1, 2):
        patch = disc2.refine_uniform(levels)
        dual = build_dual(BoundaryFace(patch, 0, 1))
        assert dual.measures.min() > 0
        # partition of unity => measures sum to the face measure (pi/2);
        # tolerance reflects the quadrature error of the rational arc speed
        assert abs(dual.measures.sum() - np.pi / 2) < 1e-8
    fine = build_dual(BoundaryFace(disc2.refine_uniform(3), 0, 1),
                      points_per_dir=6)
    assert abs(fine.measures.sum() - np.pi / 2) < 1e-12


def test_dual_requires_degree_two():
    from iga_contact.geometry import NurbsPatch
    from iga_contact.splines import KnotVector, TensorBasis
    kv = KnotVector(1, [0, 0, 0.5, 1, 1])
    basis = TensorBasis((kv, kv))
    grev = [k.greville() for k in basis.kvs]
    mesh = np.meshgrid(*grev, indexing="ij")
    ctrl = np.stack([m.reshape(-1, order="F") for m in mesh], axis=1)
    patch = NurbsPatch(basis, ctrl, np.ones(basis.num_funcs))
    with pytest.raises(SpaceError):
        build_dual(BoundaryFace(patch, 0, 1))


def test_dual_greville_points(disc2):
    dual = build_dual(BoundaryFace(disc2, 0, 1))
    gv = dual.greville_points()
    assert gv.shape == (dual.num_funcs, 1)
    # degree-0 Greville points are the element midpoints
    kv = dual.basis.kvs[0]
    mids = 0.5 * (kv.breakpoints[:-1] + kv.breakpoints[1:])
    np.testing.assert_allclose(gv[:, 0], mids, atol=1e-14)


# ---------------------------------------------------------------------------
# face quadrature

def test_face_quadrature_measures(disc2):
    face = BoundaryFace(disc2, 0, 1)
    _, w, x, n = face_quadrature(face, 4)
    assert abs(w.sum() - np.pi / 2) < 1e-10
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(n, x, atol=1e-12)
    # integrating x over the arc: int x dGamma = R^2 = 1
    assert abs(float(w @ x[:, 0]) - 1.0) < 1e-10


# ---------------------------------------------------------------------------
# traces

def test_trace_constant_field(disc2):
    space = build_primal(disc2, [(1, 0, (0,), 0.0)])
    face = BoundaryFace(disc2, 0, 1)
    u = np.tile([0.3, -0.7], space.patch.basis.num_funcs)
    pts = np.linspace(0, 1, 11)[:, None]
    T, fdofs = trace_matrix(space, face, pts, np.array([0.0, 1.0]))
    np.testing.assert_allclose(T @ u[fdofs], -0.7, atol=1e-13)
    ev = trace_normal(space, face, np.array([0.0, 1.0]))
    np.testing.assert_allclose(ev(u, pts), -0.7, atol=1e-13)
    np.testing.assert_allclose(ev(np.zeros_like(u), pts), 0.0, atol=1e-15)


def test_trace_linear_field_oracle(disc2):
    """Linear displacement u(x) = A x compared against analytic v(x).n."""
    space = build_primal(disc2, [(1, 0, (0,), 0.0)])
    face = BoundaryFace(disc2, 0, 1)
    A = np.array([[0.2, -0.5], [0.4, 0.1]])
    # control coefficients of a linear field: apply A to control points
    # (affine precision of NURBS with the geometry's own weights)
    u = (space.patch.ctrl @ A.T).reshape(-1)
    pts = np.linspace(0, 1, 20)[:, None]
    x, n, _ = boundary_frame(face, pts)
    T, fdofs = trace_matrix(space, face, pts, n)
    expected = np.einsum("ni,ni->n", x @ A.T, n)
    np.testing.assert_allclose(T @ u[fdofs], expected, atol=1e-12)


def test_trace_consistency_with_volume_field(disc2):
    """Face trace equals the volume field evaluated on the face."""
    rng = np.random.default_rng(1)
    space = build_primal(disc2, [(1, 0, (0,), 0.0)])
    face = BoundaryFace(disc2, 0, 1)
    u = rng.normal(size=space.num_dofs)
    pts = rng.uniform(0, 1, (15, 1))
    normal = np.array([0.0, 1.0])
    T, fdofs = trace_matrix(space, face, pts, normal)
    res = space.patch.evaluate(face.volume_point(pts), nders=0)
    ue = u.reshape(-1, 2)[res["conn"]]
    vol_vals = np.einsum("na,nac->nc", res["R"], ue) @ normal
    np.testing.assert_allclose(T @ u[fdofs], vol_vals, atol=1e-12)


def test_face_dof_indices_layout():
    patch = make_box(degree=2, n_elems=2, dim=2)
    space = build_primal(patch, [(1, 0, (1,), 0.0)])
    face = BoundaryFace(patch, 1, 0)
    fd = face_dof_indices(space, face)
    vol = face.volume_indices()
    assert fd.size == vol.size * 2
    np.testing.assert_array_equal(fd[::2], vol * 2)
    np.testing.assert_array_equal(fd[1::2], vol * 2 + 1)
