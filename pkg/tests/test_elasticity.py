"""Elastic assembly: stiffness, pressure loads, Neo-Hookean tangents."""

import warnings

import numpy as np
import pytest

from iga_contact.elasticity import (
    Material,
    NonPhysicalStateError,
    assemble_linear,
    assemble_neo_hookean,
    assemble_neumann_pressure,
    eval_stress,
    neo_hookean_energy,
)
from iga_contact.geometry import (
    BoundaryFace,
    element_data,
    gauss_rule,
    make_box,
    make_quarter_disc,
    make_octant_sphere,
)
from iga_contact.spaces import build_primal
from iga_contact.solver import linear_solve

MAT = Material("linear", young=1.0, poisson=0.3)
NH = Material("neo-hookean", young=1.0, poisson=0.3)


def make_edata(patch, n_q=3):
    quad = gauss_rule([kv.breakpoints for kv in patch.basis.kvs], n_q)
    return element_data(patch, quad)


def unconstrained_space(patch):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_primal(patch, [])


# ---------------------------------------------------------------------------
# material

def test_material_validation():
    assert np.isclose(MAT.lame_mu, 1.0 / 2.6)
    assert np.isclose(MAT.lame_lambda, 0.3 / (1.3 * 0.4))
    with pytest.raises(ValueError):
        Material("unknown", 1.0, 0.3)
    with pytest.raises(ValueError):
        Material("linear", -1.0, 0.3)
    with pytest.raises(ValueError):
        Material("linear", 1.0, 0.5)


# ---------------------------------------------------------------------------
# linear stiffness

def test_stiffness_symmetric_psd_rigid_kernel_2d():
    patch = make_box(degree=2, n_elems=2, dim=2)
    space = unconstrained_space(patch)
    K = assemble_linear(space, MAT, make_edata(patch)).matrix.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    w = np.linalg.eigvalsh(K)
    tol = 1e-10 * w.max()
    assert np.sum(np.abs(w) < tol) == 3          # 2 translations + 1 rotation
    assert w.min() > -tol


def test_stiffness_rigid_kernel_3d():
    patch = make_octant_sphere(1.0, 2)
    space = unconstrained_space(patch)
    K = assemble_linear(space, MAT, make_edata(patch)).matrix.toarray()
    w = np.linalg.eigvalsh(K)
    tol = 1e-9 * w.max()
    assert np.sum(np.abs(w) < tol) == 6          # 3 translations + 3 rotations
    assert w.min() > -tol


def test_stiffness_annihilates_rigid_modes():
    patch = make_quarter_disc(1.0, 2).refine_uniform(1)
    space = unconstrained_space(patch)
    K = assemble_linear(space, MAT, make_edata(patch)).matrix
    ctrl = patch.ctrl
    ncp = ctrl.shape[0]
    tx = np.tile([1.0, 0.0], ncp)
    ty = np.tile([0.0, 1.0], ncp)
    rot = np.stack([-ctrl[:, 1], ctrl[:, 0]], axis=1).reshape(-1)
    for mode in (tx, ty, rot):
        assert np.abs(K @ mode).max() < 1e-12


def test_assembly_deterministic():
    patch = make_quarter_disc(1.0, 2).refine_uniform(2)
    space = build_primal(patch, [(1, 0, (0,), 0.0)])
    ed = make_edata(patch)
    a = assemble_linear(space, MAT, ed).matrix
    b = assemble_linear(space, MAT, ed).matrix
    assert a.data.tobytes() == b.data.tobytes()
    assert a.indices.tobytes() == b.indices.tobytes()


# ---------------------------------------------------------------------------
# pressure loads

def test_neumann_pressure_total_force():
    patch = make_box(degree=2, n_elems=2, dim=2, lengths=[2.0, 1.0])
    space = build_primal(patch, [(1, 0, (1,), 0.0)])
    P = 0.37
    load = assemble_neumann_pressure(space, BoundaryFace(patch, 1, 1), P)
    fx, fy = load[0::2].sum(), load[1::2].sum()
    assert abs(fx) < 1e-13
    assert abs(fy - (-P * 2.0)) < 1e-12          # -P * n * face measure


def test_patch_test_uniform_stress():
    """Pressure on the top of a box: sigma_yy = -P exactly (patch test)."""
    patch = make_box(degree=2, n_elems=2, dim=2)
    space = build_primal(patch, [(1, 0, (1,), 0.0), (0, 0, (0,), 0.0)])
    ed = make_edata(patch)
    P = 0.01
    K = assemble_linear(space, MAT, ed).matrix
    load = assemble_neumann_pressure(space, BoundaryFace(patch, 1, 1), P)
    free = space.free_dofs
    u = space.full_vector()
    u[free] = linear_solve(K[free][:, free].tocsc(), load[free])
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.1, 0.9, (10, 2))
    sig = eval_stress(space, MAT, u, pts)
    np.testing.assert_allclose(sig[:, 1, 1], -P, atol=1e-8)
    np.testing.assert_allclose(sig[:, 0, 0], 0.0, atol=1e-8)
    np.testing.assert_allclose(sig[:, 0, 1], 0.0, atol=1e-8)


def test_uniform_strain_uniform_stress():
    patch = make_quarter_disc(1.0, 2).refine_uniform(1)
    space = unconstrained_space(patch)
    A = np.array([[0.01, 0.004], [0.004, -0.02]])
    u = (patch.ctrl @ A.T).reshape(-1)
    pts = np.random.default_rng(1).uniform(0.05, 0.95, (12, 2))
    sig = eval_stress(space, MAT, u, pts)
    lam, mu = MAT.lame_lambda, MAT.lame_mu
    expected = lam * np.trace(A) * np.eye(2) + 2 * mu * A
    np.testing.assert_allclose(sig, np.broadcast_to(expected, sig.shape),
                               atol=1e-12)
    zero = eval_stress(space, MAT, np.zeros_like(u), pts)
    np.testing.assert_allclose(zero, 0.0, atol=1e-15)


# ---------------------------------------------------------------------------
# Neo-Hookean

@pytest.fixture(scope="module")
def nh_setup():
    patch = make_quarter_disc(1.0, 2).refine_uniform(1)
    space = unconstrained_space(patch)
    ed = make_edata(patch)
    rng = np.random.default_rng(7)
    u = 0.02 * rng.normal(size=space.num_dofs)
    return space, ed, u


def test_nh_residual_is_energy_gradient(nh_setup):
    space, ed, u = nh_setup
    rng = np.random.default_rng(8)
    res, _ = assemble_neo_hookean(space, NH, ed, u)
    h = 1e-6
    for _ in range(5):
        du = rng.normal(size=u.size)
        du /= np.linalg.norm(du)
        wp = neo_hookean_energy(space, NH, ed, u + h * du)
        wm = neo_hookean_energy(space, NH, ed, u - h * du)
        fd = (wp - wm) / (2 * h)
        assert abs(float(res @ du) - fd) < 1e-5 * max(abs(fd), 1e-8)


def test_nh_tangent_matches_finite_difference(nh_setup):
    space, ed, u = nh_setup
    rng = np.random.default_rng(9)
    _, K = assemble_neo_hookean(space, NH, ed, u)
    h = 1e-6
    for _ in range(3):
        du = rng.normal(size=u.size)
        du /= np.linalg.norm(du)
        rp, _ = assemble_neo_hookean(space, NH, ed, u + h * du)
        rm, _ = assemble_neo_hookean(space, NH, ed, u - h * du)
        fd = (rp - rm) / (2 * h)
        Kdu = K @ du
        err = np.linalg.norm(Kdu - fd) / np.linalg.norm(Kdu)
        assert err < 1e-5


def test_nh_tangent_symmetric(nh_setup):
    space, ed, u = nh_setup
    _, K = assemble_neo_hookean(space, NH, ed, u)
    diff = (K - K.T)
    assert abs(diff).max() < 1e-12 * abs(K).max()


def test_nh_consistent_with_linear_at_small_strain(nh_setup):
    space, ed, u = nh_setup
    K_lin = assemble_linear(space, NH, ed).matrix
    eps = 1e-6
    res, _ = assemble_neo_hookean(space, NH, ed, eps * u)
    lin = K_lin @ u
    assert np.linalg.norm(res / eps - lin) < 1e-4 * np.linalg.norm(lin)
    # zero state: zero residual, tangent equals the linear stiffness
    res0, K0 = assemble_neo_hookean(space, NH, ed, np.zeros_like(u))
    assert np.abs(res0).max() < 1e-14
    assert abs(K0 - K_lin).max() < 1e-10


def test_nh_rejects_inverted_elements():
    patch = make_box(degree=2, n_elems=1, dim=2)
    space = unconstrained_space(patch)
    ed = make_edata(patch)
    # u_y = -2 y inverts the deformation gradient
    u = np.stack([np.zeros(patch.ctrl.shape[0]), -2.0 * patch.ctrl[:, 1]],
                 axis=1).reshape(-1)
    with pytest.raises(NonPhysicalStateError):
        neo_hookean_energy(space, NH, ed, u)
    with pytest.raises(NonPhysicalStateError):
        assemble_neo_hookean(space, NH, ed, u)
