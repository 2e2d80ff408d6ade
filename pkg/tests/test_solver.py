"""Active-set Newton solver: linear algebra, fixed points, invariances."""

import numpy as np
import pytest
import scipy.sparse as sp

from iga_contact.contact import (
    ActiveSet,
    AugmentedParams,
    RigidPlane,
    build_projection_data,
    gap_projection,
    update_active_set,
)
from iga_contact.elasticity import Material, assemble_linear, assemble_neumann_pressure
from iga_contact.geometry import (
    BoundaryFace,
    element_data,
    gauss_rule,
    make_quarter_disc,
    mesh_size,
)
from iga_contact.solver import (
    NewtonConfig,
    NonConvergenceError,
    SolverError,
    _ContactOperator,
    _SchurSolver,
    linear_solve,
    solve_linear_contact,
    solve_nonlinear_contact,
)
from iga_contact.spaces import build_dual, build_primal

MAT = Material("linear", young=1.0, poisson=0.3)


def hertz_problem(p=2, levels=2, pressure=0.003):
    """Coarse uniform-mesh 2D Hertz contact problem pieces."""
    patch = make_quarter_disc(1.0, p).refine_uniform(levels)
    space = build_primal(patch, [(1, 0, (0,), 0.0)])
    face = BoundaryFace(patch, 0, 1)
    dual = build_dual(face)
    plane = RigidPlane(np.array([0.0, 1.0]), -1.0)
    quad = gauss_rule([kv.breakpoints for kv in patch.basis.kvs], p + 1)
    ed = element_data(patch, quad)
    load = assemble_neumann_pressure(space, BoundaryFace(patch, 1, 1), pressure)
    fp = face.face_patch()
    h_c = mesh_size(fp)
    params = AugmentedParams(r0=100.0, h_contact=h_c)
    return space, dual, plane, ed, load, params


@pytest.fixture(scope="module")
def solved():
    space, dual, plane, ed, load, params = hertz_problem()
    state, report = solve_linear_contact(space, dual, MAT, ed, load, plane,
                                         params)
    return space, dual, plane, ed, load, params, state, report


# ---------------------------------------------------------------------------
# direct solves

def test_linear_solve_identity():
    rhs = np.array([3.0, -1.0, 2.0])
    x = linear_solve(sp.eye(3, format="csc"), rhs)
    np.testing.assert_allclose(x, rhs, atol=1e-14)


def test_linear_solve_indefinite_oracle():
    A = sp.csc_matrix(np.array([[0.0, 1.0], [1.0, -1.0]]))
    x = linear_solve(A, np.array([1.0, 0.0]))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-14)


def test_linear_solve_random_residual():
    rng = np.random.default_rng(0)
    A = sp.random(80, 80, density=0.1, random_state=0, format="csc")
    A = A + A.T + 80 * sp.eye(80)
    b = rng.normal(size=80)
    x = linear_solve(A, b)
    assert np.linalg.norm(A @ x - b) < 1e-9 * np.linalg.norm(b)


def test_linear_solve_singular_raises():
    A = sp.csc_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SolverError):
        linear_solve(A, np.array([1.0, 1.0]), n_u=1)


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(rtol=0.0)
    with pytest.raises(ValueError):
        NewtonConfig(atol=-1.0)


# ---------------------------------------------------------------------------
# converged linear contact solve

def test_solve_converges_with_contact(solved):
    space, dual, plane, ed, load, params, state, report = solved
    assert report.residuals[-1] <= 1e-8 * max(report.residuals)
    assert 0 < state.active.count < dual.num_funcs


def test_active_set_fixed_point(solved):
    space, dual, plane, ed, load, params, state, report = solved
    pdata = build_projection_data(space, dual, plane)
    again = update_active_set(state.lam, gap_projection(pdata, state.u), params)
    assert again == state.active


def test_discrete_complementarity(solved):
    space, dual, plane, ed, load, params, state, report = solved
    act = state.active.flags
    assert np.all(state.lam[act] <= 1e-12)
    assert np.abs(state.lam[~act]).max() < 1e-12


def test_projected_gap_signs(solved):
    space, dual, plane, ed, load, params, state, report = solved
    pdata = build_projection_data(space, dual, plane)
    gp = gap_projection(pdata, state.u)
    act = state.active.flags
    assert np.abs(gp[act]).max() < 1e-9          # contact: projected gap zero
    assert gp[~act].min() > -1e-9                # separation: non-negative


def test_residual_tail_decreases(solved):
    space, dual, plane, ed, load, params, state, report = solved
    tail = report.residuals[-3:]
    assert all(b < a for a, b in zip(tail, tail[1:]))


def test_saddle_matrix_symmetry(solved):
    space, dual, plane, ed, load, params, state, report = solved
    pdata = build_projection_data(space, dual, plane)
    K = assemble_linear(space, MAT, ed).matrix
    free = space.free_dofs
    op = _ContactOperator(space, dual, pdata, params)
    A = op.tangent(K[free][:, free].tocsr(), state.active)
    diff = abs(A - A.T).max()
    assert diff <= 1e-12 * abs(A).max()


def test_independent_of_initial_active_set(solved):
    space, dual, plane, ed, load, params, state, report = solved
    all_active = ActiveSet(np.ones(dual.num_funcs, dtype=bool))
    state2, _ = solve_linear_contact(space, dual, MAT, ed, load, plane,
                                     params, initial_active=all_active)
    assert np.abs(state2.u - state.u).max() < 1e-8
    assert np.abs(state2.lam - state.lam).max() < 1e-8
    assert state2.active == state.active


def test_solution_independent_of_r0(solved):
    space, dual, plane, ed, load, params, state, report = solved
    other = AugmentedParams(r0=37.0, h_contact=params.h_contact)
    state2, _ = solve_linear_contact(space, dual, MAT, ed, load, plane, other)
    assert np.abs(state2.u - state.u).max() < 1e-9
    assert np.abs(state2.lam - state.lam).max() < 1e-9


def test_solve_deterministic(solved):
    space, dual, plane, ed, load, params, state, report = solved
    state2, _ = solve_linear_contact(space, dual, MAT, ed, load, plane, params)
    assert state.u.tobytes() == state2.u.tobytes()
    assert state.lam.tobytes() == state2.lam.tobytes()


def test_nonconvergence_raises():
    space, dual, plane, ed, load, params = hertz_problem()
    cfg = NewtonConfig(rtol=1e-14, atol=1e-300, max_iter=1)
    all_active = ActiveSet(np.ones(dual.num_funcs, dtype=bool))
    with pytest.raises(NonConvergenceError) as exc:
        solve_linear_contact(space, dual, MAT, ed, load, plane, params,
                             cfg=cfg, initial_active=all_active)
    assert exc.value.report.residuals


# ---------------------------------------------------------------------------
# Schur-complement saddle solver

def test_schur_solver_matches_direct():
    space, dual, plane, ed, load, params = hertz_problem(levels=1)
    pdata = build_projection_data(space, dual, plane)
    K = assemble_linear(space, MAT, ed).matrix
    free = space.free_dofs
    K_ff = K[free][:, free].tocsr()
    op = _ContactOperator(space, dual, pdata, params)
    from iga_contact.contact import contact_tangent, seed_active_set
    active = seed_active_set(dual, pdata, plane)
    H_uu, H_ul, H_ll = contact_tangent(pdata, params, active)
    m = op.face_free_mask
    rng = np.random.default_rng(1)
    b1 = rng.normal(size=op.n_free)
    b2 = rng.normal(size=op.n_lam)
    schur = _SchurSolver(K_ff, op.face_free_pos)
    du, dl = schur.solve(b1, b2, H_uu[np.ix_(m, m)], H_ul[m, :], H_ll)
    A = op.tangent(K_ff, active)
    xy = linear_solve(A, np.concatenate([b1, b2]), n_u=op.n_free)
    scale = np.abs(xy).max()
    assert np.abs(du - xy[:op.n_free]).max() < 1e-9 * scale
    assert np.abs(dl - xy[op.n_free:]).max() < 1e-9 * scale


# ---------------------------------------------------------------------------
# nonlinear (Neo-Hookean) path

def test_nonlinear_solve_runs_all_load_steps():
    p = 2
    patch = make_quarter_disc(1.0, p).refine_uniform(2)
    space = build_primal(patch, [(1, 0, (0,), 0.0), (1, 1, (1,), -0.1)])
    face = BoundaryFace(patch, 0, 1)
    dual = build_dual(face)
    plane = RigidPlane(np.array([0.0, 1.0]), -1.0)
    quad = gauss_rule([kv.breakpoints for kv in patch.basis.kvs], p + 1)
    ed = element_data(patch, quad)
    params = AugmentedParams(r0=100.0, h_contact=mesh_size(face.face_patch()))
    mat = Material("neo-hookean", 1.0, 0.3)
    cfg = NewtonConfig(load_steps=4)
    state, report = solve_nonlinear_contact(space, dual, mat, ed, plane,
                                            params, cfg=cfg)
    assert state.load_factor == 1.0
    assert state.active.count > 0
    # prescribed displacement reached on the top face
    np.testing.assert_allclose(state.u[space.constrained_dofs],
                               space.constrained_values, atol=1e-14)
    # complementarity holds for the final state
    act = state.active.flags
    assert np.all(state.lam[act] <= 1e-12)
    assert np.abs(state.lam[~act]).max() < 1e-12
