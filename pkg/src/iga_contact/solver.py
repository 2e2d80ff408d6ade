"""Semismooth Newton solver for the augmented Lagrangian contact system.

Per iteration the active set is refreshed from the current multiplier and
projected gap; with the set frozen the step is an exact Newton step (the
small-deformation system is then linear, so each active-set guess is
solved in one step). Large deformation adds load stepping with cut-back.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .contact import (
    ActiveSet,
    AugmentedParams,
    ProjectionData,
    RigidPlane,
    build_projection_data,
    contact_residual,
    contact_tangent,
    gap_projection,
    seed_active_set,
    update_active_set,
)
from .elasticity import (
    AssembledOperator,
    Material,
    NonPhysicalStateError,
    assemble_linear,
    assemble_neo_hookean,
)
from .geometry import ElementData
from .spaces import DualSpace, PrimalSpace


class SolverError(RuntimeError):
    """Linear algebra failure or non-convergence."""


class NonConvergenceError(SolverError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class NewtonConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_iter: int = 50
    load_steps: int = 10
    max_cutbacks: int = 5

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SystemState:
    """Displacement coefficients, multiplier coefficients and active set."""

    u: np.ndarray
    lam: np.ndarray
    active: ActiveSet
    load_factor: float = 1.0


@dataclass
class SolveReport:
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    active_size: int = 0
    wall_time: float = 0.0


def linear_solve(matrix, rhs: np.ndarray, n_u: int = None) -> np.ndarray:
    """Direct sparse solve with a residual check.

    ``n_u`` (optional) is the number of leading displacement unknowns,
    used to classify the offending dof on singular systems.
    """
    A = sp.csc_matrix(matrix)
    try:
        lu = spla.splu(A)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverError(_singular_message(A, n_u, exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SolverError(_singular_message(A, n_u, "non-finite solution"))
    bnorm = np.linalg.norm(rhs)
    resid = np.linalg.norm(A @ x - rhs)
    if resid > 1e-12 * max(bnorm, 1e-300):
        # one step of iterative refinement for ill-conditioned fine meshes
        x = x + lu.solve(rhs - A @ x)
        resid = np.linalg.norm(A @ x - rhs)
    if resid > 1e-6 * max(bnorm, 1e-300) and resid > 1e-12:
        raise SolverError(f"direct solve residual too large: {resid:.3e} "
                          f"(|b| = {bnorm:.3e})")
    return x


def _singular_message(A, n_u, exc):
    cls = ""
    try:
        d = np.abs(A.diagonal())
        idx = int(np.argmin(d))
        if n_u is not None:
            cls = ("displacement" if idx < n_u else "multiplier")
            cls = f"; first suspect pivot at {cls} dof {idx}"
    except Exception:
        pass
    return f"singular linear system ({exc}){cls}"


@dataclass
class _ContactOperator:
    """Shared assembly context for the saddle-point system."""

    space: PrimalSpace
    dual: DualSpace
    pdata: ProjectionData
    params: AugmentedParams

    def __post_init__(self):
        free = self.space.free_dofs
        pos = -np.ones(self.space.num_dofs, dtype=np.intp)
        pos[free] = np.arange(free.size)
        self.free_pos = pos
        fpos = pos[self.pdata.face_dofs]
        self.face_free_mask = fpos >= 0
        self.face_free_pos = fpos[self.face_free_mask]

    @property
    def n_free(self) -> int:
        return self.space.free_dofs.size

    @property
    def n_lam(self) -> int:
        return self.dual.num_funcs

    def residual(self, u, lam, active, elastic_residual):
        """Stacked free residual [R_u(free); R_lam]."""
        R_u, R_lam = contact_residual(self.pdata, lam, u, self.params, active,
                                      self.space.num_dofs)
        R_u = R_u + elastic_residual
        return np.concatenate([R_u[self.space.free_dofs], R_lam])

    def tangent(self, K_ff, active):
        """Saddle matrix [[K_ff + H_uu, H_ul], [H_ul^T, H_ll]] (sparse)."""
        H_uu, H_ul, H_ll = contact_tangent(self.pdata, self.params, active)
        m = self.face_free_mask
        rows = self.face_free_pos
        Suu = sp.coo_matrix(
            (H_uu[np.ix_(m, m)].reshape(-1),
             (np.repeat(rows, rows.size), np.tile(rows, rows.size))),
            shape=(self.n_free, self.n_free))
        Sul = sp.lil_matrix((self.n_free, self.n_lam))
        Sul[rows, :] = H_ul[m, :]
        return sp.bmat([[K_ff + Suu, Sul.tocsr()],
                        [Sul.tocsr().T, sp.csr_matrix(H_ll)]], format="csc")


class _SchurSolver:
    """Saddle-point solves reusing one factorization of the elastic block.

    The stiffness restricted to free dofs may be singular without contact
    (a rigid translation), so ``K + beta P^T P`` is factored instead, with
    P selecting the contact-face free dofs; the shift is absorbed back in
    the dense face-block correction. Per call this costs two
    back-substitutions and one dense solve of face + multiplier size.
    """

    def __init__(self, K_ff, face_rows: np.ndarray):
        self.K = K_ff.tocsr()
        self.rows = np.asarray(face_rows, dtype=np.intp)
        n, m = self.K.shape[0], self.rows.size
        self.beta = float(np.abs(self.K.diagonal()).mean()) or 1.0
        shift = sp.coo_matrix((np.full(m, self.beta),
                               (self.rows, self.rows)), shape=(n, n))
        try:
            self.lu = spla.splu(sp.csc_matrix(self.K + shift))
        except RuntimeError as exc:
            raise SolverError(_singular_message(self.K, n, exc)) from exc
        # S = P (K + beta P^T P)^{-1} P^T, built in chunks of right-hand sides
        S = np.empty((m, m))
        for s in range(0, m, 64):
            cols = self.rows[s:s + 64]
            E = np.zeros((n, cols.size))
            E[cols, np.arange(cols.size)] = 1.0
            S[:, s:s + 64] = self.lu.solve(E)[self.rows]
        self.S = S

    def _scatter(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros(self.K.shape[0])
        out[self.rows] = w
        return out

    def solve(self, b1: np.ndarray, b2: np.ndarray, Auu: np.ndarray,
              Aul: np.ndarray, Hll: np.ndarray):
        """Solve [[K + P^T Auu P, P^T Aul], [Aul^T P, Hll]] [du; dl] = [b1; b2]."""
        m, k = Aul.shape
        Buu = Auu - self.beta * np.eye(m)
        t = self.lu.solve(b1)
        y0 = t[self.rows]
        A = np.block([[np.eye(m) + self.S @ Buu, self.S @ Aul],
                      [Aul.T, Hll]])
        try:
            yz = np.linalg.solve(A, np.concatenate([y0, b2]))
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular face-block system ({exc})") from exc
        y, dl = yz[:m], yz[m:]
        du = t - self.lu.solve(self._scatter(Buu @ y + Aul @ dl))
        # residual check against the unreduced saddle system
        r1 = self.K @ du + self._scatter(Auu @ du[self.rows] + Aul @ dl) - b1
        r2 = Aul.T @ du[self.rows] + Hll @ dl - b2
        resid = math_hypot(np.linalg.norm(r1), np.linalg.norm(r2))
        bnorm = math_hypot(np.linalg.norm(b1), np.linalg.norm(b2))
        if not (np.all(np.isfinite(du)) and np.all(np.isfinite(dl))):
            raise SolverError("non-finite saddle-point solution")
        if resid > 1e-6 * max(bnorm, 1e-300) and resid > 1e-12:
            raise SolverError(f"saddle solve residual too large: {resid:.3e} "
                              f"(|b| = {bnorm:.3e})")
        return du, dl


def math_hypot(a: float, b: float) -> float:
    return float(np.hypot(a, b))


def solve_linear_contact(space: PrimalSpace, dual: DualSpace,
                         material: Material, edata: ElementData,
                         load: np.ndarray, plane: RigidPlane,
                         params: AugmentedParams,
                         cfg: NewtonConfig = None,
                         stiffness: AssembledOperator = None,
                         pdata: ProjectionData = None,
                         initial_active: ActiveSet = None):
    """Small-deformation contact solve (linear elasticity).

    Returns ``(SystemState, SolveReport)``. ``stiffness``/``pdata`` may be
    passed in to reuse assemblies across solves on the same mesh.
    """
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    if stiffness is None:
        stiffness = assemble_linear(space, material, edata)
    if pdata is None:
        pdata = build_projection_data(space, dual, plane)
    op = _ContactOperator(space, dual, pdata, params)
    K = stiffness.matrix
    free = space.free_dofs
    K_ff = K[free][:, free].tocsr()
    schur = _SchurSolver(K_ff, op.face_free_pos)

    u = space.full_vector()
    lam = np.zeros(dual.num_funcs)
    active = initial_active if initial_active is not None \
        else seed_active_set(dual, pdata, plane)

    report = SolveReport()
    ref = None
    m = op.face_free_mask
    for it in range(cfg.max_iter):
        R = op.residual(u, lam, active, K @ u - load)
        rnorm = float(np.linalg.norm(R))
        report.residuals.append(rnorm)
        if ref is None:
            ref = max(rnorm, cfg.atol)
        if rnorm <= max(cfg.rtol * ref, cfg.atol):
            newset = update_active_set(lam, gap_projection(pdata, u), params)
            if newset == active:
                report.iterations = [it]
                report.active_size = active.count
                report.wall_time = time.perf_counter() - t0
                return SystemState(u=u, lam=lam, active=active), report
            active = newset
            continue
        H_uu, H_ul, H_ll = contact_tangent(pdata, params, active)
        du, dl = schur.solve(-R[:op.n_free], -R[op.n_free:],
                             H_uu[np.ix_(m, m)], H_ul[m, :], H_ll)
        u[free] += du
        lam = lam + dl
        active = update_active_set(lam, gap_projection(pdata, u), params)
    report.wall_time = time.perf_counter() - t0
    raise NonConvergenceError(
        f"active-set Newton did not converge in {cfg.max_iter} iterations "
        f"(last residual {report.residuals[-1]:.3e})", report)


def solve_nonlinear_contact(space: PrimalSpace, dual: DualSpace,
                            material: Material, edata: ElementData,
                            plane: RigidPlane, params: AugmentedParams,
                            cfg: NewtonConfig = None,
                            pdata: ProjectionData = None):
    """Large-deformation solve: Neo-Hookean + contact, ramped Dirichlet data.

    The prescribed displacement values of the space are multiplied by the
    load factor, ramped from 0 to 1 over ``cfg.load_steps`` steps; a step
    where det F turns non-positive is halved (up to ``cfg.max_cutbacks``).
    """
    cfg = cfg or NewtonConfig()
    t0 = time.perf_counter()
    if pdata is None:
        pdata = build_projection_data(space, dual, plane)
    op = _ContactOperator(space, dual, pdata, params)
    free = space.free_dofs

    u = space.full_vector(0.0)
    lam = np.zeros(dual.num_funcs)
    active = seed_active_set(dual, pdata, plane)
    report = SolveReport()

    t = 0.0
    dt0 = 1.0 / cfg.load_steps
    dt = dt0
    cuts = 0                      # consecutive failures at the current point
    while t < 1.0 - 1e-12:
        t_next = min(1.0, t + dt)
        u_try = space.apply_constraints(u, t_next)
        lam_try, active_try = lam.copy(), active
        try:
            u_try, lam_try, active_try, iters = _newton_nonlinear(
                space, dual, material, edata, op, u, u_try, lam_try,
                active_try, params, cfg, report)
        except (NonPhysicalStateError, SolverError):
            cuts += 1
            if cuts > cfg.max_cutbacks:
                report.wall_time = time.perf_counter() - t0
                raise NonConvergenceError(
                    "load stepping failed after maximum cut-backs", report)
            dt *= 0.5
            continue
        u, lam, active = u_try, lam_try, active_try
        t = t_next
        cuts = 0
        dt = min(2.0 * dt, dt0)   # recover the step size after a cut-back
        report.iterations.append(iters)
    report.active_size = active.count
    report.wall_time = time.perf_counter() - t0
    return SystemState(u=u, lam=lam, active=active, load_factor=t), report


def _newton_nonlinear(space, dual, material, edata, op, u_prev, u, lam,
                      active, params, cfg, report):
    """Newton loop for one load step.

    ``u_prev`` is the last converged (physically valid) state; ``u`` is
    ``u_prev`` with the new constraint values applied. The internal force
    at ``u`` is first linearized around ``u_prev`` — a hard constraint jump
    localized at the boundary can make det F <= 0 before the interior has
    followed, so the first step is taken with the lagged assembly.
    """
    free = space.free_dofs
    ref = None
    fint, K = assemble_neo_hookean(space, material, edata, u_prev)
    delta = u - u_prev
    lagged = bool(np.abs(delta).max() > 0)
    if lagged:
        fint = fint + K @ delta
    for it in range(cfg.max_iter):
        R = op.residual(u, lam, active, fint)
        rnorm = float(np.linalg.norm(R))
        report.residuals.append(rnorm)
        if ref is None:
            ref = max(rnorm, cfg.atol)
        if rnorm <= max(cfg.rtol * ref, cfg.atol) and not lagged:
            newset = update_active_set(lam, gap_projection(op.pdata, u), params)
            if newset == active:
                return u, lam, active, it
            active = newset
            continue
        K_ff = K[free][:, free].tocsr()
        A = op.tangent(K_ff, active)
        step = linear_solve(A, -R, n_u=op.n_free)
        # backtrack on det F <= 0: an overshooting full step is damped
        # rather than failing the whole load step
        alpha = 1.0
        for _ in range(10):
            u_new = u.copy()
            u_new[free] += alpha * step[:op.n_free]
            try:
                fint, K = assemble_neo_hookean(space, material, edata, u_new)
            except NonPhysicalStateError:
                alpha *= 0.5
                continue
            break
        else:
            raise SolverError("Newton step damping failed (det F <= 0)")
        lagged = False
        u = u_new
        lam = lam + alpha * step[op.n_free:]
        active = update_active_set(lam, gap_projection(op.pdata, u), params)
    raise SolverError(f"Newton did not converge within a load step "
                      f"(last residual {report.residuals[-1]:.3e})")
