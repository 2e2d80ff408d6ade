"""Hertz benchmarks: analytical solutions, error norms and convergence studies.

Each scenario solves a hierarchy of nested graded meshes plus a reference
mesh two extra refinement levels finer (so 4 h_ref <= h for every reported
mesh), and reports displacement L2 / H1-seminorm errors and multiplier L2
errors against both the refined reference and, where available, the Hertz
pressure distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contact import AugmentedParams, RigidPlane
from .elasticity import Material, assemble_neumann_pressure
from .geometry import (
    BoundaryFace,
    NurbsPatch,
    _element_diameters,
    boundary_frame,
    element_data,
    gauss_rule,
    graded_knots,
    make_octant_sphere,
    make_quarter_disc,
)
from .solver import (
    NewtonConfig,
    SolveReport,
    SystemState,
    solve_linear_contact,
    solve_nonlinear_contact,
)
from .spaces import (
    DualSpace,
    PrimalSpace,
    build_dual,
    build_primal,
    dual_basis_values,
    face_quadrature,
)
from .splines import KnotVector, TensorBasis

SCENARIOS = ("hertz2d_p003", "hertz2d_p01", "hertz3d_p5e-4", "hertz2d_large_uy04")


class BenchmarkError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# analytical solution

@dataclass(frozen=True)
class HertzAnalytic:
    """Hertz contact half-width/radius and pressure distribution.

    2D: infinite cylinder on a plane under line pressure P applied on the
    flat top; 3D: hemisphere under pressure P on the top face, total force
    F = pi R^2 P.
    """

    dim: int
    radius: float
    young: float
    poisson: float
    pressure: float
    a: float
    p0: float

    def p(self, r):
        r = np.asarray(r, dtype=float)
        val = 1.0 - (r / self.a) ** 2
        return self.p0 * np.sqrt(np.clip(val, 0.0, None))


def hertz_solution(dim: int, R: float, E: float, nu: float,
                   P: float) -> HertzAnalytic:
    if dim == 2:
        a = math.sqrt(8 * R * R * P * (1 - nu ** 2) / (math.pi * E))
        p0 = 4 * R * P / (math.pi * a)
    elif dim == 3:
        # load interpreted as the total force F = pi R^2 P
        F = math.pi * R * R * P
        a = (3 * F * R * (1 - nu ** 2) / (4 * E)) ** (1.0 / 3.0)
        p0 = 3 * F / (2 * math.pi * a * a)
    else:
        raise BenchmarkError("dim must be 2 or 3")
    return HertzAnalytic(dim=dim, radius=R, young=E, poisson=nu, pressure=P,
                         a=a, p0=p0)


# ---------------------------------------------------------------------------
# error norms and rates

@dataclass
class ErrorReport:
    h: float
    l2_disp: float
    h1_disp: float
    l2_mult_ref: float
    l2_mult_ana: float = float("nan")


@dataclass
class ConvergenceTable:
    reports: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)

    COLUMNS = ("l2_disp", "h1_disp", "l2_mult_ref", "l2_mult_ana")

    def fit_rates(self):
        hs = [rep.h for rep in self.reports]
        for col in self.COLUMNS:
            es = [getattr(rep, col) for rep in self.reports]
            try:
                self.rates[col] = fit_rate(list(zip(hs, es)))
            except (BenchmarkError, ValueError):
                self.rates[col] = float("nan")
        return self.rates


def fit_rate(pairs) -> float:
    """Least-squares slope of log(e) against log(h)."""
    pts = [(h, e) for h, e in pairs
           if e > 0 and np.isfinite(e) and h > 0]
    if len(pts) < 2:
        raise BenchmarkError("need at least two positive (h, e) pairs")
    hs, es = zip(*pts)
    return float(np.polyfit(np.log(hs), np.log(es), 1)[0])


def _displacement_field(space: PrimalSpace, u: np.ndarray, pts: np.ndarray):
    """Values and physical gradients of the displacement at parametric points."""
    res = space.patch.evaluate(np.atleast_2d(pts), nders=1)
    nd = space.ncomp
    ue = u.reshape(-1, nd)[res["conn"]]
    val = np.einsum("na,nac->nc", res["R"], ue)
    dphys = np.einsum("nad,ndk->nak", res["dR"], np.linalg.inv(res["jac"]))
    grad = np.einsum("nak,nac->nck", dphys, ue)
    return val, grad


def error_norms(space_c: PrimalSpace, u_c: np.ndarray,
                space_r: PrimalSpace, u_r: np.ndarray,
                dual_c: DualSpace, lam_c: np.ndarray,
                dual_r: DualSpace, lam_r: np.ndarray,
                hertz: HertzAnalytic = None,
                contact_pole=None) -> ErrorReport:
    """Errors of a coarse solve against a nested refined reference.

    Both spaces must share the patch parameterization (nested refinement),
    so fields are compared at identical parametric points. Quadrature uses
    p + 3 Gauss points per direction on the coarse mesh.
    """
    patch_c, patch_r = space_c.patch, space_r.patch
    for kc, kr in zip(patch_c.basis.kvs, patch_r.basis.kvs):
        if not set(np.round(kc.breakpoints, 12)) <= set(np.round(kr.breakpoints, 12)):
            raise BenchmarkError("reference mesh is not nested in the coarse mesh")
    n_q = space_c.degree + 3
    quad = gauss_rule([kv.breakpoints for kv in patch_c.basis.kvs], n_q)
    ed = element_data(patch_c, quad)
    pts = _quad_points(patch_c.basis, quad)
    w = ed.wdet.reshape(-1)
    vc, gc = _displacement_field(space_c, u_c, pts)
    vr, gr = _displacement_field(space_r, u_r, pts)
    l2 = math.sqrt(float(w @ ((vc - vr) ** 2).sum(axis=1)))
    h1 = math.sqrt(float(w @ ((gc - gr) ** 2).sum(axis=(1, 2))))

    fpts, fw, _, _ = face_quadrature(dual_c.face, n_q)
    lc = dual_basis_values(dual_c, fpts) @ lam_c
    lr = dual_basis_values(dual_r, fpts) @ lam_r
    l2_mult_ref = math.sqrt(float(fw @ (lc - lr) ** 2))
    l2_mult_ana = float("nan")
    if hertz is not None:
        l2_mult_ana = multiplier_analytic_error(space_c, u_c, dual_c, lam_c,
                                                hertz, contact_pole)
    h = float(_element_diameters(patch_c,
                                 patch_c.basis.element_multi_indices()).max())
    return ErrorReport(h=h, l2_disp=l2, h1_disp=h1,
                       l2_mult_ref=l2_mult_ref, l2_mult_ana=l2_mult_ana)


def _quad_points(basis: TensorBasis, quad) -> np.ndarray:
    """Flat parametric points ordered like the element-data quadrature."""
    nd = quad.ndim
    elems = basis.element_multi_indices()
    coord = [quad.points[d][elems[:, d]] for d in range(nd)]   # (n_el, ng_d)

    def combine(arrs):
        out = None
        for a in arrs:
            out = a if out is None else \
                (out[:, :, None] * a[:, None, :]).reshape(a.shape[0], -1)
        return out

    cols = []
    for d in range(nd):
        cols.append(combine([coord[dd] if dd == d else np.ones_like(coord[dd])
                             for dd in range(nd)]))
    return np.stack(cols, axis=-1).reshape(-1, nd)


def multiplier_analytic_error(space: PrimalSpace, u: np.ndarray,
                              dual: DualSpace, lam: np.ndarray,
                              hertz: HertzAnalytic,
                              contact_pole=None) -> float:
    """L2 distance of the multiplier field from the Hertz pressure.

    The analytic pressure is evaluated at the deformed contact points
    x + u(x); the finite-deformation shift of the contact zone is what
    makes this error stagnate under refinement while the vs-refined error
    keeps decreasing.
    """
    n_q = space.degree + 3
    fpts, fw, fx, _ = face_quadrature(dual.face, n_q)
    lam_h = dual_basis_values(dual, fpts) @ lam
    x_def = fx + _face_displacement(space, dual.face, fpts, u)
    lam_ana = -hertz.p(_contact_radius(x_def, contact_pole))
    return math.sqrt(float(fw @ (lam_h - lam_ana) ** 2))


def _face_displacement(space: PrimalSpace, face, pts: np.ndarray,
                       u: np.ndarray) -> np.ndarray:
    """Displacement on a boundary face at face-parametric points."""
    fp = face.face_patch()
    res = fp.evaluate(np.atleast_2d(pts), nders=0)
    ue = u.reshape(-1, space.ncomp)[face.volume_indices()][res["conn"]]
    return np.einsum("na,nac->nc", res["R"], ue)


def _contact_radius(x: np.ndarray, pole) -> np.ndarray:
    """In-plane distance from the contact pole axis."""
    x = np.atleast_2d(x)
    if x.shape[1] == 2:
        return np.abs(x[:, 0])
    return np.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2)


# ---------------------------------------------------------------------------
# scenario setup

@dataclass(frozen=True)
class Scenario:
    name: str
    dim: int
    pressure: float = 0.0
    prescribed_uy: float = 0.0
    model: str = "linear"
    radius: float = 1.0
    young: float = 1.0
    poisson: float = 0.3
    grading_fraction_elems: float = 0.8
    grading_fraction_length: float = 0.1
    base_elems: int = 8

    @property
    def hertz(self) -> HertzAnalytic:
        if self.model != "linear":
            return None
        return hertz_solution(self.dim, self.radius, self.young, self.poisson,
                              self.pressure)


def get_scenario(name: str) -> Scenario:
    if name == "hertz2d_p003":
        return Scenario(name=name, dim=2, pressure=0.003)
    if name == "hertz2d_p01":
        return Scenario(name=name, dim=2, pressure=0.01)
    if name == "hertz3d_p5e-4":
        return Scenario(name=name, dim=3, pressure=5e-4, base_elems=4,
                        grading_fraction_elems=0.75)
    if name == "hertz2d_large_uy04":
        return Scenario(name=name, dim=2, prescribed_uy=-0.4,
                        model="neo-hookean", base_elems=4)
    raise BenchmarkError(f"unknown scenario {name!r}")


def _graded_tensor(scn: Scenario, p: int) -> TensorBasis:
    """Base knot vectors: radial direction graded toward the contact
    surface. In 2D the angular direction stays uniform; in 3D the meridian
    direction is also graded toward the contact pole (the contact circle
    r < a is tiny, and the qualitative pressure check needs multiplier
    control points inside it), with a uniform azimuth."""
    n = scn.base_elems
    fe, fl = scn.grading_fraction_elems, scn.grading_fraction_length
    z_rad = graded_knots(n, fe, fl, "end")       # toward the surface
    if scn.dim == 2:
        zs = [z_rad, np.linspace(0.0, 1.0, n + 1)]
    else:
        z_mer = graded_knots(n, fe, fl, "end")   # toward the contact pole
        zs = [z_rad, z_mer, np.linspace(0.0, 1.0, n + 1)]
    kvs = [KnotVector(p, np.sort(np.concatenate([[0.0] * p, z, [1.0] * p])))
           for z in zs]
    return TensorBasis(tuple(kvs))


@dataclass
class LevelSolution:
    space: PrimalSpace
    dual: DualSpace
    state: SystemState
    report: SolveReport
    h: float
    h_contact: float


def _setup_level(scn: Scenario, p: int, level: int):
    """Patch, spaces and contact data for one refinement level."""
    if scn.dim == 2:
        base = make_quarter_disc(scn.radius, p)
    else:
        base = make_octant_sphere(scn.radius, p)
    target = _graded_tensor(scn, p).refine_uniform(level)
    patch = base.with_knots(target)
    if scn.dim == 2:
        # faces: (0,1) contact arc, (1,0) symmetry x=0, (1,1) top y=0
        bcs = [(1, 0, (0,), 0.0)]
        if scn.model == "neo-hookean":
            bcs.append((1, 1, (1,), scn.prescribed_uy))
        pressure_face = BoundaryFace(patch, 1, 1)
        normal = np.array([0.0, 1.0])
    else:
        # faces: (0,1) contact sphere, (1,0) top z=0, (2,0) y=0, (2,1) x=0
        bcs = [(2, 0, (1,), 0.0), (2, 1, (0,), 0.0)]
        pressure_face = BoundaryFace(patch, 1, 0)
        normal = np.array([0.0, 0.0, 1.0])
    space = build_primal(patch, bcs)
    cface = BoundaryFace(patch, 0, 1)
    dual = build_dual(cface)
    plane = RigidPlane(normal, -scn.radius)
    elems = patch.basis.element_multi_indices()
    h = float(_element_diameters(patch, elems).max())
    fpatch = cface.face_patch()
    h_contact = float(_element_diameters(
        fpatch, fpatch.basis.element_multi_indices()).max())
    return space, dual, plane, pressure_face, h, h_contact


def solve_level(scn: Scenario, p: int, level: int, r0: float,
                cfg: NewtonConfig = None) -> LevelSolution:
    space, dual, plane, pressure_face, h, h_contact = _setup_level(scn, p, level)
    quad = gauss_rule([kv.breakpoints for kv in space.patch.basis.kvs], p + 1)
    ed = element_data(space.patch, quad)
    material = Material(scn.model, scn.young, scn.poisson)
    params = AugmentedParams(r0=r0, h_contact=h_contact)
    if scn.model == "linear":
        load = assemble_neumann_pressure(space, pressure_face, scn.pressure)
        state, report = solve_linear_contact(space, dual, material, ed, load,
                                             plane, params, cfg)
    else:
        state, report = solve_nonlinear_contact(space, dual, material, ed,
                                                plane, params, cfg)
    return LevelSolution(space=space, dual=dual, state=state, report=report,
                         h=h, h_contact=h_contact)


@dataclass
class BenchmarkResult:
    scenario: Scenario
    degree: int
    r0: float
    table: ConvergenceTable
    profile: np.ndarray       # columns: r_over_a, p_num/p0, p_ana/p0
    levels: list              # LevelSolution per reported level
    reference: LevelSolution


def pressure_profile(sol: LevelSolution, hertz: HertzAnalytic,
                     scale: float = None) -> np.ndarray:
    """Multiplier control-point pressures along r/a.

    Columns: r/a, computed p/p0, analytical p/p0 (NaN analytical columns
    when no Hertz solution applies; ``scale`` overrides (a, p0)).
    """
    gv = sol.dual.greville_points()
    x, _, _ = boundary_frame(sol.dual.face, gv)
    x = x + _face_displacement(sol.space, sol.dual.face, gv, sol.state.u)
    r = _contact_radius(x, None)
    p_num = -sol.state.lam
    if hertz is not None:
        cols = np.column_stack([r / hertz.a, p_num / hertz.p0,
                                hertz.p(r) / hertz.p0])
    else:
        pk = scale if scale else max(p_num.max(), 1.0)
        cols = np.column_stack([r, p_num / pk, np.full_like(r, np.nan)])
    order = np.argsort(cols[:, 0])
    return cols[order]


def run_benchmark(scenario, levels: int = 3, p: int = 2, r0: float = 100.0,
                  ref_extra_levels: int = 2,
                  cfg: NewtonConfig = None) -> BenchmarkResult:
    """Solve a scenario on nested graded meshes and fit convergence rates.

    ``levels`` reported meshes (base, base/2, ...) plus a reference
    ``ref_extra_levels`` further refinements beyond the finest (the
    default 2 gives 4 h_ref <= h for every reported level).
    """
    scn = scenario if isinstance(scenario, Scenario) else get_scenario(scenario)
    if p not in (2, 3):
        raise BenchmarkError("degree must be 2 or 3")
    hertz = scn.hertz
    sols = [solve_level(scn, p, lv, r0, cfg) for lv in range(levels)]
    ref = solve_level(scn, p, levels - 1 + ref_extra_levels, r0, cfg)
    table = ConvergenceTable()
    for sol in sols:
        rep = error_norms(sol.space, sol.state.u, ref.space, ref.state.u,
                          sol.dual, sol.state.lam, ref.dual, ref.state.lam,
                          hertz=hertz)
        table.reports.append(rep)
    table.fit_rates()
    profile = pressure_profile(sols[-1], hertz)
    return BenchmarkResult(scenario=scn, degree=p, r0=r0, table=table,
                           profile=profile, levels=sols, reference=ref)
