"""Command-line entry point: run a benchmark scenario and emit result files.

Configuration is plain-text ``key=value``; command-line flags override file
values. Outputs go to the chosen directory: ``convergence.csv`` (error table
with a fitted-rate footer), ``pressure_profile.csv`` (contact pressure at
multiplier control points), a ``config.resolved`` echo of the effective
configuration, and optionally VTK field snapshots.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace

SCENARIO_NAMES = ("hertz2d_p003", "hertz2d_p01", "hertz3d_p5e-4",
                  "hertz2d_large_uy04")


class ConfigError(ValueError):
    """Invalid or malformed run configuration."""


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "hertz2d_p003"
    degree: int = 2
    levels: int = 3
    r0: float = 100.0
    out: str = "."
    threads: int = 0          # 0: leave BLAS threading untouched
    vtk: bool = False
    rtol: float = 1e-10
    max_iter: int = 50
    load_steps: int = 10

    def validate(self) -> "RunConfig":
        if self.scenario not in SCENARIO_NAMES:
            raise ConfigError(f"scenario: unknown scenario {self.scenario!r} "
                              f"(choose from {', '.join(SCENARIO_NAMES)})")
        if self.degree not in (2, 3):
            raise ConfigError(f"degree: must be 2 or 3, got {self.degree}")
        if self.levels < 1:
            raise ConfigError(f"levels: must be >= 1, got {self.levels}")
        if not self.r0 > 0:
            raise ConfigError(f"r0: must be positive, got {self.r0}")
        if self.threads < 0:
            raise ConfigError(f"threads: must be >= 0, got {self.threads}")
        if not self.rtol > 0:
            raise ConfigError(f"rtol: must be positive, got {self.rtol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter: must be >= 1, got {self.max_iter}")
        if self.load_steps < 1:
            raise ConfigError(f"load_steps: must be >= 1, got {self.load_steps}")
        return self


_PARSERS = {int: int, float: float, str: str,
            bool: lambda s: s.strip().lower() in ("1", "true", "yes", "on")}


def parse_config_file(path: str) -> dict:
    """Read ``key=value`` lines; '#' starts a comment, blank lines ignored."""
    values = {}
    field_types = {f.name: f.type for f in fields(RunConfig)}
    type_map = {"int": int, "float": float, "str": str, "bool": bool}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in field_types:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        ftype = field_types[key]
        caster = _PARSERS[type_map.get(ftype, ftype) if isinstance(ftype, str) else ftype]
        try:
            values[key] = caster(val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{ln}: {key}: {exc}") from exc
    return values


def emit_config(cfg: RunConfig, path: str, extra_comments=()):
    """Write the resolved configuration; parse_config_file round-trips it."""
    with open(path, "w") as fh:
        for line in extra_comments:
            fh.write(f"# {line}\n")
        for f in fields(cfg):
            fh.write(f"{f.name} = {getattr(cfg, f.name)!r}\n".replace("'", ""))


def resolve_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    overrides = {"scenario": args.scenario, "degree": args.p,
                 "levels": args.levels, "r0": args.r0, "out": args.out,
                 "threads": args.threads}
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    if args.vtk:
        values["vtk"] = True
    return RunConfig(**values).validate()


# ---------------------------------------------------------------------------
# output files

def _fmt(v) -> str:
    import math
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.12e}"


def write_convergence_csv(table, path: str):
    header = "level,h,l2_disp,h1_disp,l2_mult_analytical,l2_mult_refined"
    lines = [header]
    for lv, rep in enumerate(table.reports):
        lines.append(",".join([str(lv), _fmt(rep.h), _fmt(rep.l2_disp),
                               _fmt(rep.h1_disp), _fmt(rep.l2_mult_ana),
                               _fmt(rep.l2_mult_ref)]))
    if table.reports:
        rates = table.rates
        lines.append(",".join(["rate", "", _fmt(rates.get("l2_disp")),
                               _fmt(rates.get("h1_disp")),
                               _fmt(rates.get("l2_mult_ana")),
                               _fmt(rates.get("l2_mult_ref"))]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_profile_csv(profile, path: str):
    lines = ["r_over_a,p_over_p0_numeric,p_over_p0_analytic"]
    for row in profile:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vtk(sol, material, path: str):
    """Legacy ASCII VTK snapshot of the finest solution.

    The patch is sampled on a per-element lattice; cells are bilinear/
    trilinear subdivisions carrying displacement vectors as point data and
    the Frobenius norm of the stress as cell data (stress is sampled at
    cell centres, which stay clear of degenerate parameterization corners).
    """
    import numpy as np
    from .elasticity import eval_stress

    patch = sol.space.patch
    nd = patch.ndim
    zs = [kv.breakpoints for kv in patch.basis.kvs]
    axes = []
    per_elem = max(2, sol.space.degree + 1)
    for z in zs:
        samples = [np.linspace(z[i], z[i + 1], per_elem)[:-1]
                   for i in range(len(z) - 1)]
        axes.append(np.concatenate(samples + [[z[-1]]]))
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1)
    res = patch.evaluate(pts, nders=0)
    ue = sol.state.u.reshape(-1, nd)[res["conn"]]
    disp = np.einsum("na,nac->nc", res["R"], ue)
    x = res["x"] + disp

    centers = [0.5 * (a[:-1] + a[1:]) for a in axes]
    cgrids = np.meshgrid(*centers, indexing="ij")
    # first-direction-fastest, matching the cell ordering below
    cpts = np.stack([g.reshape(-1, order="F") for g in cgrids], axis=1)
    sigma = eval_stress(sol.space, material, sol.state.u, cpts)
    smag = np.sqrt((sigma ** 2).sum(axis=(1, 2)))

    dims = [len(a) for a in axes]
    npts = pts.shape[0]

    def corner(idx):
        flat = 0
        for d in reversed(range(nd)):
            flat = flat * dims[d] + idx[d]
        return flat

    cells = []
    ranges = [range(n - 1) for n in dims]
    import itertools
    for idx in itertools.product(*reversed(ranges)):
        idx = tuple(reversed(idx))
        if nd == 2:
            (i, j) = idx
            cells.append([corner((i, j)), corner((i + 1, j)),
                          corner((i + 1, j + 1)), corner((i, j + 1))])
        else:
            (i, j, k) = idx
            cells.append([corner((i, j, k)), corner((i + 1, j, k)),
                          corner((i + 1, j + 1, k)), corner((i, j + 1, k)),
                          corner((i, j, k + 1)), corner((i + 1, j, k + 1)),
                          corner((i + 1, j + 1, k + 1)), corner((i, j + 1, k + 1))])
    ctype = 9 if nd == 2 else 12
    with open(path, "w", newline="\n") as fh:
        fh.write("# vtk DataFile Version 3.0\ncontact solution\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {npts} double\n")
        for p in x:
            row = list(p) + [0.0] * (3 - nd)
            fh.write(" ".join(f"{v:.9e}" for v in row) + "\n")
        fh.write(f"CELLS {len(cells)} {len(cells) * (2 ** nd + 1)}\n")
        for c in cells:
            fh.write(f"{len(c)} " + " ".join(map(str, c)) + "\n")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        fh.write("\n".join([str(ctype)] * len(cells)) + "\n")
        fh.write(f"POINT_DATA {npts}\nVECTORS displacement double\n")
        for dv in disp:
            row = list(dv) + [0.0] * (3 - nd)
            fh.write(" ".join(f"{v:.9e}" for v in row) + "\n")
        fh.write(f"CELL_DATA {len(cells)}\n")
        fh.write("SCALARS stress_magnitude double 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(f"{v:.9e}" for v in smag) + "\n")


# ---------------------------------------------------------------------------
# driver

def _set_thread_env(n: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def run(cfg: RunConfig) -> int:
    if cfg.threads:
        _set_thread_env(cfg.threads)
    from .bench import get_scenario, hertz_solution, run_benchmark
    from .elasticity import Material
    from .solver import NewtonConfig, NonConvergenceError, SolverError

    scn = get_scenario(cfg.scenario)
    newton = NewtonConfig(rtol=cfg.rtol, max_iter=cfg.max_iter,
                          load_steps=cfg.load_steps)
    ref_extra = 2 if scn.dim == 2 else 1
    try:
        result = run_benchmark(scn, levels=cfg.levels, p=cfg.degree,
                               r0=cfg.r0, ref_extra_levels=ref_extra,
                               cfg=newton)
    except (NonConvergenceError, SolverError) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return 2

    os.makedirs(cfg.out, exist_ok=True)
    write_convergence_csv(result.table, os.path.join(cfg.out, "convergence.csv"))
    write_profile_csv(result.profile, os.path.join(cfg.out, "pressure_profile.csv"))
    comments = []
    if scn.dim == 3 and scn.model == "linear":
        hz = scn.hertz
        a_printed = (3 * scn.radius ** 3 * scn.pressure
                     * (1 - scn.poisson ** 2) / (4 * scn.young)) ** (1.0 / 3.0)
        comments.append(f"3D contact radius, load as total force: a = {hz.a:.6g}")
        comments.append(f"3D contact radius, load as pressure:    a = {a_printed:.6g}")
    emit_config(replace(cfg), os.path.join(cfg.out, "config.resolved"),
                extra_comments=comments)
    if cfg.vtk:
        material = Material(scn.model, scn.young, scn.poisson)
        write_vtk(result.levels[-1], material,
                  os.path.join(cfg.out, "solution.vtk"))
    tbl = result.table
    for lv, rep in enumerate(tbl.reports):
        print(f"level {lv}: h={rep.h:.4f} l2={rep.l2_disp:.3e} "
              f"h1={rep.h1_disp:.3e} mult_ana={rep.l2_mult_ana:.3e} "
              f"mult_ref={rep.l2_mult_ref:.3e}")
    print("rates: " + " ".join(f"{k}={v:.3f}" for k, v in tbl.rates.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="iga-contact",
        description="Isogeometric contact benchmarks (rigid plane, "
                    "augmented Lagrangian).")
    sub = ap.add_subparsers(dest="command", required=True)
    rp = sub.add_parser("run", help="run a benchmark scenario")
    rp.add_argument("--config", help="key=value configuration file")
    rp.add_argument("--scenario", choices=SCENARIO_NAMES,
                    help="scenario name (default hertz2d_p003)")
    rp.add_argument("--p", type=int, choices=(2, 3), dest="p",
                    help="NURBS degree (default 2)")
    rp.add_argument("--levels", type=int, help="refinement levels (default 3)")
    rp.add_argument("--r0", type=float,
                    help="augmentation parameter r0, r = r0/h (default 100)")
    rp.add_argument("--out", help="output directory (default '.')")
    rp.add_argument("--threads", type=int,
                    help="BLAS/OpenMP thread count (default: leave untouched)")
    rp.add_argument("--vtk", action="store_true",
                    help="write a VTK snapshot of the finest solution")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
