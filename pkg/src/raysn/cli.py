"""Command-line front end: ``raysn quad-table | run | verify | sweep``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .analysis import (extract_cut, lattice_cut_discrepancy, line_source_cut_discrepancy,
                       log_density, ray_metric, total_mass)
from .problems import ConfigError, make_problem, read_config
from .quadrature import (build_octahedral_quadrature, integration_error_table,
                         octahedral_point_count, write_quadrature_csv)
from .solver import SCHEDULES, SolverAbort, SolverConfig, format_manifest, run_rsn
from .verify import format_results, run_checks

log = logging.getLogger("raysn")


@dataclass
class RunConfig:
    problem: str = "line_source"
    quad: str = "octahedral"
    order_n: int = 6
    delta: float = 8.0
    schedule: str = "random_each_step"
    spatial_order: int = 2
    cfl: float = 0.5
    seed: int = 0
    conserve: bool = False
    angle_scaling: str = "n_q"
    nx: int | None = None
    ny: int | None = None
    t_end: float | None = None
    out: str = "raysn-out"
    snapshots: list[float] = field(default_factory=list)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(quadrature=self.quad, order=self.order_n, spatial_order=self.spatial_order,
                            cfl=self.cfl, delta=self.delta, schedule=self.schedule,
                            conserve_mass=self.conserve, seed=self.seed,
                            angle_scaling=self.angle_scaling)


def _coerce(name: str, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if name == "snapshots":
        return [float(t) for t in raw.replace(",", " ").split()]
    if name == "conserve":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def load_run_config(path) -> RunConfig:
    """RunConfig from ``run.<field> = value`` lines of a config file. A file
    that also defines ``mesh.*`` keys is used as the problem definition."""
    cfg = read_config(path)
    rc = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    for key, value in cfg.items():
        if key.startswith("run."):
            name = key[4:].replace("-", "_")
            if name not in names:
                raise ConfigError(f"unknown run setting {key!r}")
            setattr(rc, name, _coerce(name, value))
    if any(k.startswith("mesh.") for k in cfg):
        rc.problem = str(path)
    return rc


# -- quad-table ---------------------------------------------------------------

def cmd_quad_table(max_n: int = 64, csv_order: int | None = None, out: str | None = None,
                   stream=None) -> int:
    stream = stream or sys.stdout
    orders = [n for n in (2, 4, 8, 16, 32, 64) if n <= max_n]
    rows = integration_error_table(orders)
    stream.write(f"{'N':>3} {'N_q':>6} {'error g':>14} {'ratio':>9} {'error h':>14} {'ratio':>9}\n")
    for r in rows:
        stream.write(f"{r.order:>3} {r.n_points:>6} {r.g_error:>14.6g} {r.g_ratio:>9.6g} "
                     f"{r.h_error:>14.6g} {r.h_ratio:>9.6g}\n")
    if csv_order is not None:
        quad = build_octahedral_quadrature(csv_order)
        if out:
            write_quadrature_csv(quad, out)
        else:
            writer = csv.writer(stream)
            writer.writerow(["index", "x", "y", "z", "weight"])
            for q, (p, w) in enumerate(zip(quad.points, quad.weights)):
                writer.writerow([q, *(repr(float(c)) for c in p), repr(float(w))])
    return 0 if all(r.n_points == octahedral_point_count(r.order) for r in rows) else 1


# -- run ----------------------------------------------------------------------

def _write_grid(path: Path, mesh, values, label: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", label])
        for i, x in enumerate(mesh.x_centers):
            for j, y in enumerate(mesh.y_centers):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(values[i, j]))])


def _write_cut(path: Path, cut):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "r", "i", "j", "rho"])
        for pos, r, (i, j), v in zip(cut.position, cut.radius, cut.cells, cut.values):
            writer.writerow([repr(float(pos)), repr(float(r)), int(i), int(j), repr(float(v))])


def _write_manifest(path: Path, manifest: dict):
    path.write_text(format_manifest(manifest))


def execute_run(rc: RunConfig):
    """Solve the configured problem; returns (result, metrics)."""
    problem = make_problem(rc.problem, rc.nx, rc.ny, rc.t_end)
    result = run_rsn(rc.solver_config(), problem, snapshot_times=rc.snapshots)
    rho = result.density
    metrics = {"mass": total_mass(rho, problem.mesh), "min_density": float(rho.min())}
    if problem.name == "line_source":
        metrics["ray_metric"] = ray_metric(rho, problem.mesh)
        metrics["cut_discrepancy"] = line_source_cut_discrepancy(rho, problem.mesh)
    elif problem.name == "lattice":
        metrics["cut_discrepancy"] = lattice_cut_discrepancy(rho, problem.mesh)
    return result, metrics


def cmd_run(rc: RunConfig) -> int:
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def target(name):
        path = out / name
        written.append(path)
        return path

    try:
        result, metrics = execute_run(rc)
        mesh, rho = result.problem.mesh, result.density
        _write_grid(target("density.csv"), mesh, rho, "rho")
        if result.problem.name == "lattice":
            _write_grid(target("log10_density.csv"), mesh, log_density(rho), "log10_rho")
            cuts = {"cut_x1": ("vertical", 1.0), "cut_y1": ("horizontal", 1.0)}
        else:
            cuts = {"cut_horizontal": ("horizontal", None), "cut_diagonal": ("diagonal", None)}
        for name, (kind, at) in cuts.items():
            _write_cut(target(f"{name}.csv"), extract_cut(rho, mesh, kind, at))
        for t, snap in sorted(result.snapshots.items()):
            _write_grid(target(f"density_t{t:g}.csv"), mesh, snap, "rho")
        manifest = {**result.manifest, **{f"metric.{k}": v for k, v in metrics.items()},
                    **{f"run.{k}": v for k, v in asdict(rc).items()}}
        _write_manifest(target("manifest.txt"), manifest)
    except SolverAbort as exc:
        for path in written:
            path.unlink(missing_ok=True)
        (out / "abort.txt").write_text(format_manifest({**exc.manifest, "error": str(exc)}))
        print(f"raysn: solver aborted: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    print(f"wrote {len(written)} files to {out}")
    for k, v in metrics.items():
        print(f"{k} = {v:.6g}")
    return 0


# -- verify -------------------------------------------------------------------

def cmd_verify(seed: int = 0, corrupt: bool = False) -> int:
    results = run_checks(seed=seed, corrupt=corrupt)
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


# -- sweep --------------------------------------------------------------------

SWEEP_COLUMNS = ["method", "quadrature", "order", "n_q", "delta", "ray_metric",
                 "cut_discrepancy", "wall_time", "rotation_share"]


def _sweep_row(rc: RunConfig) -> dict:
    tic = time.perf_counter()
    result, metrics = execute_run(rc)
    wall = time.perf_counter() - tic
    return {
        "method": "rsn" if rc.quad == "octahedral" and rc.delta > 0 else "sn",
        "quadrature": rc.quad,
        "order": rc.order_n,
        "n_q": result.quadrature.n_points,
        "delta": rc.delta,
        "ray_metric": metrics.get("ray_metric", float("nan")),
        "cut_discrepancy": metrics.get("cut_discrepancy", float("nan")),
        "wall_time": wall,
        "rotation_share": result.manifest["rotation_share"],
    }


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("RAYSN_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def cmd_sweep(base: RunConfig, deltas, orders, product_orders=(), out: str | None = None,
              stream=None) -> list[dict]:
    jobs = [replace(base, quad="octahedral", order_n=n, delta=d) for d in deltas for n in orders]
    jobs += [replace(base, quad="product", order_n=n, delta=0.0) for n in product_orders]
    workers = worker_count(len(jobs))
    if workers == 1:
        rows = [_sweep_row(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    fh = open(out, "w", newline="") if out else (stream or sys.stdout)
    try:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if out:
            fh.close()
    return rows


# -- argument parsing -----------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="run/problem config file (key = value)")
    p.add_argument("--problem", help="line_source, lattice, or a problem config path")
    p.add_argument("--quad", choices=["octahedral", "product"])
    p.add_argument("--order-n", type=int, help="quadrature order N")
    p.add_argument("--delta", type=float, help="rotation strength")
    p.add_argument("--schedule", choices=SCHEDULES)
    p.add_argument("--spatial-order", type=int, choices=[1, 2])
    p.add_argument("--cfl", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--conserve", action="store_true", default=None, help="rescale to conserve mass per cell")
    p.add_argument("--angle-scaling", choices=["n_q", "order", "none"])
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--t-end", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--snapshots", type=_floats, help="comma-separated output times")


def _run_config(args) -> RunConfig:
    rc = load_run_config(args.config) if args.config else RunConfig()
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(rc, f.name, value)
    return rc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raysn", description="Rotated discrete-ordinates transport")
    parser.add_argument("--version", action="version", version=f"raysn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quad-table", help="integration errors of the octahedral quadrature")
    q.add_argument("--max-n", type=int, default=64, choices=[2, 4, 8, 16, 32, 64])
    q.add_argument("--csv", type=int, metavar="N", help="also emit the order-N quadrature as CSV")
    q.add_argument("--out", help="CSV destination (default: stdout)")

    r = sub.add_parser("run", help="run one simulation and write artifacts")
    _add_run_flags(r)

    v = sub.add_parser("verify", help="run the property checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-corruption", action="store_true", help=argparse.SUPPRESS)

    s = sub.add_parser("sweep", help="compare ray metrics over rotation strengths and orders")
    _add_run_flags(s)
    s.add_argument("--deltas", type=_floats, default=[0.0, 4.0, 8.0])
    s.add_argument("--orders", type=_ints, default=[4, 6, 8, 10], help="octahedral orders N")
    s.add_argument("--product-orders", type=_ints, default=[], help="product S_N orders to include")
    s.add_argument("--csv", dest="csv_out", help="CSV destination (default: stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "quad-table":
        return cmd_quad_table(args.max_n, args.csv, args.out)
    if args.command == "verify":
        return cmd_verify(args.seed, args.inject_corruption)
    rc = _run_config(args)
    if args.command == "run":
        return cmd_run(rc)
    cmd_sweep(rc, args.deltas, args.orders, args.product_orders, args.csv_out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
