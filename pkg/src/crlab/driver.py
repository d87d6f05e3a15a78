"""Uniform and adaptive refinement loops and their file outputs."""
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path

import numpy as np

from .estimator import VARIANTS, estimate
from .mesh import refine, unit_square_initial, uniform_refine
from .problem import benchmark
from .solver import DEFAULT_TOL, SolverError, solve_problem

__all__ = [
    "RunConfig",
    "IterationRecord",
    "RunResult",
    "dorfler_mark",
    "run",
    "write_csv",
    "write_vtk",
    "write_svg",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

CSV_HEADER = "k,n_elements,err,eoc,est,eff,ncf,eta,osc"
EMIT_CHOICES = ("csv", "vtk", "svg")


@dataclass
class RunConfig:
    lam: float = 2.0 / 3.0
    mode: str = "uniform"
    estimator: str = "crtilde"
    theta: float = 0.7
    C1: float = 1.0
    C2: float = 0.3
    max_elements: int = 70_000
    max_iterations: int | None = None
    tol: float = DEFAULT_TOL
    out: Path | None = None
    emit: tuple = ()
    keep_meshes: bool = False

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.mode not in ("uniform", "adaptive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.estimator not in VARIANTS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.C1 <= 0 or self.C2 <= 0:
            raise ValueError("tuning constants must be positive")
        bad = set(self.emit) - set(EMIT_CHOICES)
        if bad:
            raise ValueError(f"unknown emit flags {sorted(bad)}")
        if self.emit and self.out is None:
            raise ValueError("an output directory is needed to emit files")
        if self.out is not None:
            self.out = Path(self.out)


@dataclass
class IterationRecord:
    k: int
    n_elements: int
    reports: dict
    marked: int = 0
    mesh: object = None


@dataclass
class RunResult:
    config: RunConfig
    iterations: list = field(default_factory=list)

    def report(self, k, variant=None):
        return self.iterations[k].reports[variant or self.config.estimator]

    def column(self, name, variant=None):
        return [getattr(self.report(k, variant), name) for k in range(len(self.iterations))]

    @property
    def n_elements(self):
        return [it.n_elements for it in self.iterations]


def dorfler_mark(indicators_sq, theta):
    """Smallest greedy set whose squared indicators reach ``theta`` of the total.

    Largest values are taken first, ties by ascending element id.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    eta = np.asarray(indicators_sq, dtype=float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise ValueError("indicators must be finite and nonnegative")
    total = eta.sum()
    if total == 0.0:
        return set()
    order = np.lexsort((np.arange(len(eta)), -eta))
    cum = np.cumsum(eta[order])
    # guard against the last partial sum landing just below theta * total
    n = int(np.searchsorted(cum, theta * total * (1.0 - 1e-14)) + 1)
    marked = order[:n]
    return set(marked[eta[marked] > 0].tolist())


def run(config):
    """Solve, estimate, mark and refine until the size cap is exceeded."""
    f, exact = benchmark(config.lam)
    mesh = unit_square_initial()
    result = RunResult(config)
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
    previous = None
    k = 0
    while True:
        try:
            u_h = solve_problem(mesh, f, config.tol)
        except SolverError as exc:
            raise SolverError(f"iteration {k}: {exc}") from exc
        reports = estimate(u_h, f, exact, C1=config.C1, C2=config.C2, previous=previous)
        rep = reports[config.estimator]
        log.info(
            "k=%d #T=%d err=%.3e est=%.3e eff=%.3f",
            k, mesh.n_elements, rep.err, rep.est, rep.effectivity or float("nan"),
        )
        record = IterationRecord(k, mesh.n_elements, reports)
        if config.keep_meshes:
            record.mesh = mesh
        result.iterations.append(record)
        if "vtk" in config.emit:
            write_vtk(config.out / f"mesh_{k}.vtk", mesh, rep)
        if "csv" in config.emit:
            write_csv(config.out / "table.csv", result)

        if config.mode == "uniform":
            new = uniform_refine(mesh)
            record.marked = mesh.n_elements
        else:
            marked = dorfler_mark(rep.total2, config.theta)
            record.marked = len(marked)
            if not marked:
                break
            new = refine(mesh, marked)
        k += 1
        if new.n_elements > config.max_elements:
            break
        if config.max_iterations is not None and k >= config.max_iterations:
            break
        mesh = new
        previous = reports

    if "svg" in config.emit:
        write_svg(config.out / "convergence.svg", result)
    return result


def _fmt(x):
    return "" if x is None else format(x, ".6g")


def write_csv(path, result):
    lines = [CSV_HEADER]
    for it in result.iterations:
        r = it.reports[result.config.estimator]
        row = (it.k, it.n_elements, r.err, r.eoc, r.est, r.effectivity, r.ncf, r.eta, r.osc)
        lines.append(",".join([str(row[0]), str(row[1])] + [_fmt(v) for v in row[2:]]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_vtk(path, mesh, report):
    """Legacy ASCII unstructured grid with the squared indicators as cell data."""
    nv, ne = mesh.n_vertices, mesh.n_elements
    out = ["# vtk DataFile Version 3.0", "error indicators", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {nv} double")
    out.extend(f"{x!r} {y!r} 0" for x, y in mesh.vertices.tolist())
    out.append(f"CELLS {ne} {4 * ne}")
    out.extend(f"3 {a} {b} {c}" for a, b, c in mesh.elements.tolist())
    out.append(f"CELL_TYPES {ne}")
    out.extend(["5"] * ne)
    out.append(f"CELL_DATA {ne}")
    for name in ("ncf2", "eta2", "osc2", "total2"):
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(repr(v) for v in getattr(report, name).tolist())
    Path(path).write_text("\n".join(out) + "\n")


def write_svg(path, result, width=480, height=360):
    """Static log-log plot of err and est against the number of elements."""
    n = np.array(result.n_elements, dtype=float)
    err = np.array(result.column("err"), dtype=float)
    est = np.array(result.column("est"), dtype=float)
    pad = 50
    lx = np.log10(n)
    ly = np.log10(np.concatenate([err, est]))
    x0, x1 = lx.min(), max(lx.max(), lx.min() + 1.0)
    y0, y1 = ly.min() - 0.2, ly.max() + 0.2

    def pt(xs, ys):
        px = pad + (np.log10(xs) - x0) / (x1 - x0) * (width - 2 * pad)
        py = height - pad - (np.log10(ys) - y0) / (y1 - y0) * (height - 2 * pad)
        return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))

    # reference slope -1/2 anchored at the first estimator value
    ref_x = np.array([n[0], n[-1] if len(n) > 1 else n[0] * 10])
    ref_y = est[0] * 2.0 * (ref_x / ref_x[0]) ** -0.5
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="black"/>',
        f'<polyline fill="none" stroke="blue" points="{pt(n, err)}"/>',
        f'<polyline fill="none" stroke="red" points="{pt(n, est)}"/>',
        f'<polyline fill="none" stroke="gray" stroke-dasharray="4 3" points="{pt(ref_x, ref_y)}"/>',
        f'<text x="{pad}" y="{pad - 10}" font-size="12">err (blue), est (red), slope -1/2 (dashed)</text>',
        f'<text x="{width / 2:.0f}" y="{height - 15}" font-size="12">#elements (log)</text>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(parts) + "\n")


def least_squares_slope(n, values):
    """Slope of log(values) against log(n)."""
    return float(np.polyfit(np.log(n), np.log(values), 1)[0])


def nearest_uniform_error(n, uniform_n, uniform_err):
    i = int(np.argmin([abs(math.log(m / n)) for m in uniform_n]))
    return uniform_err[i], uniform_n[i]
