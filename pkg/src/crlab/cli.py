"""Command line entry point: ``python -m crlab``."""
import argparse
import logging
import sys

from .driver import EMIT_CHOICES, RunConfig, run


def _emit(text):
    flags = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in flags if s not in EMIT_CHOICES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown output kind(s): {', '.join(bad)}")
    return flags


def build_parser():
    p = argparse.ArgumentParser(
        prog="crlab",
        description="Smoothed Crouzeix-Raviart benchmark with a kink along x1 = lambda.",
    )
    p.add_argument("--lambda", dest="lam", type=float, default=2.0 / 3.0)
    p.add_argument("--mode", choices=("uniform", "adaptive"), default="uniform")
    p.add_argument("--estimator", choices=("cr", "crtilde"), default="crtilde")
    p.add_argument("--theta", type=float, default=0.7)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=0.3)
    p.add_argument("--max-elements", type=int, default=70_000)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-12, help="relative CG residual")
    p.add_argument("--out", default="out")
    p.add_argument("--emit", type=_emit, default=("csv", "svg"), help="comma list of csv,vtk,svg")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        config = RunConfig(
            lam=args.lam,
            mode=args.mode,
            estimator=args.estimator,
            theta=args.theta,
            C1=args.c1,
            C2=args.c2,
            max_elements=args.max_elements,
            max_iterations=args.max_iterations,
            tol=args.tol,
            out=args.out,
            emit=args.emit,
        )
        result = run(config)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"crlab: error: {exc}", file=sys.stderr)
        return 1
    last = result.iterations[-1]
    rep = last.reports[config.estimator]
    print(
        f"{len(result.iterations)} iterations, #T={last.n_elements}, "
        f"err={rep.err:.3e}, est={rep.est:.3e}"
    )
    return 0
