"""Command line entry point.

Every command reads a config (``--config`` file plus ``--set key=value``
overrides), writes its artifacts under ``--out`` and exits with 0 on
success, 2 on configuration errors, 3 on numerical or convergence
failures and 4 when a computed object violates a structural invariant.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import RunConfig, load_config
from .errors import ConfigurationError, SpecwaveError

COMMANDS = ("soliton", "check", "spectrum", "threshold", "tune", "project", "lap-scan",
            "evolve", "dispersion", "osc", "run")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--out", help="output directory (default: output.dir from the config)")
    common.add_argument("--threads", type=int, help="BLAS/OpenMP thread count")
    common.add_argument("--verbose", "-v", action="count", default=0)

    p = _Parser(prog="specwave", description="Spectral and dispersive analysis of matrix "
                "Schrodinger operators linearized around NLS ground states.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("soliton", parents=[common], help="ground state profile")
    sub.add_parser("check", parents=[common], help="assumption scan of the assembled operator")
    sub.add_parser("spectrum", parents=[common], help="discrete spectrum and clusters")
    sub.add_parser("threshold", parents=[common], help="threshold classification at +mu")
    sub.add_parser("tune", parents=[common], help="tune the coupling to a threshold resonance or eigenvalue")
    sub.add_parser("project", parents=[common], help="projection set and its algebra residuals")
    lap = sub.add_parser("lap-scan", parents=[common], help="weighted resolvent norms near the continuum")
    lap.add_argument("--lambdas", type=_floats, default=[1.5, 2.0, 4.0])
    lap.add_argument("--epsilons", type=_floats, default=[1e-1, 3e-2, 1e-2])
    lap.add_argument("--sigma", type=float, default=2.0)
    ev = sub.add_parser("evolve", parents=[common], help="factorized propagator and its checks")
    ev.add_argument("--time", type=float, action="append", default=[],
                    help="also save e^{itH} at this time as a matrix container")
    disp = sub.add_parser("dispersion", parents=[common], help="decay series and power-law fits")
    disp.add_argument("--norm", choices=["1toinf", "2to2", "ft-diff"], action="append")
    osc = sub.add_parser("osc", parents=[common], help="oscillatory integral tables")
    osc.add_argument("--suite", choices=["birb", "gk", "ha"], required=True)
    run = sub.add_parser("run", parents=[common], help="end-to-end pipeline")
    run.add_argument("--pipeline", required=True)
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig({})
    cfg = cfg.with_overrides(args.set)
    if args.out:
        cfg = cfg.with_overrides([f"output.dir={args.out}"])
    return cfg


def _dispatch(args, cfg: RunConfig) -> int:
    from pathlib import Path

    from . import pipelines as pl
    from .persistence import write_csv, write_json, write_matrix

    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command

    if cmd == "run":
        man = pl.run_pipeline(cfg, args.pipeline)
        print(Path(man.directory) / "manifest.json")
        return 0
    if cmd == "osc":
        rows = pl.osc_suite(args.suite, pl._lambda0(cfg))
        print(write_csv(out / f"osc_{args.suite}.csv", rows))
        return 0
    if cmd == "tune":
        if cfg["potential.tune"] == "none":
            raise ConfigurationError("set potential.tune to resonance or eigenvalue")
        prob = pl.build_problem(cfg)
        print(write_json(out / "tuning.json", prob.tuning))
        return 0

    prob = pl.build_problem(cfg)
    if cmd == "soliton":
        paths, _, _ = pl.stage_soliton(prob, out)
    elif cmd == "threshold":
        paths, _, _ = pl.stage_threshold(prob, out, cfg["tolerance.rank"], cfg["tolerance.m0"])
    elif cmd == "lap-scan":
        from .free_resolvent import limiting_absorption_scan
        rows = limiting_absorption_scan(prob.hamiltonian(), args.lambdas, args.epsilons, args.sigma)
        paths = [write_csv(out / "lap_scan.csv", rows)]
    else:
        H = prob.hamiltonian()
        paths, _, spec = pl.stage_spectrum(H, out, cfg["tolerance.eig"])
        if cmd == "check":
            paths, _, _ = pl.stage_check(prob, H, out, cfg["tolerance.eig"], spec)
        elif cmd in ("project", "evolve", "dispersion"):
            threshold = fv = None
            if prob.kind != "soliton" and not prob.V.is_zero:
                p2, _, (threshold, fv) = pl.stage_threshold(prob, out, cfg["tolerance.rank"],
                                                            cfg["tolerance.m0"])
                paths += p2
            p3, _, (ps, bad) = pl.stage_project(spec, threshold, fv, out, cfg["projection.mode"],
                                                cfg["tolerance.projection"])
            paths += p3
            if bad:
                from .errors import InvariantViolation
                raise InvariantViolation(f"projection residuals above tolerance: {bad}")
            if cmd != "project":
                p4, _, cache = pl.stage_evolve(spec, out, pl._lambda0(cfg), cfg["seed"])
                paths += p4
                if cmd == "evolve":
                    from .evolution import propagator
                    for t in args.time:
                        paths.append(write_matrix(out / f"propagator_t{t:g}.bin", propagator(cache, t),
                                                  f"e^(itH) at t={t:g}, weighted coordinates"))
                else:
                    norms = tuple(args.norm or ("1toinf",))
                    P_extra = (ps.P_mu + ps.P_minus_mu) if threshold is not None and threshold.s2_dim else None
                    p5, _, _ = pl.stage_dispersion(cache, cfg, out, norms, threshold, fv, P_extra)
                    paths += p5
    for path in paths:
        print(path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return _dispatch(args, cfg)
    except SpecwaveError as exc:
        print(f"specwave: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ArithmeticError, MemoryError) as exc:
        print(f"specwave: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
