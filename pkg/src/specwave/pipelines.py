"""Stage functions and end-to-end pipelines behind the command line.

A pipeline runs a chain of stages inside one run directory named by the
pipeline and the config hash. A finished directory is reused as is; an
unfinished one is left for diagnosis and the rerun goes to a fresh
sibling, so no stage ever rewrites a previous run.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError, ConsistencyError, InvariantViolation, SpecwaveError
from .evolution import (build_cache, dispersive_experiment, free_dispersion_series,
                        operator_norm_2to2, reflection_time, DecaySeries)
from .ground_state import linearized_potentials, solve_ground_state
from .operator_assembly import (PotentialPair, assemble_hamiltonian, check_assumptions,
                                factor_potential, gaussian_pair, two_bump_pair, zero_potential)
from .osc_integrals import gk_norms, ha_fourier_decay, make_cutoff, verify_birb
from .persistence import RunManifest, write_csv, write_json, write_matrix
from .radial_grid import build_grid
from .spectral_projections import build_projection_set, discrete_spectrum
from .threshold_analysis import (assemble_A0, classify_threshold, find_eigenvalue_couplings,
                                 find_resonant_coupling)

log = logging.getLogger(__name__)

__all__ = ["PIPELINES", "Problem", "build_problem", "run_pipeline", "time_schedule",
           "osc_suite"]

PIPELINES = ("theorem-L2", "theorem-dispersive", "threshold-atlas", "free-baseline")


@dataclass
class Problem:
    """Grid, threshold and potential described by a config, after tuning."""

    grid: object
    mu: float
    V: PotentialPair
    kind: str
    profile: object = None
    tuning: dict = field(default_factory=dict)
    make: object = None  # two-bump factory, kept for re-tuning

    def hamiltonian(self):
        return assemble_hamiltonian(self.grid, self.mu, self.V)

    def factored(self):
        return factor_potential(self.V)


def build_problem(cfg: RunConfig, kind: str | None = None) -> Problem:
    kind = kind or cfg["potential.kind"]
    grid = build_grid(cfg["grid.n"], cfg["grid.rmax"], cfg["grid.spacing"])
    mu = cfg["mu"]
    tune = cfg["potential.tune"]
    bracket = (cfg["potential.bracket_lo"], cfg["potential.bracket_hi"])
    if kind == "soliton":
        alpha = cfg["potential.alpha"]
        if abs(mu - alpha**2) > 1e-12 * max(1.0, mu):
            raise ConsistencyError(f"soliton linearization needs mu = alpha^2 = {alpha**2}, got {mu}")
        prof = solve_ground_state(alpha, cfg["potential.p"], grid)
        return Problem(grid, mu, linearized_potentials(prof), kind, profile=prof)
    if kind == "zero":
        return Problem(grid, mu, zero_potential(grid), kind)
    if kind == "gaussian":
        base = gaussian_pair(grid, cfg["potential.amp1"], cfg["potential.amp2"], cfg["potential.width"])
        if tune == "resonance":
            s, info = find_resonant_coupling(base, grid, mu, bracket, return_history=True)
            return Problem(grid, mu, base.scaled(s), kind,
                           tuning={"coupling": s, "prediction": info.get("prediction"),
                                   "residual": info.get("residual")})
        if tune == "eigenvalue":
            raise ConfigurationError("eigenvalue tuning needs potential.kind = two-bump")
        return Problem(grid, mu, base.scaled(cfg["potential.coupling"]), kind)
    if kind == "two-bump":
        def make(a, b):
            return two_bump_pair(grid, a, b)
        if tune == "eigenvalue":
            s1, s2, info = find_eigenvalue_couplings(make, grid, mu, bracket)
            return Problem(grid, mu, make(s1, s2), kind, make=make,
                           tuning={"s1": s1, "s2": s2, **info})
        if tune == "resonance":
            raise ConfigurationError("resonance tuning needs potential.kind = gaussian")
        return Problem(grid, mu, make(cfg["potential.coupling"], cfg["potential.s2"]), kind, make=make)
    raise ConfigurationError(f"unknown potential.kind {kind!r}")


def time_schedule(cfg: RunConfig, t_max_reflect: float) -> tuple[np.ndarray, tuple[float, float]]:
    t_hi = cfg["time.t_max"] or t_max_reflect
    t_lo = cfg["time.t_min"]
    if not t_hi > t_lo:
        raise ConfigurationError(f"empty time range [{t_lo}, {t_hi}]")
    ts = np.geomspace(t_lo, t_hi, cfg["time.samples"])
    window = (cfg["time.window_lo"] or t_lo, cfg["time.window_hi"] or t_hi)
    return ts, window


def _lambda0(cfg: RunConfig) -> float:
    return cfg["cutoff.lambda0"] or 0.4 * math.sqrt(cfg["mu"])


# -- stages -------------------------------------------------------------------------------
# Each stage writes into ``out`` and returns (artifact paths, residuals, payload).

def stage_soliton(problem: Problem, out: Path):
    prof = problem.profile
    if prof is None:
        raise ConfigurationError("soliton stage needs potential.kind = soliton")
    g = problem.grid
    paths = [write_csv(out / "soliton.csv", [{"r": float(r), "phi": float(p)}
                                            for r, p in zip(g.r, prof.phi)], ["r", "phi"]),
             write_json(out / "soliton.json", {"alpha": prof.alpha, "p": prof.p, "phi0": prof.phi0,
                                               "residual": prof.residual})]
    return paths, {"residual": float(prof.residual)}, prof


def stage_check(problem: Problem, H, out: Path, tol_eig: float, spec=None):
    eig = None if spec is None else (spec.eigenvalues, spec.eigenvectors)
    rep = check_assumptions(H, problem.V, tol_eig=tol_eig * H.norm(), eig=eig)
    d = rep.to_dict()
    d.pop("timings", None)
    path = write_json(out / "assumptions.json", d)
    res = H.symmetry_residuals()
    return [path], {k: float(v) for k, v in res.items()}, rep


def stage_spectrum(H, out: Path, tol_eig: float):
    spec = discrete_spectrum(H, tol=tol_eig)
    d = spec.to_dict()
    d.pop("timings", None)
    paths = [write_json(out / "spectrum.json", d),
             write_csv(out / "eigenvalues.csv",
                       [{"re": float(z.real), "im": float(z.imag), "discrete": bool(m)}
                        for z, m in zip(spec.eigenvalues, spec.discrete_mask)],
                       ["re", "im", "discrete"])]
    return paths, {"symmetry": float(spec.symmetry_residual), "off_axis": float(spec.max_off_axis)}, spec


def stage_threshold(problem: Problem, out: Path, tol_rank: float, tol_m0: float):
    fv = problem.factored()
    fam = assemble_A0(problem.grid, problem.mu, fv)
    rep = classify_threshold(fam, tol_rank=tol_rank, tol_m0=tol_m0)
    d = rep.to_dict()
    d["tuning"] = problem.tuning
    path = write_json(out / "threshold.json", d)
    return [path], {"hermiticity": float(fam.hermiticity_residual)}, (rep, fv)


def stage_project(spec, threshold, fv, out: Path, mode: str, tol: float):
    ps = build_projection_set(spec, threshold, mode=mode, fv=fv)
    res = ps.check(tol=tol)
    k = spec.schur_k
    paths = [write_json(out / "projections.json", {"mode": mode, "residuals": res, "tolerance": tol})]
    if k:
        # P_d = right @ left keeps the container small at any grid size
        paths.append(write_matrix(out / "P_d_right.bin", spec.schur_Q[:, :k], "P_d right factor"))
        paths.append(write_matrix(out / "P_d_left.bin", spec._left_rows(), "P_d left factor"))
    bad = {n: v for n, v in res.items() if v > tol}
    return paths, res, (ps, bad)


def stage_evolve(spec, out: Path, lambda0: float, seed: int):
    cache = build_cache(spec, lambda0=lambda0)
    chk = cache.check(seed=seed)
    path = write_json(out / "propagator.json", {"t_max": cache.t_max, "method": cache.method,
                                               "condition": cache.condition, "checks": chk})
    return [path], chk, cache


def _write_series(series: DecaySeries, out: Path, stem: str):
    meta = {k: v for k, v in series.meta.items() if k != "seconds"}
    return [write_csv(out / f"{stem}.csv", series.rows()),
            write_json(out / f"{stem}_fit.json", {"fits": series.fits, "window": list(series.window),
                                                  "t_max": series.t_max, "meta": meta})]


def stage_dispersion(cache, cfg: RunConfig, out: Path, norms, report=None, fv=None, P_extra=None):
    ts, window = time_schedule(cfg, cache.t_max)
    chi = make_cutoff(_lambda0(cfg), cfg["mu"])
    if tuple(norms) == ("2to2",):
        vals = np.array([operator_norm_2to2(cache.continuum_operator(t)) for t in ts])
        series = DecaySeries(ts, {"2to2": vals}, window, cache.t_max,
                             meta={"ratio_to_first": (vals / vals[0]).tolist()})
        series.fit_all()
    else:
        series = dispersive_experiment(cache, chi, ts, report=report, fv=fv, norms=norms,
                                       window=window, P_extra=P_extra)
    return _write_series(series, out, "decay"), series.fits, series


def stage_free_baseline(problem: Problem, cfg: RunConfig, out: Path):
    lam0 = _lambda0(cfg)
    ts, window = time_schedule(cfg, reflection_time(problem.grid.rmax, lam0))
    series = free_dispersion_series(problem.grid, problem.mu, make_cutoff(lam0, problem.mu), ts, window)
    return _write_series(series, out, "decay"), series.fits, series


def osc_suite(name: str, lambda0: float = 0.4) -> list[dict]:
    if name == "birb":
        chi = make_cutoff(lambda0)
        rows = verify_birb(chi, chi.derivative, np.geomspace(1.0, 1e4, 13), (-lambda0, lambda0))
        return [{k: (abs(v) if isinstance(v, complex) else v) for k, v in r.items()} for r in rows]
    if name == "gk":
        return gk_norms([0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0])
    if name == "ha":
        return ha_fourier_decay([0.5, 1.0, 2.0], [0.0, 1.0, 3.0, 10.0, 30.0, 100.0])
    raise ConfigurationError(f"unknown osc suite {name!r}; choose birb, gk or ha")


# -- pipelines ------------------------------------------------------------------------------

def _run_dir(root: Path, pipeline: str, digest: str) -> tuple[Path, RunManifest | None]:
    base = root / f"{pipeline}-{digest[:12]}"
    candidate, i = base, 1
    while candidate.exists():
        try:
            man = RunManifest.load(candidate)
            if man.status == "complete" and man.config_hash == digest:
                man.verify()
                return candidate, man
        except (OSError, ValueError, KeyError, InvariantViolation):
            pass
        i += 1
        candidate = base.with_name(f"{base.name}-{i}")
    return candidate, None


def run_pipeline(cfg: RunConfig, pipeline: str, out_root=None) -> RunManifest:
    """Run one named pipeline; reuse a completed run with the same config hash."""
    if pipeline not in PIPELINES:
        raise ConfigurationError(f"unknown pipeline {pipeline!r}; choose one of {', '.join(PIPELINES)}")
    digest = cfg.digest()
    root = Path(out_root or cfg["output.dir"])
    out, done = _run_dir(root, pipeline, digest)
    if done is not None:
        log.info("reusing completed run %s", out)
        return done
    out.mkdir(parents=True)
    man = RunManifest(digest, pipeline, str(out))
    (out / "config.txt").write_text(cfg.to_text())
    man.add(out / "config.txt")
    state: dict = {}

    def stage(name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            paths, residuals, payload = fn(*args, **kw)
        except SpecwaveError as exc:
            man.status = f"failed:{name}"
            man.write()
            exc.args = (f"stage {name} (config {digest[:12]}): {exc}",)
            raise
        for p in paths:
            man.add(p)
        man.stage(name, time.perf_counter() - t0, residuals)
        log.info("stage %s done in %.1fs", name, time.perf_counter() - t0)
        return payload

    def build(kind=None):
        t0 = time.perf_counter()
        try:
            prob = build_problem(cfg, kind)
        except SpecwaveError as exc:
            man.status = "failed:assemble"
            man.write()
            exc.args = (f"stage assemble (config {digest[:12]}): {exc}",)
            raise
        man.stage("assemble", time.perf_counter() - t0, {"tuning": prob.tuning})
        if prob.tuning:
            man.add(write_json(out / "tuning.json", prob.tuning))
        return prob

    if pipeline == "free-baseline":
        prob = build("zero")
        state["series"] = stage("fit", stage_free_baseline, prob, cfg, out)
    elif pipeline == "threshold-atlas":
        prob = build()
        fv = prob.factored()
        rows = []

        def atlas(_):
            base = prob.V
            for f in (0.9, 0.95, 0.99, 1.0, 1.01, 1.05, 1.1):
                V = base.scaled(base.coupling * f)
                rep = classify_threshold(assemble_A0(prob.grid, prob.mu, factor_potential(V)),
                                         tol_rank=cfg["tolerance.rank"], tol_m0=cfg["tolerance.m0"])
                rows.append({"factor": f, "coupling": V.coupling, "classification": rep.classification,
                             "s1_dim": rep.s1_dim, "s2_dim": rep.s2_dim,
                             "c": float("nan") if rep.c is None else float(rep.c),
                             "smallest_singular_value": float(rep.smallest_singular_values[0])})
            return [write_csv(out / "atlas.csv", rows, list(rows[0]))], {}, rows

        stage("threshold", stage_threshold, prob, out, cfg["tolerance.rank"], cfg["tolerance.m0"])
        stage("atlas", atlas, fv)
    else:
        prob = build("soliton" if pipeline == "theorem-L2" else None)
        H = prob.hamiltonian()
        if prob.profile is not None:
            stage("soliton", stage_soliton, prob, out)
        spec = stage("spectrum", stage_spectrum, H, out, cfg["tolerance.eig"])
        stage("check", stage_check, prob, H, out, cfg["tolerance.eig"], spec)
        threshold, fv = None, None
        if pipeline == "theorem-dispersive":
            threshold, fv = stage("threshold", stage_threshold, prob, out,
                                  cfg["tolerance.rank"], cfg["tolerance.m0"])
        ps, bad = stage("project", stage_project, spec, threshold, fv, out,
                        cfg["projection.mode"], cfg["tolerance.projection"])
        if bad:
            man.status = "failed:project"
            man.write()
            raise InvariantViolation(f"stage project (config {digest[:12]}): {bad}")
        cache = stage("evolve", stage_evolve, spec, out, _lambda0(cfg), cfg["seed"])
        if pipeline == "theorem-L2":
            stage("fit", stage_dispersion, cache, cfg, out, ("2to2",))
        else:
            norms = ("1toinf", "ft-diff") if threshold.classification == "ResonanceOnly" else ("1toinf",)
            P_extra = ps.P_mu + ps.P_minus_mu if threshold.s2_dim else None
            stage("fit", stage_dispersion, cache, cfg, out, norms, threshold, fv, P_extra)
    man.status = "complete"
    man.write()
    return man
