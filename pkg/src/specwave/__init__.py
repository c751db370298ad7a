"""Spectral and dispersive analysis of matrix Schrodinger operators.

Submodules load on first attribute access so that the command line can
configure BLAS threads before numpy is imported.
"""
from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("radial_grid", "ground_state", "operator_assembly", "free_resolvent",
               "threshold_analysis", "spectral_projections", "evolution", "osc_integrals",
               "config", "persistence", "pipelines", "cli", "errors")

_EXPORTS = {
    "build_grid": "radial_grid",
    "solve_ground_state": "ground_state",
    "linearized_potentials": "ground_state",
    "assemble_hamiltonian": "operator_assembly",
    "gaussian_pair": "operator_assembly",
    "two_bump_pair": "operator_assembly",
    "zero_potential": "operator_assembly",
    "check_assumptions": "operator_assembly",
    "radial_free_resolvent": "free_resolvent",
    "assemble_A0": "threshold_analysis",
    "jn_inverse": "threshold_analysis",
    "classify_threshold": "threshold_analysis",
    "find_resonant_coupling": "threshold_analysis",
    "find_eigenvalue_couplings": "threshold_analysis",
    "discrete_spectrum": "spectral_projections",
    "build_projection_set": "spectral_projections",
    "riesz_projection": "spectral_projections",
    "build_cache": "evolution",
    "propagator": "evolution",
    "dispersive_experiment": "evolution",
    "make_cutoff": "osc_integrals",
    "RunConfig": "config",
    "run_pipeline": "pipelines",
}

__all__ = ["__version__", *_SUBMODULES, *_EXPORTS]


def __getattr__(name: str):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
