"""End-to-end run: config -> mesh -> solve -> snapshots and report."""

from __future__ import annotations

import logging
import time
from pathlib import Path

from .config import ConfigError, RunConfig
from .discretization import DensityError
from .export import export_report, export_snapshots, report_dict
from .mesh import MeshError, compute_geometry, validate_mesh
from .solver import DivergenceError, Problem, extract_solution, solve_loop

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT_ERROR = 2
EXIT_DIVERGED = 3


def assemble(config: RunConfig):
    from .config import build_mesh

    mesh = build_mesh(config.mesh, config.base_dir)
    diag = validate_mesh(mesh, strict=True)
    for w in diag.warnings:
        log.warning("mesh: %s", w)
    geom = compute_geometry(mesh)
    mu0 = config.mu0.density(geom, config.mass_floor)
    mu1 = config.mu1.density(geom, config.mass_floor)
    return Problem(geom, config.time_steps, mu0, mu1)


def run(config: RunConfig) -> int:
    """Solve and export; returns 0 iff the tolerance was reached.

    The report is written in every case, including input errors.
    """
    out = Path(config.output_dir)
    report_path = out / "report.json"
    t0 = time.perf_counter()
    try:
        problem = assemble(config)
    except (MeshError, DensityError, ConfigError, OSError) as exc:
        log.error("%s", exc)
        export_report({"termination": "error", "error": str(exc), "config": config.to_dict()}, report_path)
        return EXIT_INPUT_ERROR
    t_asm = time.perf_counter() - t0
    try:
        st, du, rep = solve_loop(problem, config.solver_config())
    except DivergenceError as exc:
        log.error("%s", exc)
        export_report({"termination": "diverged", "error": str(exc), "config": config.to_dict()}, report_path)
        return EXIT_DIVERGED
    sol = extract_solution(problem, st, du)
    log.info(
        "%s after %d iterations (%.1fs), eta %.3e, cost %.6g",
        rep.termination, rep.iterations, rep.elapsed_s, rep.residuals.eta_stop, sol.cost,
    )
    if config.export_density or config.export_momentum:
        export_snapshots(
            sol.density,
            sol.momentum if config.export_momentum else None,
            problem.geometry.mesh,
            out,
        )
    # the report is always written; export_report only controls extra detail
    data = report_dict(rep, problem, sol.density, {"assembly_s": t_asm, "config": config.to_dict()})
    if not config.export_report:
        data.pop("history", None)
    export_report(data, report_path)
    return EXIT_OK if rep.termination == "tol-reached" else EXIT_NOT_CONVERGED
