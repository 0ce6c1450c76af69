"""Translated-Gaussian benchmark on the unit square with a closed-form path."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .discretization import normalize_density
from .mesh import compute_geometry, generate_grid_mesh
from .solver import Problem, SolverConfig, solve_loop

NU = (0.4, 0.6)
CHI = 0.1


def gaussian(xy: np.ndarray, center: float, chi: float = CHI) -> np.ndarray:
    """exp(-((x - c)^2 + (y - c)^2) / (2 chi^2)), peak value 1."""
    return np.exp(-((xy[:, 0] - center) ** 2 + (xy[:, 1] - center) ** 2) / (2.0 * chi**2))


def exact_path(xy: np.ndarray, times: np.ndarray, nu=NU, chi: float = CHI) -> np.ndarray:
    """Raw closed-form density at each time: the Gaussian centred at (1-t) nu0 + t nu1."""
    return np.array([gaussian(xy, (1.0 - t) * nu[0] + t * nu[1], chi) for t in times])


@dataclass
class Checkpoint:
    tol: float
    iterations: int
    elapsed_s: float
    eta: float
    L2: float
    Linf: float
    L2_abs: float
    Linf_abs: float
    L2_amplitude: float
    Linf_amplitude: float
    cost: float


@dataclass
class DemoResult:
    n: int
    N: int
    checkpoints: list[Checkpoint] = field(default_factory=list)
    termination: str = ""
    iterations: int = 0
    elapsed_s: float = 0.0
    sigma_history: list = field(default_factory=list)

    @property
    def reached_all(self) -> bool:
        return self.termination == "tol-reached"

    def table(self) -> str:
        head = f"{'tol':>8} {'L2-error':>10} {'Linf-error':>10} {'iterations':>10} {'time (s)':>9} {'cost':>9}"
        rows = [head]
        for c in self.checkpoints:
            rows.append(
                f"{c.tol:8.0e} {c.L2:10.3e} {c.Linf:10.3e} {c.iterations:10d} {c.elapsed_s:9.2f} {c.cost:9.5f}"
            )
        return "\n".join(rows)


def demo_problem(n: int, N: int = 31):
    if n < 8:
        raise ValueError("grid size n must be >= 8")
    mesh = generate_grid_mesh(n)
    geom = compute_geometry(mesh)
    xy = mesh.vertices[:, :2]
    mu0 = normalize_density(gaussian(xy, NU[0]), geom)
    mu1 = normalize_density(gaussian(xy, NU[1]), geom)
    return Problem(geom, N, mu0, mu1)


def path_errors(problem: Problem, alpha1: np.ndarray) -> dict:
    """Errors of a computed density path against the closed form.

    The exact slices are normalized to unit discrete mass like the inputs.
    ``L2`` and ``Linf`` are relative: the space-time weighted norm (resp.
    max) of the difference over that of the exact path. The ``*_abs``
    entries are the same quantities without the denominator, and
    ``*_amplitude`` rescales each slice of the difference by the raw
    Gaussian mass so it is measured against a peak-one profile.
    """
    disc = problem.disc
    xy = problem.geometry.mesh.vertices[:, :2]
    raw = exact_path(xy, problem.grid.staggered_times)
    mass = raw @ problem.geometry.vertex_area
    exact = raw / mass[:, None]
    diff = alpha1 - exact
    scaled = diff * mass[:, None]
    return {
        "L2": disc.norm(diff) / disc.norm(exact),
        "Linf": float(np.abs(diff).max() / np.abs(exact).max()),
        "L2_abs": disc.norm(diff),
        "Linf_abs": float(np.abs(diff).max()),
        "L2_amplitude": disc.norm(scaled),
        "Linf_amplitude": float(np.abs(scaled).max()),
    }


def gaussian_demo(
    n: int = 96,
    N: int = 31,
    tols=(1e-3, 1e-4, 1e-5),
    config: SolverConfig | None = None,
    progress=None,
) -> DemoResult:
    """Run once to the smallest tolerance, recording errors as each checkpoint is passed."""
    tols = sorted(tols, reverse=True)
    if config is None:
        config = SolverConfig()
    config = SolverConfig(**{**config.__dict__, "tol": tols[-1]})
    problem = demo_problem(n, N)
    result = DemoResult(n=n, N=N)
    t0 = time.perf_counter()

    def cb(it, res, st, du, sigma):
        while len(result.checkpoints) < len(tols) and res.eta_stop <= tols[len(result.checkpoints)]:
            errs = path_errors(problem, du.alpha1)
            cost = -problem.disc.inner(st.phi, problem.c, "tV")
            cp = Checkpoint(
                tol=tols[len(result.checkpoints)],
                iterations=it,
                elapsed_s=time.perf_counter() - t0,
                eta=res.eta_stop,
                cost=cost,
                **errs,
            )
            result.checkpoints.append(cp)
            if progress is not None:
                progress(cp)

    _, _, rep = solve_loop(problem, config, callback=cb)
    result.termination = rep.termination
    result.iterations = rep.iterations
    result.elapsed_s = rep.elapsed_s
    result.sigma_history = rep.sigma_history
    return result
