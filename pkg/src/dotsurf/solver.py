"""Inexact semi-proximal augmented Lagrangian method for surface transport.

One iteration updates, in order, the potential ``phi`` and the cone
variable ``z`` (independent given ``q``), then ``q = (A, B)`` by a diagonal
solve, then the multipliers with step ``tau * sigma``. At convergence the
multiplier ``alpha1`` is the density path and ``alpha2`` the momentum.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .discretization import Discretization, TimeGrid, build_cost
from .linsolve import PhiSolver
from .mesh import MeshGeometry
from .socp import (
    ConeLayout,
    DecoupledVec,
    apply_copy,
    apply_copy_adjoint,
    qcoeff_diagonal,
    shift_vector,
)

log = logging.getLogger(__name__)

TERMINATION_REASONS = ("tol-reached", "max-iter", "max-time")


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, what: str = "iterate"):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class SolverConfig:
    tol: float = 1e-4
    tau: float = 1.9
    sigma0: float = 1.0
    sigma_min: float = 1e-6
    sigma_max: float = 1e6
    balance_ratio: float = 5.0
    balance_factor: float = 2.0
    check_every: int = 10
    sigma_update_every: int = 50
    max_iter: int = 50_000
    max_time_s: float = 36_000.0
    theta: float = 0.0
    deterministic: bool = True
    backend: str = "fused"

    def __post_init__(self):
        if not 0.0 < self.tau < 2.0:
            raise ValueError("tau must lie in (0,2)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValueError("sigma bounds must satisfy 0 < sigma_min <= sigma_max")
        if self.balance_ratio <= 1 or self.balance_factor <= 1:
            raise ValueError("balance ratio and factor must exceed 1")
        if self.check_every < 1 or self.sigma_update_every < 1:
            raise ValueError("check_every and sigma_update_every must be >= 1")
        if self.max_iter < 0 or self.max_time_s < 0:
            raise ValueError("iteration and time limits must be nonnegative")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.backend not in ("fused", "numpy"):
            raise ValueError(f"unknown backend {self.backend!r}")


class Problem:
    """Everything the iteration needs that does not change between iterations."""

    def __init__(self, geometry: MeshGeometry, N: int, mu0: np.ndarray, muN: np.ndarray):
        self.geometry = geometry
        self.grid = TimeGrid(N)
        self.N = N
        self.disc = Discretization(geometry, self.grid)
        self.mu0 = np.asarray(mu0, dtype=float)
        self.muN = np.asarray(muN, dtype=float)
        for mu in (self.mu0, self.muN):
            if mu.shape != (self.disc.nV,):
                raise ValueError("density length does not match the mesh")
        self.c = build_cost(self.mu0, self.muN, self.grid)
        self.layout = ConeLayout(self.disc)
        self.phi_solver = PhiSolver(self.disc)
        self.qdiag_A, self.qdiag_B = qcoeff_diagonal(self.disc.weights, N)
        self.d = shift_vector(N, self.disc.nV, self.disc.nT)
        # mean area per triangle
        self.C = float(geometry.face_area.mean())

    @property
    def shapes(self):
        N, nV, nT = self.N, self.disc.nV, self.disc.nT
        return {
            "phi": (N + 1, nV),
            "A": (N, nV),
            "B": (N + 1, nT, 3),
            "z": (2 * N * nV + 18 * N * nT,),
        }


@dataclass
class PrimalState:
    phi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    z: DecoupledVec
    e: np.ndarray | None = None


@dataclass
class DualState:
    alpha1: np.ndarray
    alpha2: np.ndarray
    beta: DecoupledVec


@dataclass
class Residuals:
    eta_D: float
    eta_P: float
    eta_proj: float
    eta_S: float
    eta_P_soc: float
    eta_D_soc: float
    C: float
    eta_E: float | None = None  # congestion stationarity, only when theta > 0

    @property
    def eta_dot(self) -> float:
        return max(self.eta_D, self.eta_P, self.eta_proj, self.eta_S)

    @property
    def eta_cg(self) -> float:
        return self.eta_dot if self.eta_E is None else max(self.eta_dot, self.eta_E)

    @property
    def eta_stop(self) -> float:
        return self.eta_cg

    def as_dict(self) -> dict:
        keys = ["eta_dot", "eta_D", "eta_P", "eta_proj", "eta_S", "eta_P_soc", "eta_D_soc"]
        if self.eta_E is not None:
            keys += ["eta_E", "eta_cg"]
        return {k: float(getattr(self, k)) for k in keys}


@dataclass
class SolveReport:
    iterations: int
    elapsed_s: float
    residuals: Residuals
    history: list[dict] = field(default_factory=list)
    sigma_history: list[tuple[int, float]] = field(default_factory=list)
    sigma: float = 1.0
    cost: float = float("nan")
    W2_paper: float = float("nan")
    W2_conventional: float = float("nan")
    termination: str = "max-iter"
    theta: float = 0.0


# ---------------------------------------------------------------------------


def init_state(problem: Problem, theta: float = 0.0, warm: tuple | None = None):
    """Zero iterate, or a shape-checked copy of ``warm = (state, duals)``."""
    disc = problem.disc
    N, nV, nT = problem.N, disc.nV, disc.nT
    if warm is not None:
        st, du = warm
        sh = problem.shapes
        checks = [
            (st.phi, sh["phi"]), (st.A, sh["A"]), (st.B, sh["B"]), (st.z.flat, sh["z"]),
            (du.alpha1, sh["A"]), (du.alpha2, sh["B"]), (du.beta.flat, sh["z"]),
        ]
        for arr, shape in checks:
            if arr.shape != shape:
                raise ValueError(f"warm start shape mismatch: {arr.shape} vs {shape}")
        e = None
        if theta > 0:
            e = st.e.copy() if st.e is not None else np.zeros((N, nV))
            if e.shape != sh["A"]:
                raise ValueError("warm start shape mismatch for e")
        st = PrimalState(st.phi.copy(), st.A.copy(), st.B.copy(), st.z.copy(), e)
        du = DualState(du.alpha1.copy(), du.alpha2.copy(), du.beta.copy())
        return st, du
    st = PrimalState(
        phi=np.zeros((N + 1, nV)),
        A=np.zeros((N, nV)),
        B=np.zeros((N + 1, nT, 3)),
        z=DecoupledVec.zeros(N, nV, nT),
        e=np.zeros((N, nV)) if theta > 0 else None,
    )
    du = DualState(np.zeros((N, nV)), np.zeros((N + 1, nT, 3)), DecoupledVec.zeros(N, nV, nT))
    return st, du


class _Workspace:
    """Preallocated z-sized buffer for the array backend."""

    def __init__(self, problem: Problem):
        self.x = DecoupledVec.zeros(problem.N, problem.disc.nV, problem.disc.nT)


def step(
    problem: Problem,
    st: PrimalState,
    du: DualState,
    sigma: float,
    tau: float,
    theta: float = 0.0,
    ws: _Workspace | None = None,
    backend: str = "fused",
) -> None:
    """One ALM iteration, updating ``st`` and ``du`` in place.

    ``backend="fused"`` runs the z-space passes as compiled loops;
    ``"numpy"`` goes through the explicit gather/project/scatter layout.
    """
    disc = problem.disc
    w = disc.weights
    wv = w.vertex
    wf = w.face[:, None]
    inv_s = 1.0 / sigma

    # potential
    A_eff = st.A if st.e is None else st.A + st.e
    rhs = disc.apply_grad_transpose(wv * (A_eff - inv_s * du.alpha1), wf * (st.B - inv_s * du.alpha2))
    rhs -= (inv_s * wv) * problem.c
    st.phi = problem.phi_solver.solve(rhs)

    # cone variable
    if backend == "fused":
        geom = problem.geometry
        _kernels.z_update(
            st.A, st.B, du.beta.flat, st.z.flat, inv_s,
            geom.star_ptr, geom.star_face, geom.star_local, geom.face_area, geom.vertex_area,
        )
        adjA = _kernels.a_rhs(st.z.flat, du.beta.flat, inv_s, problem.N, disc.nV) * wv
    elif backend == "numpy":
        if ws is None:
            ws = _Workspace(problem)
        x = ws.x
        apply_copy(st.A, st.B, out=x)
        x.flat -= inv_s * du.beta.flat
        y = problem.layout.gather(x)
        problem.layout.project(y)
        problem.layout.scatter(y, out=st.z)
        # copy-adjoint of zeta = z - d + beta / sigma
        np.subtract(st.z.flat, problem.d.flat, out=x.flat)
        x.flat += inv_s * du.beta.flat
        adjA, adjB = apply_copy_adjoint(x, w)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    # q (and e): diagonal system, then the multipliers
    GA, GB = disc.apply_grad(st.phi)
    ts = tau * sigma
    if theta > 0:
        r1 = du.alpha1 + sigma * GA
        r2 = r1 + sigma * adjA / wv
        a11 = 1.0 / theta + sigma
        det = 3.0 * sigma / theta + 2.0 * sigma**2
        st.e = (3.0 * sigma * r1 - sigma * r2) / det
        st.A = (a11 * r2 - sigma * r1) / det
        resA = GA - st.e - st.A
    else:
        st.A = (wv * (GA + inv_s * du.alpha1) + adjA) / problem.qdiag_A
        resA = GA - st.A
    du.alpha1 += ts * resA
    if backend == "fused":
        _kernels.b_update(
            st.z.flat, du.beta.flat, inv_s, GB, du.alpha2, st.B, w.face, problem.qdiag_B, ts
        )
        _kernels.beta_update(st.A, st.B, st.z.flat, du.beta.flat, ts)
    else:
        st.B = (wf * (GB + inv_s * du.alpha2) + adjB) / problem.qdiag_B
        du.alpha2 += ts * (GB - st.B)
        apply_copy(st.A, st.B, out=x)
        np.subtract(st.z.flat, x.flat, out=x.flat)
        x.flat *= ts
        du.beta.flat += x.flat


def _norm_q(disc: Discretization, a, b) -> float:
    return math.sqrt(disc.inner(a, a, "tV") + disc.inner(b, b, "tT"))


def constraint_value(disc: Discretization, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """f(q) = A + 1/2 L_t L_s^*(|B|^2), nonpositive on the feasible set."""
    return A + 0.5 * disc.interp_t(disc.interp_s_adjoint(np.einsum("kfd,kfd->kf", B, B)))


def momentum_from_density(disc: Discretization, alpha1: np.ndarray, B: np.ndarray) -> np.ndarray:
    """h(alpha1, B) = (L_s L_t^* alpha1) B, per face and centered time."""
    return disc.interp_s(disc.interp_t_adjoint(alpha1))[:, :, None] * B


def compute_residuals(problem: Problem, st: PrimalState, du: DualState, theta: float = 0.0) -> Residuals:
    """Relative KKT residuals of the transport problem and of its cone form."""
    disc = problem.disc
    w = disc.weights
    C = problem.C
    GA, GB = disc.apply_grad(st.phi)
    rA = GA - st.A
    if theta > 0:
        rA = rA - st.e
    eta_D = _norm_q(disc, rA, GB - st.B) / (C + _norm_q(disc, GA, GB) + _norm_q(disc, st.A, st.B))

    gt = disc.apply_grad_transpose(w.vertex * du.alpha1, w.face[:, None] * du.alpha2)
    p = problem.c + gt / w.vertex
    eta_P = disc.norm(p) / (C + disc.norm(problem.c))

    fq = constraint_value(disc, st.A, st.B)
    a1 = du.alpha1
    eta_proj = disc.norm(a1 - np.maximum(0.0, fq + a1)) / (C + disc.norm(a1) + disc.norm(fq))

    h = momentum_from_density(disc, a1, st.B)
    eta_S = disc.norm(du.alpha2 - h, "tT") / (C + disc.norm(du.alpha2, "tT") + disc.norm(h, "tT"))

    geom = problem.geometry
    nz = math.sqrt(_kernels.copy_residual_sq(st.A, st.B, st.z.flat, geom.face_area, geom.vertex_area, problem.N))
    nd = math.sqrt(2.0 * geom.vertex_area.sum())
    eta_P_soc = max(eta_D, nz / (C + nd))

    adjA, adjB = apply_copy_adjoint(du.beta, w)
    atA = -adjA / w.vertex
    atB = -adjB / w.face[:, None]
    num = _norm_q(disc, a1 - atA, du.alpha2 - atB)
    eta_D_soc = max(eta_P, num / (C + _norm_q(disc, a1, du.alpha2) + _norm_q(disc, atA, atB)))

    eta_E = None
    if theta > 0:
        et = st.e / theta
        eta_E = disc.norm(et - a1) / (C + disc.norm(et) + disc.norm(a1))
    return Residuals(eta_D, eta_P, eta_proj, eta_S, eta_P_soc, eta_D_soc, C, eta_E)


def adapt_sigma(res: Residuals, sigma: float, config: SolverConfig) -> float:
    """Residual balancing between the cone-form primal and dual residuals."""
    if res.eta_D_soc > 0:
        ratio = res.eta_P_soc / res.eta_D_soc
    else:
        ratio = math.inf if res.eta_P_soc > 0 else 1.0
    if ratio > config.balance_ratio:
        sigma *= config.balance_factor
    elif ratio < 1.0 / config.balance_ratio:
        sigma /= config.balance_factor
    return min(max(sigma, config.sigma_min), config.sigma_max)


def transport_cost(problem: Problem, phi: np.ndarray) -> float:
    return -problem.disc.inner(phi, problem.c, "tV")


def solve_loop(
    problem: Problem,
    config: SolverConfig,
    warm: tuple | None = None,
    sigma: float | None = None,
    start_iter: int = 0,
    callback=None,
):
    """Iterate until the stopping residual reaches ``config.tol`` or a limit.

    ``warm``/``sigma``/``start_iter`` continue a previous run so that the
    check and penalty-update cadences stay aligned with the global count.
    ``callback(it, residuals, state, duals, sigma)`` runs after every check.
    """
    theta = config.theta
    st, du = init_state(problem, theta, warm)
    sigma = config.sigma0 if sigma is None else sigma
    ws = _Workspace(problem) if config.backend == "numpy" else None
    hist: list[dict] = []
    sig_hist: list[tuple[int, float]] = [(start_iter, sigma)]
    t0 = time.perf_counter()
    it = start_iter
    res = None
    reason = None

    def check(i):
        r = compute_residuals(problem, st, du, theta)
        vals = r.as_dict()
        if not all(math.isfinite(v) for v in vals.values()):
            raise DivergenceError(i, "residual")
        hist.append({"iter": i, "sigma": sigma, **vals})
        if callback is not None:
            callback(i, r, st, du, sigma)
        return r

    while True:
        if it - start_iter >= config.max_iter:
            reason = "max-iter"
            break
        if time.perf_counter() - t0 >= config.max_time_s:
            reason = "max-time"
            break
        step(problem, st, du, sigma, config.tau, theta, ws, config.backend)
        it += 1
        if not np.isfinite(st.phi[0, 0]) or not np.isfinite(du.alpha1[0, 0]):
            raise DivergenceError(it)
        if it % config.check_every == 0 or it % config.sigma_update_every == 0:
            res = check(it)
            if not np.all(np.isfinite(st.phi)):
                raise DivergenceError(it)
            log.debug("it %d  eta %.3e  sigma %.3g", it, res.eta_stop, sigma)
            if res.eta_stop <= config.tol:
                reason = "tol-reached"
                break
            if it % config.sigma_update_every == 0:
                new = adapt_sigma(res, sigma, config)
                if new != sigma:
                    sigma = new
                    sig_hist.append((it, sigma))

    if res is None or hist[-1]["iter"] != it:
        res = check(it)
        if reason != "tol-reached" and res.eta_stop <= config.tol and reason is None:
            reason = "tol-reached"
    elapsed = time.perf_counter() - t0
    cost = transport_cost(problem, st.phi)
    report = SolveReport(
        iterations=it,
        elapsed_s=elapsed,
        residuals=res,
        history=hist,
        sigma_history=sig_hist,
        sigma=sigma,
        cost=cost,
        W2_paper=math.sqrt(max(cost, 0.0)),
        W2_conventional=math.sqrt(max(2.0 * cost, 0.0)),
        termination=reason,
        theta=theta,
    )
    return st, du, report


@dataclass
class Solution:
    cost: float
    W2_paper: float
    W2_conventional: float
    density: np.ndarray  # (N, nV), staggered times
    momentum: np.ndarray  # (N + 1, nT, 3), centered times
    times: np.ndarray


def extract_solution(problem: Problem, st: PrimalState, du: DualState) -> Solution:
    cost = transport_cost(problem, st.phi)
    return Solution(
        cost=cost,
        W2_paper=math.sqrt(max(cost, 0.0)),
        W2_conventional=math.sqrt(max(2.0 * cost, 0.0)),
        density=du.alpha1.copy(),
        momentum=du.alpha2.copy(),
        times=problem.grid.staggered_times,
    )


def mass_per_slice(problem: Problem, density: np.ndarray) -> np.ndarray:
    return density @ problem.geometry.vertex_area
