"""Self-checks of the discrete operators on a given mesh."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretization import Discretization, normalize_density
from .linsolve import PhiSolver
from .mesh import MeshGeometry, TriMesh, compute_geometry
from .socp import (
    ConeLayout,
    DecoupledVec,
    apply_copy,
    apply_copy_adjoint,
    qcoeff_diagonal,
    z_weights,
)
from .solver import Problem, compute_residuals, constraint_value, init_state, step


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.name:<22} max error {self.error:.3e}  (tol {self.tol:.0e})"


@dataclass
class DiagnosticsReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(scale, 1e-300)


def reference_grad_transpose(geom: MeshGeometry, Bv: np.ndarray) -> np.ndarray:
    """sum_f hat_grad[f, i] . B[f] scattered to faces[f, i]; written independently of G."""
    out = np.zeros((Bv.shape[0], geom.mesh.n_vertices))
    for i in range(3):
        contrib = np.einsum("kfd,fd->kf", Bv, geom.hat_grad[:, i, :])
        for k in range(Bv.shape[0]):
            np.add.at(out[k], geom.mesh.faces[:, i], contrib[k])
    return out


def cone_membership_pair(disc: Discretization, layout: ConeLayout, A: np.ndarray, B: np.ndarray):
    """(f(q) <= 0, gathered copy(q) + d in the cone), both (N, nV) boolean."""
    direct = constraint_value(disc, A, B) <= 0.0
    cone = layout.feasible(layout.gather(apply_copy(A, B)))
    return direct, cone


def random_q(rng, N: int, nV: int, nT: int, scale: float = 1.0):
    A = rng.uniform(-1.0, 0.25, size=(N, nV))
    B = scale * rng.standard_normal((N + 1, nT, 3))
    return A, B


def qcoeff_dense(disc: Discretization) -> np.ndarray:
    """Dense Diag(W_q) + (BF)^T W_z (BF) by applying the operators to unit vectors."""
    N, nV, nT = disc.N, disc.nV, disc.nT
    nA, nB = N * nV, (N + 1) * nT * 3
    w = disc.weights
    M = np.zeros((nA + nB, nA + nB))
    wq = np.concatenate([np.tile(w.vertex, N), np.repeat(np.tile(w.face, N + 1), 3)])
    for j in range(nA + nB):
        e = np.zeros(nA + nB)
        e[j] = 1.0
        A, B = e[:nA].reshape(N, nV), e[nA:].reshape(N + 1, nT, 3)
        aA, aB = apply_copy_adjoint(apply_copy(A, B, shift=False), w)
        M[:, j] = np.concatenate([aA.ravel(), aB.ravel()])
        M[j, j] += wq[j]
    return M


def run_diagnostics(
    mesh: TriMesh,
    N: int = 4,
    trials: int = 100,
    cone_trials: int = 100,
    seed: int = 0,
    corrupt: str | None = None,
) -> DiagnosticsReport:
    """Operator identity suite; ``corrupt="hat_grad"`` perturbs one forward
    gradient entry as a negative control."""
    rng = np.random.default_rng(seed)
    geom = compute_geometry(mesh)
    disc = Discretization(geom, N)
    nV, nT = disc.nV, disc.nT
    w = disc.weights
    rep = DiagnosticsReport()
    solver = PhiSolver(disc)
    if corrupt == "hat_grad":
        disc.G = disc.G.copy()
        disc.G.data[0] += 0.5
    elif corrupt is not None:
        raise ValueError(f"unknown corruption {corrupt!r}")

    # hat gradients: partition of unity and exact gradients of linear functions
    pu = np.abs(geom.hat_grad.sum(axis=1)).max() * np.sqrt(geom.face_area.max())
    X = mesh.vertices
    e1, e2 = X[mesh.faces[:, 1]] - X[mesh.faces[:, 0]], X[mesh.faces[:, 2]] - X[mesh.faces[:, 0]]
    nrm = np.cross(e1, e2)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    a = rng.standard_normal(3)
    tangential = a - (nrm @ a)[:, None] * nrm
    lin = disc.grad_s((X @ a)[None, :])[0]
    rep.checks.append(CheckResult("hat_gradient", max(pu, np.abs(lin - tangential).max() / np.linalg.norm(a)), 1e-10))

    errs = {k: 0.0 for k in ("adjoint_grad", "adjoint_interp_t", "adjoint_interp_s", "adjoint_copy", "adjoint_T")}
    layout = ConeLayout(disc)
    zw = z_weights(disc).flat
    for _ in range(trials):
        phi = rng.standard_normal((N + 1, nV))
        A = rng.standard_normal((N, nV))
        B = rng.standard_normal((N + 1, nT, 3))
        GA, GB = disc.apply_grad(phi)
        lhs = np.vdot(GA, A) + np.vdot(GB, B)
        ref = disc.grad_t_transpose(A) + reference_grad_transpose(geom, B)
        rhs = np.vdot(phi, ref)
        scale = np.sqrt(np.vdot(GA, GA) + np.vdot(GB, GB)) * np.sqrt(np.vdot(A, A) + np.vdot(B, B))
        errs["adjoint_grad"] = max(errs["adjoint_grad"], _rel(lhs, rhs, scale))

        lt = disc.interp_t(phi)
        e = _rel(disc.inner(lt, A, "tV"), disc.inner(phi, disc.interp_t_adjoint(A), "tV"),
                 disc.norm(lt) * disc.norm(A))
        errs["adjoint_interp_t"] = max(errs["adjoint_interp_t"], e)

        y = rng.standard_normal((N + 1, nT))
        ls = disc.interp_s(phi)
        lhs = float((ls * y).sum(axis=0) @ w.face)
        rhs = disc.inner(phi, disc.interp_s_adjoint(y), "tV")
        scale = np.sqrt(float((ls * ls).sum(axis=0) @ w.face) * float((y * y).sum(axis=0) @ w.face))
        errs["adjoint_interp_s"] = max(errs["adjoint_interp_s"], _rel(lhs, rhs, scale))

        zeta = DecoupledVec(rng.standard_normal(len(zw)), N, nV, nT)
        c = apply_copy(A, B, shift=False)
        aA, aB = apply_copy_adjoint(zeta, w)
        lhs = float(zw @ (c.flat * zeta.flat))
        rhs = np.vdot(A, aA) + np.vdot(B, aB)
        scale = np.sqrt(float(zw @ c.flat**2) * float(zw @ zeta.flat**2))
        errs["adjoint_copy"] = max(errs["adjoint_copy"], _rel(lhs, rhs, scale))

        yv = rng.standard_normal((N, layout.slice_size))
        gz = layout.gather(zeta)
        lhs = np.vdot(gz, yv)
        rhs = np.vdot(zeta.flat, layout.scatter(yv * layout.scale0**2).flat)
        errs["adjoint_T"] = max(errs["adjoint_T"], _rel(lhs, rhs, np.linalg.norm(gz) * np.linalg.norm(yv)))
    for k, v in errs.items():
        rep.checks.append(CheckResult(k, v, 1e-12))

    # gather/scatter: a permutation with an exactly invertible diagonal
    perm_ok = np.array_equal(np.sort(layout.index), np.arange(layout.total_size))
    z = DecoupledVec(rng.standard_normal(layout.total_size), N, nV, nT)
    perm_ok &= np.array_equal(layout.scatter(layout.gather(z, False), scaled=False).flat, z.flat)
    back = layout.scatter(layout.gather(z))
    # one rounding in the diagonal scale, at most
    rt = np.abs((back.flat - z.flat) / z.flat).max()
    rep.checks.append(CheckResult("T_roundtrip", rt if perm_ok else np.inf, np.finfo(float).eps))

    # the cone form and the direct constraint agree cone by cone
    mism = 0
    for _ in range(cone_trials):
        A, B = random_q(rng, N, nV, nT, scale=rng.uniform(0.1, 2.0))
        d, c = cone_membership_pair(disc, layout, A, B)
        mism += int((d != c).sum())
    rep.checks.append(CheckResult("cone_equivalence", float(mism), 0.0))

    # qcoeff against a dense assembly; on a single face, plus this mesh if small
    single = Discretization(compute_geometry(TriMesh(np.eye(3), np.array([[0, 1, 2]]))), N)
    worst = 0.0
    targets = [single] + ([disc] if N * nV + (N + 1) * nT * 3 <= 2500 else [])
    for dd in targets:
        M = qcoeff_dense(dd)
        dA, dB = qcoeff_diagonal(dd.weights, dd.N)
        diag = np.concatenate([dA.ravel(), dB.ravel()])
        off = np.abs(M - np.diag(np.diag(M))).max()
        worst = max(worst, off, np.abs(np.diag(M) - diag).max() / diag.max())
    rep.checks.append(CheckResult("qcoeff_diagonal", worst, 1e-14))

    # potential solve roundtrip
    res = 0.0
    mean = 0.0
    for _ in range(min(trials, 20)):
        r = rng.standard_normal((N + 1, nV))
        r -= r.mean()
        phi = solver.solve(r)
        res = max(res, np.linalg.norm(solver.apply(phi) - r) / np.linalg.norm(r))
        mean = max(mean, abs(float(geom.vertex_area @ phi.sum(axis=0))) / np.abs(phi).max())
    pd = all(solver.mode_is_positive_definite(j) for j in range(N + 1))
    rep.checks.append(CheckResult("phi_roundtrip", res if pd else np.inf, 1e-10))
    rep.checks.append(CheckResult("phi_mean_zero", mean, 1e-12))

    # exact KKT point for mu0 = muN, and one step from it
    mu = normalize_density(rng.uniform(0.5, 1.5, nV), geom)
    prob = Problem(geom, N, mu, mu)
    prob.disc = disc
    st, du = exact_kkt_point(prob)
    r0 = compute_residuals(prob, st, du).eta_dot
    step(prob, st, du, 1.0, 1.9)
    r1 = compute_residuals(prob, st, du).eta_dot
    rep.checks.append(CheckResult("exact_kkt", max(r0, r1), 1e-12))
    return rep


def exact_kkt_point(problem: Problem):
    """phi = 0, q = 0, z = d, alpha1 = mu, alpha2 = 0, beta = (mu/2, 0, -mu/2).

    Valid when both end densities equal ``mu`` (= problem.mu0).
    """
    st, du = init_state(problem)
    mu = problem.mu0
    st.z = apply_copy(st.A, st.B)
    du.alpha1[:] = mu
    du.beta.z1[:] = 0.5 * mu
    du.beta.z3[:] = -0.5 * mu
    return st, du
