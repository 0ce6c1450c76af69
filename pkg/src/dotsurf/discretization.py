"""Space-time discretization: gradient, interpolation, inner products, weights.

Field shapes, for ``N`` time steps on a mesh with ``nV`` vertices and ``nT``
faces::

    centered vertex field    (N + 1, nV)      phi, cost c
    staggered vertex field   (N, nV)          A, alpha_1
    centered face field      (N + 1, nT, 3)   B, alpha_2
    staggered face field     (N, nT, 3)       copies of B

Row ``j`` of a staggered field sits at time ``(j + 1/2) / N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .mesh import MeshGeometry


@dataclass(frozen=True)
class TimeGrid:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("number of time steps N must be an integer >= 2")

    @property
    def step(self) -> float:
        return 1.0 / self.N

    @property
    def centered_times(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    @property
    def staggered_times(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) / self.N


@dataclass(frozen=True)
class Weights:
    """Diagonal inner-product weights: dual-cell and face areas divided by N.

    The same per-vertex (per-face) factor serves both the centered and the
    staggered grids, so only the spatial diagonals are stored.
    """

    vertex: np.ndarray  # |v| / N
    face: np.ndarray  # |f| / N

    def scaled(self, factor: float) -> "Weights":
        return Weights(self.vertex * factor, self.face * factor)


class DensityError(ValueError):
    pass


def normalize_density(raw, geometry: MeshGeometry, mass_floor: float = 0.0) -> np.ndarray:
    """Clamp negatives, add a uniform floor and rescale to unit discrete mass."""
    mu = np.maximum(np.asarray(raw, dtype=float), 0.0) + mass_floor
    if mu.shape != (geometry.mesh.n_vertices,):
        raise DensityError(f"density has shape {mu.shape}, expected ({geometry.mesh.n_vertices},)")
    mass = float(geometry.vertex_area @ mu)
    if not mass > 0.0:
        raise DensityError("zero mass density")
    return mu / mass


def build_cost(mu0: np.ndarray, muN: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Cost vector c with <phi, c>_{t,V} = sum |v| phi_0 mu0 - sum |v| phi_N muN."""
    c = np.zeros((grid.N + 1, len(mu0)))
    c[0] = grid.N * mu0
    c[-1] = -grid.N * muN
    return c


class Discretization:
    """Discrete operators for one mesh and time grid."""

    def __init__(self, geometry: MeshGeometry, grid: TimeGrid | int):
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(int(grid))
        self.geometry = geometry
        self.grid = grid
        self.N = grid.N
        mesh = geometry.mesh
        self.nV, self.nT = mesh.n_vertices, mesh.n_faces
        self.faces = mesh.faces
        self.weights = Weights(geometry.vertex_area / self.N, geometry.face_area / self.N)

        nT, nV = self.nT, self.nV
        # G[3f + d, faces[f, i]] = hat_grad[f, i, d]
        rows = (3 * np.arange(nT)[:, None, None] + np.arange(3)[None, None, :]).repeat(3, axis=1)
        cols = np.broadcast_to(self.faces[:, :, None], (nT, 3, 3))
        self.G = sparse.csr_matrix(
            (geometry.hat_grad.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * nT, nV)
        )
        self.GT = self.G.T.tocsr()
        # face-vertex incidence, (nV, nT)
        self.incidence = sparse.csr_matrix(
            (np.ones(3 * nT), (self.faces.ravel(), np.repeat(np.arange(nT), 3))), shape=(nV, nT)
        )

    # -- shapes -----------------------------------------------------------

    def zeros_centered(self):
        return np.zeros((self.N + 1, self.nV))

    def zeros_staggered(self):
        return np.zeros((self.N, self.nV))

    def zeros_face(self):
        return np.zeros((self.N + 1, self.nT, 3))

    # -- gradient -----------------------------------------------------------

    def grad_t(self, phi: np.ndarray) -> np.ndarray:
        return self.N * (phi[1:] - phi[:-1])

    def grad_s(self, phi: np.ndarray) -> np.ndarray:
        return (self.G @ phi.T).T.reshape(phi.shape[0], self.nT, 3)

    def apply_grad(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Discrete space-time gradient, phi -> (A, B)."""
        return self.grad_t(phi), self.grad_s(phi)

    def grad_t_transpose(self, A: np.ndarray) -> np.ndarray:
        out = np.empty((A.shape[0] + 1, A.shape[1]))
        out[0] = -A[0]
        out[1:-1] = A[:-1] - A[1:]
        out[-1] = A[-1]
        out *= self.N
        return out

    def grad_s_transpose(self, Bv: np.ndarray) -> np.ndarray:
        return (self.GT @ Bv.reshape(Bv.shape[0], 3 * self.nT).T).T

    def apply_grad_transpose(self, A: np.ndarray, Bv: np.ndarray) -> np.ndarray:
        """Euclidean transpose of ``apply_grad``; weights are applied by the caller."""
        return self.grad_t_transpose(A) + self.grad_s_transpose(Bv)

    # -- interpolation ------------------------------------------------------

    def interp_t(self, phi: np.ndarray) -> np.ndarray:
        return 0.5 * (phi[1:] + phi[:-1])

    def interp_t_adjoint(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros((psi.shape[0] + 1,) + psi.shape[1:])
        out[:-1] += psi
        out[1:] += psi
        return 0.5 * out

    def interp_s(self, phi: np.ndarray) -> np.ndarray:
        """Average of the three vertex values, per face."""
        return phi[:, self.faces].mean(axis=-1)

    def interp_s_adjoint(self, y: np.ndarray) -> np.ndarray:
        """(1 / 3|v|) sum_{f in T_v} |f| y_f, per time slice."""
        fw = y * self.geometry.face_area
        return (self.incidence @ fw.T).T / (3.0 * self.geometry.vertex_area)

    # -- inner products -----------------------------------------------------

    def inner(self, a: np.ndarray, b: np.ndarray, kind: str = "tV") -> float:
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
        if kind == "tV":
            w = self.weights.vertex
        elif kind == "tT":
            w = self.weights.face
        else:
            raise ValueError(f"unknown inner product kind {kind!r}")
        if a.ndim == 3:
            prod = np.einsum("kfd,kfd->kf", a, b)
        else:
            prod = a * b
        return float(prod.sum(axis=0) @ w)

    def norm(self, a: np.ndarray, kind: str = "tV") -> float:
        return np.sqrt(self.inner(a, a, kind))

    # -- stiffness ----------------------------------------------------------

    def assemble_stiffness(self) -> sparse.csc_matrix:
        """L_uv = sum_{f ∋ u,v} |f| (grad h_u . grad h_v)."""
        wt = sparse.diags(np.repeat(self.geometry.face_area, 3))
        L = (self.GT @ wt @ self.G).tocsc()
        L = 0.5 * (L + L.T)
        return L.tocsc()
