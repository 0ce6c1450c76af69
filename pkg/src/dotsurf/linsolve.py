"""Space-time Poisson solve for the potential update.

The operator ``A_t^T W A_t + A_s^T W A_s`` equals ``(M_t ⊗ W_V + I ⊗ L) / N``
where ``M_t = N^2 tridiag(-1; 1, 2, ..., 2, 1; -1)`` is the Neumann second
difference in time. A cosine transform in time diagonalizes ``M_t`` and
leaves one sparse SPD system ``lambda_j W_V + L`` per temporal mode; the
zero mode is singular (constants) and is solved with vertex 0 pinned.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .discretization import Discretization


def temporal_matrix(N: int) -> np.ndarray:
    """Dense M_t = A_t^T A_t for the scalar time difference."""
    main = np.full(N + 1, 2.0)
    main[0] = main[-1] = 1.0
    return N**2 * (np.diag(main) - np.diag(np.ones(N), 1) - np.diag(np.ones(N), -1))


def temporal_basis(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenpairs of M_t: DCT-II vectors, ascending eigenvalues."""
    j = np.arange(N + 1)
    lam = 4.0 * N**2 * np.sin(j * np.pi / (2.0 * (N + 1))) ** 2
    i = np.arange(N + 1)
    Q = np.cos(np.pi * np.outer(i + 0.5, j) / (N + 1))
    Q[:, 0] *= np.sqrt(1.0 / (N + 1))
    Q[:, 1:] *= np.sqrt(2.0 / (N + 1))
    lam[0] = 0.0
    return Q, lam


def _factor(M: sparse.spmatrix):
    return spla.splu(
        M.tocsc(),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


class PhiSolver:
    """Factor-once solver for the potential subproblem.

    None of the factored matrices depend on the penalty parameter, so they
    are built once per (mesh, N).
    """

    def __init__(self, disc: Discretization):
        self.disc = disc
        self.N = N = disc.N
        self.Q, self.lam = temporal_basis(N)
        self.L = disc.assemble_stiffness()
        self.vertex_area = disc.geometry.vertex_area
        WV = sparse.diags(self.vertex_area)
        self.mode_matrices = [(lam * WV + self.L).tocsc() for lam in self.lam]
        self._lu0 = _factor(self.mode_matrices[0][1:, 1:])
        self._lu = [None] + [_factor(M) for M in self.mode_matrices[1:]]
        self.last_discarded = 0.0

    def mode_is_positive_definite(self, j: int) -> bool:
        """Symmetric-mode LU without pivoting has a positive U diagonal iff SPD."""
        lu = self._lu0 if j == 0 else self._lu[j]
        return bool(np.all(lu.U.diagonal() > 0))

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """The space-time operator itself (for residual checks)."""
        disc = self.disc
        w = disc.weights
        A, B = disc.apply_grad(phi)
        return disc.apply_grad_transpose(A * w.vertex, B * w.face[:, None])

    def solve(self, rhs: np.ndarray, return_discarded: bool = False):
        """Solve for phi with weighted mean zero.

        The part of ``rhs`` along the global constant (outside the range) is
        dropped; its Euclidean magnitude is kept in ``last_discarded``.
        """
        N = self.N
        rhat = self.Q.T @ rhs
        rhat *= N
        r0 = rhat[0]
        mean = r0.mean()
        # rhs . 1 / ||1|| over the whole space-time vector
        self.last_discarded = abs(mean) * np.sqrt(r0.size) / N
        r0 = r0 - mean
        out = np.empty_like(rhat)
        out[0, 0] = 0.0
        out[0, 1:] = self._lu0.solve(r0[1:])
        out[0] -= (self.vertex_area @ out[0]) / self.vertex_area.sum()
        for j in range(1, N + 1):
            out[j] = self._lu[j].solve(rhat[j])
        phi = self.Q @ out
        if return_discarded:
            return phi, self.last_discarded
        return phi
