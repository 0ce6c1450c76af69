"""Decoupled second-order-cone form of the discrete transport constraint.

The constraint ``A + 1/2 L_t L_s^*(|B|^2) <= 0`` at each staggered time and
vertex is rewritten as membership of a gathered vector in a second-order
cone. ``z = copy(q) + d`` stacks

* ``z1 = 1 - A`` and ``z3 = 1 + A``                      (N, nV) each
* ``z2[b]``, b = 0..5, copies of ``B / sqrt(3)``          (6, N, nT, 3)

where blocks 0..2 hold B at the centered time just before each staggered
time and blocks 3..5 the one just after. Block ``b`` of face ``f`` belongs
to the cone of vertex ``faces[f, b % 3]``.

Everything is stored in one flat vector of length ``2 N nV + 18 N nT``.
"""

from __future__ import annotations

import numpy as np

from .discretization import Discretization, Weights

INV_SQRT3 = 1.0 / np.sqrt(3.0)


class DecoupledVec:
    """Flat z-space vector with named views onto its three blocks."""

    __slots__ = ("flat", "N", "nV", "nT")

    def __init__(self, flat: np.ndarray, N: int, nV: int, nT: int):
        self.flat = flat
        self.N, self.nV, self.nT = N, nV, nT

    @classmethod
    def zeros(cls, N, nV, nT):
        return cls(np.zeros(z_size(N, nV, nT)), N, nV, nT)

    @classmethod
    def like(cls, other: "DecoupledVec", flat: np.ndarray):
        return cls(flat, other.N, other.nV, other.nT)

    @property
    def z1(self):
        return self.flat[: self.N * self.nV].reshape(self.N, self.nV)

    @property
    def z2(self):
        n1 = self.N * self.nV
        return self.flat[n1 : n1 + 18 * self.N * self.nT].reshape(6, self.N, self.nT, 3)

    @property
    def z3(self):
        return self.flat[self.N * self.nV + 18 * self.N * self.nT :].reshape(self.N, self.nV)

    def copy(self):
        return DecoupledVec(self.flat.copy(), self.N, self.nV, self.nT)


def z_size(N: int, nV: int, nT: int) -> int:
    return 2 * N * nV + 18 * N * nT


def shift_vector(N: int, nV: int, nT: int) -> DecoupledVec:
    d = DecoupledVec.zeros(N, nV, nT)
    d.z1[:] = 1.0
    d.z3[:] = 1.0
    return d


def apply_copy(A: np.ndarray, B: np.ndarray, shift: bool = True, out: DecoupledVec | None = None) -> DecoupledVec:
    """z = copy(q) (+ d when ``shift``)."""
    N, nV = A.shape
    nT = B.shape[1]
    z = out if out is not None else DecoupledVec(np.empty(z_size(N, nV, nT)), N, nV, nT)
    c = 1.0 if shift else 0.0
    np.subtract(c, A, out=z.z1)
    np.add(c, A, out=z.z3)
    z2 = z.z2
    np.multiply(B[:-1], INV_SQRT3, out=z2[0])
    np.multiply(B[1:], INV_SQRT3, out=z2[3])
    z2[1] = z2[0]
    z2[2] = z2[0]
    z2[4] = z2[3]
    z2[5] = z2[3]
    return z


def apply_copy_adjoint(zeta: DecoupledVec, weights: Weights | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Transpose of the linear part of ``apply_copy`` applied to ``W zeta``.

    With ``weights=None`` W is the identity; otherwise it is the z-space
    diagonal (|v|/N on the vertex blocks, |f|/N on the face blocks).
    """
    N, nV, nT = zeta.N, zeta.nV, zeta.nT
    outA = zeta.z3 - zeta.z1
    z2 = zeta.z2
    plus = z2[0] + z2[1] + z2[2]
    minus = z2[3] + z2[4] + z2[5]
    outB = np.zeros((N + 1, nT, 3))
    outB[:-1] += plus
    outB[1:] += minus
    outB *= INV_SQRT3
    if weights is not None:
        outA *= weights.vertex
        outB *= weights.face[:, None]
    return outA, outB


def qcoeff_diagonal(weights: Weights, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal of Diag(W_q) + F*B* W_z B F, split into (A, B) blocks.

    The A block is 3|v|/N; the B block is |f|/N times (2, 3, ..., 3, 2) in time.
    """
    dA = np.broadcast_to(3.0 * weights.vertex, (N, len(weights.vertex))).copy()
    profile = np.full(N + 1, 2.0)
    profile[0] = profile[-1] = 1.0
    dB = (1.0 + profile)[:, None] * weights.face[None, :]
    dB = np.repeat(dB[:, :, None], 3, axis=2)
    return dA, dB


def z_weights(disc: Discretization) -> DecoupledVec:
    """The z-space inner-product diagonal as a flat vector."""
    w = DecoupledVec.zeros(disc.N, disc.nV, disc.nT)
    w.z1[:] = disc.weights.vertex
    w.z3[:] = disc.weights.vertex
    w.z2[:] = disc.weights.face[None, None, :, None]
    return w


class ConeLayout:
    """Gather map from z-space to the product of per-(time, vertex) cones.

    Cones are ordered time-major, then by vertex. The cone of vertex ``v``
    has ``2 (3 |T_v| + 1)`` entries: ``z1``, then the face copies for
    T_{v,1}, T_{v,2}, T_{v,3} (before), the same for (after), then ``z3``.
    Face entries are scaled by sqrt(|f| / |v|); this scaling turns the
    weighted z-space norm into |v|/N times the Euclidean norm on each cone.

    One time slice of the cone product is described by ``index0``/``scale0``
    (length S = 2 nV + 18 nT); slice k reads z at ``index0 + k * stride0``.
    """

    def __init__(self, disc: Discretization):
        geom = disc.geometry
        N, nV, nT = disc.N, disc.nV, disc.nT
        faces = disc.faces
        self.N, self.nV, self.nT = N, nV, nT
        n1 = N * nV
        off2 = n1
        off3 = n1 + 18 * N * nT

        # records: (vertex, group, face, coord) -> z index at k = 0, stride, scale
        b, f, d = np.meshgrid(np.arange(6), np.arange(nT), np.arange(3), indexing="ij")
        b, f, d = b.ravel(), f.ravel(), d.ravel()
        vert2 = faces[f, b % 3]
        idx2 = off2 + b * (N * nT * 3) + f * 3 + d
        scale2 = np.sqrt(geom.face_area[f] / geom.vertex_area[vert2])

        v = np.arange(nV)
        vert = np.concatenate([v, vert2, v])
        group = np.concatenate([np.zeros(nV, int), 1 + b, np.full(nV, 7)])
        face_key = np.concatenate([np.zeros(nV, int), f, np.zeros(nV, int)])
        coord = np.concatenate([np.zeros(nV, int), d, np.zeros(nV, int)])
        index = np.concatenate([v, idx2, off3 + v])
        stride = np.concatenate([np.full(nV, nV), np.full(18 * nT, 3 * nT), np.full(nV, nV)])
        scale = np.concatenate([np.ones(nV), scale2, np.ones(nV)])

        order = np.lexsort((coord, face_key, group, vert))
        self.index0 = index[order]
        self.stride0 = stride[order]
        self.scale0 = scale[order]
        self.dims = 2 * (3 * geom.degree + 1)
        self.starts = np.concatenate([[0], np.cumsum(self.dims)[:-1]])
        self.slice_size = 2 * nV + 18 * nT
        self.index = (self.index0[None, :] + np.arange(N)[:, None] * self.stride0[None, :]).ravel()

    @property
    def total_size(self) -> int:
        return self.N * self.slice_size

    def cone_slices(self):
        """(time, vertex, slice into a gathered row) for every cone."""
        for k in range(self.N):
            for v in range(self.nV):
                yield k, v, slice(self.starts[v], self.starts[v] + self.dims[v])

    def gather(self, z: DecoupledVec, scaled: bool = True) -> np.ndarray:
        """y = T z as an (N, S) array, one row per staggered time.

        With ``scaled=False`` only the permutation is applied.
        """
        y = z.flat[self.index].reshape(self.N, self.slice_size)
        if scaled:
            y *= self.scale0
        return y

    def scatter(self, y: np.ndarray, out: DecoupledVec | None = None, scaled: bool = True) -> DecoupledVec:
        """z = T^{-1} y (or the inverse permutation alone)."""
        if out is None:
            out = DecoupledVec.zeros(self.N, self.nV, self.nT)
        out.flat[self.index] = (y / self.scale0 if scaled else y).ravel()
        return out

    def project(self, y: np.ndarray) -> np.ndarray:
        """In-place Euclidean projection of every cone in a gathered array."""
        y0 = y[:, self.starts].copy()
        sq = np.square(y)
        sq[:, self.starts] = 0.0
        nrm = np.sqrt(np.add.reduceat(sq, self.starts, axis=1))
        new0, gain = _soc_gain(y0, nrm)
        y *= np.repeat(gain, self.dims, axis=1)
        y[:, self.starts] = new0
        return y

    def feasible(self, y: np.ndarray, atol: float = 0.0) -> np.ndarray:
        """Boolean (N, nV): y0 >= ||ybar|| - atol for each cone."""
        sq = np.square(y)
        sq[:, self.starts] = 0.0
        nrm = np.sqrt(np.add.reduceat(sq, self.starts, axis=1))
        return y[:, self.starts] >= nrm - atol


def _soc_gain(y0: np.ndarray, nrm: np.ndarray):
    """Projected head and tail scaling for cones with head y0 and tail norm nrm."""
    inside = nrm <= y0
    polar = nrm <= -y0
    a = 0.5 * (y0 + nrm)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(inside, 1.0, np.where(polar, 0.0, a / nrm))
    new0 = np.where(inside, y0, np.where(polar, 0.0, a))
    return new0, gain


def soc_project(y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {(y0, ybar): y0 >= ||ybar||}."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("cone vector must be 1-D with at least 2 entries")
    new0, gain = _soc_gain(y[0], np.linalg.norm(y[1:]))
    out = y * gain
    out[0] = new0
    return out


def cone_feasibility(A: np.ndarray, B: np.ndarray, layout: ConeLayout, atol: float = 0.0) -> np.ndarray:
    """Cone membership of the gathered copy of q, per (staggered time, vertex)."""
    return layout.feasible(layout.gather(apply_copy(A, B)), atol=atol)
