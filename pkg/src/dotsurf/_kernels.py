"""Fused single-pass loops over z-space for the hot part of an iteration.

These compute the same quantities as the array versions in ``socp`` and
``solver`` without materializing z-sized temporaries. The flat layout is
that of ``socp.DecoupledVec``: z1 (N, nV), z2 (6, N, nT, 3), z3 (N, nV).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_INV_SQRT3 = 1.0 / math.sqrt(3.0)


@njit(cache=True)
def z_update(A, B, beta, z, inv_s, star_ptr, star_face, star_local, face_area, vertex_area):
    """z = T^{-1} Proj(T (copy(q) + d - beta * inv_s)), cone by cone."""
    N, nV = A.shape
    nT = B.shape[1]
    off2 = N * nV
    off3 = off2 + 18 * N * nT
    blk = N * nT * 3
    for k in range(N):
        for v in range(nV):
            i1 = k * nV + v
            x1 = 1.0 - A[k, v] - beta[i1] * inv_s
            x3 = 1.0 + A[k, v] - beta[off3 + i1] * inv_s
            acc = x3 * x3
            iv = 1.0 / vertex_area[v]
            for p in range(star_ptr[v], star_ptr[v + 1]):
                f = star_face[p]
                r = face_area[f] * iv
                for h in range(2):
                    base = off2 + (star_local[p] + 3 * h) * blk + (k * nT + f) * 3
                    for d in range(3):
                        xv = B[k + h, f, d] * _INV_SQRT3 - beta[base + d] * inv_s
                        acc += r * xv * xv
            nrm = math.sqrt(acc)
            if nrm <= x1:
                new0 = x1
                gain = 1.0
            elif nrm <= -x1:
                new0 = 0.0
                gain = 0.0
            else:
                new0 = 0.5 * (x1 + nrm)
                gain = new0 / nrm
            z[i1] = new0
            z[off3 + i1] = gain * x3
            for p in range(star_ptr[v], star_ptr[v + 1]):
                f = star_face[p]
                for h in range(2):
                    base = off2 + (star_local[p] + 3 * h) * blk + (k * nT + f) * 3
                    for d in range(3):
                        xv = B[k + h, f, d] * _INV_SQRT3 - beta[base + d] * inv_s
                        z[base + d] = gain * xv


@njit(cache=True)
def beta_update(A, B, z, beta, ts):
    """beta += ts * (z - copy(q) - d)."""
    N, nV = A.shape
    nT = B.shape[1]
    off2 = N * nV
    off3 = off2 + 18 * N * nT
    blk = N * nT * 3
    for k in range(N):
        for v in range(nV):
            i = k * nV + v
            beta[i] += ts * (z[i] - (1.0 - A[k, v]))
            beta[off3 + i] += ts * (z[off3 + i] - (1.0 + A[k, v]))
    for b in range(6):
        h = b // 3
        for k in range(N):
            for f in range(nT):
                for d in range(3):
                    j = off2 + b * blk + (k * nT + f) * 3 + d
                    beta[j] += ts * (z[j] - B[k + h, f, d] * _INV_SQRT3)


@njit(cache=True)
def copy_residual_sq(A, B, z, face_area, vertex_area, N_steps):
    """Weighted squared norm of z - copy(q) - d."""
    N, nV = A.shape
    nT = B.shape[1]
    off2 = N * nV
    off3 = off2 + 18 * N * nT
    blk = N * nT * 3
    acc = 0.0
    for k in range(N):
        for v in range(nV):
            i = k * nV + v
            r1 = z[i] - (1.0 - A[k, v])
            r3 = z[off3 + i] - (1.0 + A[k, v])
            acc += vertex_area[v] * (r1 * r1 + r3 * r3)
    for b in range(6):
        h = b // 3
        for k in range(N):
            for f in range(nT):
                s = 0.0
                for d in range(3):
                    j = off2 + b * blk + (k * nT + f) * 3 + d
                    r = z[j] - B[k + h, f, d] * _INV_SQRT3
                    s += r * r
                acc += face_area[f] * s
    return acc / N_steps


@njit(cache=True)
def b_update(z, beta, inv_s, GB, alpha2, B, face_w, qB, ts):
    """B-block of the q-step and its multiplier update, in one pass.

    B = (w_f (GB + alpha2 * inv_s) + w_f sum_copies(z - d + beta * inv_s) / sqrt 3) / qB
    alpha2 += ts * (GB - B)
    """
    Np1, nT, _ = GB.shape
    N = Np1 - 1
    nV = (z.size - 18 * N * nT) // (2 * N)
    off2 = N * nV
    blk = N * nT * 3
    for kc in range(Np1):
        for f in range(nT):
            wf = face_w[f]
            for d in range(3):
                s = 0.0
                if kc < N:
                    for b in range(3):
                        j = off2 + b * blk + (kc * nT + f) * 3 + d
                        s += z[j] + beta[j] * inv_s
                if kc > 0:
                    for b in range(3, 6):
                        j = off2 + b * blk + ((kc - 1) * nT + f) * 3 + d
                        s += z[j] + beta[j] * inv_s
                g = GB[kc, f, d]
                a2 = alpha2[kc, f, d]
                bn = wf * (g + a2 * inv_s + s * _INV_SQRT3) / qB[kc, f, d]
                B[kc, f, d] = bn
                alpha2[kc, f, d] = a2 + ts * (g - bn)


@njit(cache=True)
def a_rhs(z, beta, inv_s, N, nV):
    """A-part of the copy-adjoint of zeta = z - d + beta * inv_s (unweighted)."""
    nT = (z.size - 2 * N * nV) // (18 * N)
    off3 = N * nV + 18 * N * nT
    out = np.empty((N, nV))
    for k in range(N):
        for v in range(nV):
            i = k * nV + v
            out[k, v] = (z[off3 + i] - z[i]) + (beta[off3 + i] - beta[i]) * inv_s
    return out
