"""Triangle meshes: loading, generation, validation and FEM geometry."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

log = logging.getLogger(__name__)

# hat-function values drop 1 -> 0 along the two edges leaving local vertex 1
_REF_GRAD = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
_DEGENERATE_RTOL = 1e-14
_REGULARITY_WARN = 1e-6


class MeshError(ValueError):
    """Raised for malformed, degenerate or unsupported meshes."""


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (nV, 3) float
    faces: np.ndarray  # (nT, 3) int, row order fixes local vertex positions

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) == 0:
            raise MeshError("vertices must be a non-empty (n, 3) array")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) == 0:
            raise MeshError("faces must be a non-empty (m, 3) array")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise MeshError("face with repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


@dataclass(frozen=True)
class MeshGeometry:
    """Per-face and per-vertex quantities of a piecewise-linear FEM on a mesh.

    ``hat_grad[f, i]`` is the gradient of the hat function of the vertex stored
    at local position ``i`` of face ``f``. The star of vertex ``v`` is
    ``star_face[star_ptr[v]:star_ptr[v+1]]`` with matching ``star_local``,
    sorted by local index then face, so each run of equal local index is one
    of the sets T_{v,i}.
    """

    mesh: TriMesh
    face_area: np.ndarray
    vertex_area: np.ndarray
    hat_grad: np.ndarray  # (nT, 3, 3): face, local vertex, xyz
    star_ptr: np.ndarray
    star_face: np.ndarray
    star_local: np.ndarray

    @property
    def degree(self) -> np.ndarray:
        """|T_v| for every vertex."""
        return np.diff(self.star_ptr)

    def star(self, v: int) -> list[tuple[int, int]]:
        s = slice(self.star_ptr[v], self.star_ptr[v + 1])
        return list(zip(self.star_face[s].tolist(), self.star_local[s].tolist()))


@dataclass
class MeshDiagnostics:
    n_vertices: int
    n_faces: int
    n_components: int
    max_edge_valence: int
    n_boundary_edges: int
    min_regularity: float
    duplicate_faces: int
    warnings: list[str] = field(default_factory=list)

    @property
    def connected(self) -> bool:
        return self.n_components == 1

    @property
    def manifold(self) -> bool:
        return self.max_edge_valence <= 2

    def summary(self) -> str:
        lines = [
            f"vertices          {self.n_vertices}",
            f"faces             {self.n_faces}",
            f"components        {self.n_components}",
            f"edge-manifold     {self.manifold}",
            f"boundary edges    {self.n_boundary_edges}",
            f"min regularity    {self.min_regularity:.3e}",
            f"duplicate faces   {self.duplicate_faces}",
        ]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# readers


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _read_off(text: str) -> TriMesh:
    tokens_lines = [ln for ln in (_strip_comment(x) for x in text.splitlines()) if ln]
    if not tokens_lines:
        raise MeshError("empty OFF file")
    head = tokens_lines[0].split()
    if not head[0].endswith("OFF"):
        raise MeshError("missing OFF header")
    rest = head[1:]
    body = tokens_lines[1:]
    if not rest:
        if not body:
            raise MeshError("OFF file has no counts line")
        rest, body = body[0].split(), body[1:]
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"bad OFF counts line: {rest!r}") from exc
    if nv == 0 or nf == 0:
        raise MeshError("empty mesh")
    if len(body) < nv + nf:
        raise MeshError("OFF file truncated")
    try:
        verts = np.array([[float(t) for t in body[i].split()[:3]] for i in range(nv)])
    except ValueError as exc:
        raise MeshError(f"parse error in OFF vertex block: {exc}") from exc
    faces = []
    for ln in body[nv : nv + nf]:
        parts = ln.split()
        try:
            k = int(parts[0])
            idx = [int(t) for t in parts[1 : 1 + k]]
        except (ValueError, IndexError) as exc:
            raise MeshError(f"parse error in OFF face line {ln!r}") from exc
        if k != 3 or len(idx) != 3:
            raise MeshError(f"non-triangular face: {ln!r}")
        faces.append(idx)
    return TriMesh(verts, np.array(faces))


def _read_obj(text: str) -> TriMesh:
    verts, faces = [], []
    ignored: set[str] = set()
    for ln in text.splitlines():
        ln = _strip_comment(ln)
        if not ln:
            continue
        parts = ln.split()
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(t) for t in parts[1:4]])
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) != 3:
                    raise MeshError(f"non-triangular face: {ln!r}")
                faces.append(idx)
            else:
                ignored.add(tag)
        except MeshError:
            raise
        except ValueError as exc:
            raise MeshError(f"parse error in OBJ line {ln!r}") from exc
    if ignored:
        warnings.warn(f"ignored OBJ records: {sorted(ignored)}", stacklevel=3)
    if not verts or not faces:
        raise MeshError("empty mesh")
    return TriMesh(np.array(verts), np.array(faces))


def load_mesh(path: str | Path, fmt: str | None = None) -> TriMesh:
    """Read an ASCII OFF or OBJ triangle mesh and validate it."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    text = path.read_text()
    if fmt == "off":
        mesh = _read_off(text)
    elif fmt == "obj":
        mesh = _read_obj(text)
    else:
        raise MeshError(f"unsupported mesh format {fmt!r} (expected off or obj)")
    validate_mesh(mesh)
    return mesh


def write_off(mesh: TriMesh, path: str | Path) -> None:
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += [" ".join(repr(float(c)) for c in p) for p in mesh.vertices]
    lines += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# generators


def generate_grid_mesh(n: int) -> TriMesh:
    """Uniform triangulation of the unit square with (n+1)^2 vertices."""
    if n < 1:
        raise MeshError("grid size n must be >= 1")
    x = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(x, x)  # row j is y = x[j]
    verts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = (j * (n + 1) + i).ravel()
    b, c, d = a + 1, a + n + 1, a + n + 2
    faces = np.concatenate([np.column_stack([a, b, d]), np.column_stack([a, d, c])])
    return TriMesh(verts, faces)


def generate_icosphere(subdivisions: int, radius: float = 1.0) -> TriMesh:
    """Loop-subdivided icosahedron projected onto a sphere."""
    if not 0 <= subdivisions <= 7:
        raise MeshError("icosphere subdivisions must lie in [0, 7]")
    if radius <= 0:
        raise MeshError("radius must be positive")
    t = (1.0 + 5.0**0.5) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = len(faces)
        m01, m12, m20 = (inv[:m] + len(verts), inv[m : 2 * m] + len(verts), inv[2 * m :] + len(verts))
        a, b, c = faces.T
        faces = np.concatenate(
            [
                np.column_stack([a, m01, m20]),
                np.column_stack([b, m12, m01]),
                np.column_stack([c, m20, m12]),
                np.column_stack([m01, m12, m20]),
            ]
        )
        verts = np.concatenate([verts, mid])
    return TriMesh(verts * radius, faces)


# ---------------------------------------------------------------------------
# geometry and validation


def _edge_lengths(mesh: TriMesh) -> np.ndarray:
    p = mesh.vertices[mesh.faces]
    return np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
        ],
        axis=1,
    )


def compute_geometry(mesh: TriMesh) -> MeshGeometry:
    """Areas, barycentric dual areas, hat gradients and vertex stars.

    The hat gradients of a face are J (J^T J)^{-1} [[-1, 1, 0], [-1, 0, 1]]
    with J = (v2 - v1, v3 - v1).
    """
    p = mesh.vertices[mesh.faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    g11 = np.einsum("ij,ij->i", e1, e1)
    g12 = np.einsum("ij,ij->i", e1, e2)
    g22 = np.einsum("ij,ij->i", e2, e2)
    det = g11 * g22 - g12 * g12  # = (2 |f|)^2
    area = 0.5 * np.sqrt(np.maximum(det, 0.0))
    longest = _edge_lengths(mesh).max(axis=1)
    bad = np.flatnonzero(area < _DEGENERATE_RTOL * longest**2)
    if bad.size:
        raise MeshError(f"degenerate (zero-area) triangle at face {int(bad[0])}")

    # (J^T J)^{-1} applied to the reference gradients, then mapped by J
    inv = np.stack([np.stack([g22, -g12], -1), np.stack([-g12, g11], -1)], -2) / det[:, None, None]
    coef = inv @ _REF_GRAD  # (nT, 2, 3)
    J = np.stack([e1, e2], axis=-1)  # (nT, 3, 2)
    hat_grad = np.transpose(J @ coef, (0, 2, 1))  # (nT, local, xyz)

    nv = mesh.n_vertices
    vertex_area = np.bincount(mesh.faces.ravel(), weights=np.repeat(area, 3), minlength=nv) / 3.0

    fidx = np.repeat(np.arange(mesh.n_faces), 3)
    local = np.tile(np.arange(3), mesh.n_faces)
    vert = mesh.faces.ravel()
    order = np.lexsort((fidx, local, vert))
    star_ptr = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(np.bincount(vert, minlength=nv), out=star_ptr[1:])

    arrays = [area, vertex_area, hat_grad, star_ptr, fidx[order], local[order]]
    for a in arrays:
        a.setflags(write=False)
    return MeshGeometry(mesh, *arrays)


def validate_mesh(mesh: TriMesh, strict: bool = True) -> MeshDiagnostics:
    """Check connectivity, edge-manifoldness and triangle regularity.

    With ``strict`` a disconnected or non-manifold mesh raises ``MeshError``;
    poor regularity only produces a warning.
    """
    f = mesh.faces
    nv = mesh.n_vertices
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    adj = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(nv, nv))
    ncomp, _ = connected_components(adj, directed=False)
    used = np.zeros(nv, bool)
    used[f.ravel()] = True
    ncomp -= int((~used).sum())  # isolated vertices counted separately below
    dup = len(f) - len(np.unique(np.sort(f, axis=1), axis=0))

    lengths = _edge_lengths(mesh)
    s = 0.5 * lengths.sum(axis=1)
    area_sq = np.maximum(s * (s - lengths[:, 0]) * (s - lengths[:, 1]) * (s - lengths[:, 2]), 0.0)
    inradius = np.sqrt(area_sq) / s
    ratio = 2.0 * inradius / lengths.max(axis=1)

    diag = MeshDiagnostics(
        n_vertices=nv,
        n_faces=len(f),
        n_components=ncomp,
        max_edge_valence=int(counts.max()),
        n_boundary_edges=int((counts == 1).sum()),
        min_regularity=float(ratio.min()),
        duplicate_faces=int(dup),
    )
    if not used.all():
        diag.warnings.append(f"{int((~used).sum())} unreferenced vertices")
    if diag.min_regularity < _REGULARITY_WARN:
        diag.warnings.append(f"poorly shaped triangle (regularity {diag.min_regularity:.2e})")
    if dup:
        diag.warnings.append(f"{dup} duplicate faces")
    for w in diag.warnings:
        warnings.warn(w, stacklevel=2)
    if strict:
        if not used.all():
            raise MeshError("mesh has unreferenced vertices (disconnected)")
        if not diag.connected:
            raise MeshError(f"mesh is disconnected ({diag.n_components} components)")
        if not diag.manifold:
            raise MeshError("non-manifold edge (shared by more than two faces)")
    return diag
