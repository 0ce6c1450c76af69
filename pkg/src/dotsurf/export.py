"""Snapshot files, viewer files and the JSON run report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import TriMesh

FMT = "%.17g"


@dataclass
class SnapshotSet:
    density: list[Path] = field(default_factory=list)
    momentum: list[Path] = field(default_factory=list)
    viewer: list[Path] = field(default_factory=list)


def time_label(k: int, N: int) -> str:
    """Staggered slice k (1-based) sits at t = (2k - 1) / (2N)."""
    return f"t={2 * k - 1}/{2 * N}"


def _write_vtk(path: Path, mesh: TriMesh, density: np.ndarray, momentum: np.ndarray | None, title: str):
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [" ".join(FMT % c for c in p) for p in mesh.vertices]
    nT = mesh.n_faces
    lines.append(f"CELLS {nT} {4 * nT}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    lines.append(f"CELL_TYPES {nT}")
    lines += ["5"] * nT
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines.append("SCALARS density double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [FMT % v for v in density]
    if momentum is not None:
        lines.append(f"CELL_DATA {nT}")
        lines.append("VECTORS momentum double")
        lines += [" ".join(FMT % c for c in m) for m in momentum]
    path.write_text("\n".join(lines) + "\n")


def export_snapshots(
    density: np.ndarray,
    momentum: np.ndarray | None,
    mesh: TriMesh,
    output_dir: str | Path,
    viewer: bool = True,
) -> SnapshotSet:
    """Write ``density_kkk.txt`` for k = 1..N, ``momentum_kkk.txt`` for k = 0..N
    and one ``snapshot_kkk.vtk`` per staggered slice.

    Values are written as computed (small negatives included). The viewer
    momentum at a staggered time is the mean of its two centered neighbours.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    N = density.shape[0]
    snaps = SnapshotSet()
    for k in range(1, N + 1):
        p = out / f"density_{k:03d}.txt"
        np.savetxt(p, density[k - 1], fmt=FMT)
        snaps.density.append(p)
    if momentum is not None:
        for k in range(momentum.shape[0]):
            p = out / f"momentum_{k:03d}.txt"
            np.savetxt(p, momentum[k], fmt=FMT)
            snaps.momentum.append(p)
    if viewer:
        for k in range(1, N + 1):
            m = None if momentum is None else 0.5 * (momentum[k - 1] + momentum[k])
            p = out / f"snapshot_{k:03d}.vtk"
            _write_vtk(p, mesh, density[k - 1], m, f"density {time_label(k, N)}")
            snaps.viewer.append(p)
    return snaps


def _clean(obj):
    """Make numpy scalars and non-finite floats JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


TIMING_KEYS = ("elapsed_s", "assembly_s")


def report_dict(report, problem=None, density=None, extra: dict | None = None) -> dict:
    """Flatten a SolveReport (plus optional per-slice statistics) to plain data."""
    d = {
        "termination": report.termination,
        "iterations": report.iterations,
        "elapsed_s": report.elapsed_s,
        "cost": report.cost,
        "W2_paper": report.W2_paper,
        "W2_conventional": report.W2_conventional,
        "theta": report.theta,
        "sigma_final": report.sigma,
        "residuals": report.residuals.as_dict(),
        "history": report.history,
        "sigma_history": [list(p) for p in report.sigma_history],
    }
    if problem is not None and density is not None:
        d["N"] = problem.N
        d["n_vertices"] = problem.disc.nV
        d["n_faces"] = problem.disc.nT
        d["mass_per_slice"] = density @ problem.geometry.vertex_area
        d["density_min"] = float(density.min())
        d["density_max"] = float(density.max())
        d["times"] = [time_label(k, problem.N) for k in range(1, problem.N + 1)]
    if extra:
        d.update(extra)
    return _clean(d)


def export_report(data: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def strip_timing(data: dict) -> dict:
    return {k: v for k, v in data.items() if k not in TIMING_KEYS}
