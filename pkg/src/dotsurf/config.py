"""Run configuration: flat ``key = value`` files and density specifications."""

from __future__ import annotations

import logging
import shlex
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .discretization import DensityError, normalize_density
from .mesh import (
    MeshError,
    MeshGeometry,
    TriMesh,
    generate_grid_mesh,
    generate_icosphere,
    load_mesh,
)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DensitySpec:
    """One of ``file PATH``, ``gaussian cx cy cz chi`` or ``vertex-bump index radius``."""

    kind: str
    path: Path | None = None
    center: tuple[float, float, float] | None = None
    chi: float | None = None
    index: int | None = None
    radius: float | None = None

    @classmethod
    def parse(cls, text: str, base_dir: Path | None = None) -> "DensitySpec":
        parts = shlex.split(str(text))
        if not parts:
            raise ConfigError("empty density spec")
        kind, args = parts[0], parts[1:]
        try:
            if kind == "gaussian":
                if len(args) != 4:
                    raise ConfigError("gaussian spec needs: gaussian cx cy cz chi")
                cx, cy, cz, chi = map(float, args)
                if not chi > 0:
                    raise ConfigError("gaussian width chi must be positive")
                return cls("gaussian", center=(cx, cy, cz), chi=chi)
            if kind == "vertex-bump":
                if len(args) != 2:
                    raise ConfigError("vertex-bump spec needs: vertex-bump index radius")
                idx, r = int(args[0]), float(args[1])
                if idx < 0 or not r > 0:
                    raise ConfigError("vertex-bump needs index >= 0 and radius > 0")
                return cls("vertex-bump", index=idx, radius=r)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad number in density spec {text!r}") from exc
        if kind == "file":
            if len(args) != 1:
                raise ConfigError("file spec needs: file PATH")
            path = Path(args[0])
        elif len(parts) == 1:
            path = Path(kind)  # bare path
        else:
            raise ConfigError(f"unknown density spec {text!r}")
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return cls("file", path=path)

    def evaluate(self, mesh: TriMesh) -> np.ndarray:
        """Raw (unnormalized) per-vertex values."""
        X = mesh.vertices
        if self.kind == "gaussian":
            d2 = np.sum((X - np.asarray(self.center)) ** 2, axis=1)
            return np.exp(-d2 / (2.0 * self.chi**2))
        if self.kind == "vertex-bump":
            if self.index >= mesh.n_vertices:
                raise DensityError(f"vertex-bump index {self.index} out of range")
            d = np.linalg.norm(X - X[self.index], axis=1) / self.radius
            return np.where(d < 1.0, (1.0 - d**2) ** 2, 0.0)
        try:
            vals = np.loadtxt(self.path, dtype=float, ndmin=1)
        except (OSError, ValueError) as exc:
            raise DensityError(f"cannot read density file {self.path}: {exc}") from exc
        if vals.ndim != 1 or vals.size != mesh.n_vertices:
            raise DensityError(
                f"density file {self.path} has {vals.size} values, mesh has {mesh.n_vertices} vertices"
            )
        if not np.all(np.isfinite(vals)):
            raise DensityError(f"density file {self.path} contains non-finite values")
        return vals

    def density(self, geometry: MeshGeometry, mass_floor: float = 0.0) -> np.ndarray:
        return normalize_density(self.evaluate(geometry.mesh), geometry, mass_floor)


def build_mesh(spec: str, base_dir: Path | None = None) -> TriMesh:
    """Mesh from a path or a generator spec ``grid n`` / ``icosphere s [r]``."""
    parts = str(spec).split()
    if parts and parts[0] == "grid":
        if len(parts) != 2:
            raise ConfigError("grid spec needs: grid n")
        return generate_grid_mesh(int(parts[1]))
    if parts and parts[0] == "icosphere":
        if len(parts) not in (2, 3):
            raise ConfigError("icosphere spec needs: icosphere s [r]")
        r = float(parts[2]) if len(parts) == 3 else 1.0
        return generate_icosphere(int(parts[1]), r)
    path = Path(spec)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise MeshError(f"mesh file not found: {path}")
    return load_mesh(path)


@dataclass
class RunConfig:
    mesh: str
    mu0: DensitySpec
    mu1: DensitySpec
    time_steps: int = 31
    tol: float = 1e-4
    tau: float = 1.9
    sigma0: float = 1.0
    theta: float = 0.0
    mass_floor: float = 0.0
    max_iter: int = 50_000
    max_time_s: float = 36_000.0
    check_every: int = 10
    output_dir: Path = Path("out")
    deterministic: bool = True
    export_density: bool = True
    export_momentum: bool = True
    export_report: bool = True
    base_dir: Path | None = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.time_steps) != self.time_steps or self.time_steps < 2:
            raise ConfigError("time_steps must be an integer >= 2")
        if not 0.0 < self.tau < 2.0:
            raise ConfigError("tau must lie in (0,2)")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not self.sigma0 > 0:
            raise ConfigError("sigma0 must be positive")
        if self.theta < 0:
            raise ConfigError("theta must be >= 0")
        if self.mass_floor < 0:
            raise ConfigError("mass_floor must be >= 0")
        if self.max_iter < 0 or int(self.max_iter) != self.max_iter:
            raise ConfigError("max_iter must be a nonnegative integer")
        if self.max_time_s < 0:
            raise ConfigError("max_time_s must be >= 0")
        if self.check_every < 1:
            raise ConfigError("check_every must be >= 1")

    def solver_config(self):
        from .solver import SolverConfig

        return SolverConfig(
            tol=self.tol,
            tau=self.tau,
            sigma0=self.sigma0,
            theta=self.theta,
            max_iter=int(self.max_iter),
            max_time_s=self.max_time_s,
            check_every=int(self.check_every),
            deterministic=self.deterministic,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            if isinstance(v, DensitySpec):
                v = _spec_text(v)
            elif isinstance(v, Path):
                v = str(v)
            out[f.name] = v
        return out


def _spec_text(s: DensitySpec) -> str:
    if s.kind == "gaussian":
        return "gaussian " + " ".join(repr(float(c)) for c in (*s.center, s.chi))
    if s.kind == "vertex-bump":
        return f"vertex-bump {s.index} {s.radius!r}"
    return f"file {s.path}"


_TYPES = {
    "time_steps": int,
    "tol": float,
    "tau": float,
    "sigma0": float,
    "theta": float,
    "mass_floor": float,
    "max_iter": int,
    "max_time_s": float,
    "check_every": int,
    "output_dir": str,
    "deterministic": bool,
    "export_density": bool,
    "export_momentum": bool,
    "export_report": bool,
}
_REQUIRED = ("mesh", "mu0", "mu1")


def config_from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    unknown = sorted(set(raw) - set(_TYPES) - set(_REQUIRED))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    kw = {}
    for key, typ in _TYPES.items():
        if key not in raw:
            continue
        v = raw[key]
        if typ is bool:
            if not isinstance(v, bool):
                raise ConfigError(f"{key} must be true or false")
        elif typ is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{key} must be an integer")
        elif typ is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{key} must be a number")
            v = float(v)
        elif not isinstance(v, str):
            raise ConfigError(f"{key} must be a string")
        kw[key] = v
    if "output_dir" in kw:
        out = Path(kw["output_dir"])
        if base_dir is not None and not out.is_absolute():
            out = base_dir / out
        kw["output_dir"] = out
    elif base_dir is not None:
        kw["output_dir"] = base_dir / "out"
    return RunConfig(
        mesh=str(raw["mesh"]),
        mu0=DensitySpec.parse(raw["mu0"], base_dir),
        mu1=DensitySpec.parse(raw["mu1"], base_dir),
        base_dir=base_dir,
        **kw,
    )


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent.resolve())
