"""Command-line entry point: ``dotsurf {solve,demo-gaussian,diagnose,gen-mesh}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, build_mesh, parse_config
from .mesh import MeshError, generate_grid_mesh, generate_icosphere, validate_mesh, write_off

log = logging.getLogger("dotsurf")


def _cmd_solve(args) -> int:
    from .runner import EXIT_INPUT_ERROR, run

    try:
        cfg = parse_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    return run(cfg)


def _cmd_demo(args) -> int:
    from .demo import gaussian_demo
    from .solver import SolverConfig

    cfg = SolverConfig(tau=args.tau, max_iter=args.max_iter, max_time_s=args.max_time)

    def show(cp):
        print(f"  tol {cp.tol:.0e} reached at iteration {cp.iterations} ({cp.elapsed_s:.1f}s)", flush=True)

    res = gaussian_demo(args.n, args.steps, args.tol, cfg, progress=show)
    print(f"grid n={res.n} ({(res.n + 1) ** 2} vertices), N={res.N}: {res.termination}")
    print(res.table())
    return 0 if res.reached_all else 1


def _cmd_diagnose(args) -> int:
    from .diagnostics import run_diagnostics

    try:
        mesh = build_mesh(" ".join(args.mesh))
        diag = validate_mesh(mesh, strict=False)
    except (MeshError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(diag.summary())
    if not (diag.connected and diag.manifold):
        return 2
    rep = run_diagnostics(mesh, N=args.steps, trials=args.trials, corrupt=args.corrupt)
    print(rep.format())
    return 0 if rep.passed else 1


def _cmd_gen_mesh(args) -> int:
    kind, rest = args.kind, args.params
    try:
        if kind == "grid":
            if len(rest) != 1:
                raise ValueError("usage: gen-mesh grid n OUT")
            mesh = generate_grid_mesh(int(rest[0]))
        else:
            if len(rest) not in (1, 2):
                raise ValueError("usage: gen-mesh icosphere s [r] OUT")
            mesh = generate_icosphere(int(rest[0]), float(rest[1]) if len(rest) == 2 else 1.0)
    except (ValueError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_off(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_faces} faces")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dotsurf", description="Dynamic optimal transport on triangle meshes.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve the problem described by a config file")
    s.add_argument("config")
    s.add_argument("--output-dir", default=None, help="override output_dir from the config")
    s.set_defaults(func=_cmd_solve)

    d = sub.add_parser("demo-gaussian", help="translated Gaussian benchmark with error table")
    d.add_argument("--n", type=int, default=96, help="grid cells per side")
    d.add_argument("--steps", type=int, default=31, help="time steps N")
    d.add_argument("--tol", type=float, nargs="+", default=[1e-3, 1e-4, 1e-5])
    d.add_argument("--tau", type=float, default=1.9)
    d.add_argument("--max-iter", type=int, default=50_000)
    d.add_argument("--max-time", type=float, default=36_000.0)
    d.set_defaults(func=_cmd_demo)

    g = sub.add_parser("diagnose", help="operator self-checks on a mesh file or generator spec")
    g.add_argument("mesh", nargs="+", help="path, 'grid n' or 'icosphere s [r]'")
    g.add_argument("--steps", type=int, default=4)
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--corrupt", choices=["hat_grad"], default=None, help=argparse.SUPPRESS)
    g.set_defaults(func=_cmd_diagnose)

    m = sub.add_parser("gen-mesh", help="write a generated mesh as OFF")
    m.add_argument("kind", choices=["grid", "icosphere"])
    m.add_argument("params", nargs="+", help="n | s [r]")
    m.add_argument("out")
    m.set_defaults(func=_cmd_gen_mesh)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2) if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
