"""Command-line front end: single runs, ablation benchmarks, mesh export and
demo asset generation.

Inputs are file paths or ``demo:<name>`` for the built-in assets, e.g.
``--scene demo:shelf --object demo:box --arms demo:dual``.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path as FsPath

import numpy as np

from . import assets, formats
from .anytime import AnytimePlanner, PlannerConfig, PreconditionFailed, Solution
from .kinematics import collision_balls_at, object_pose
from .constraints import config_checker, is_object_collision_free, is_stable
from .motion_planner import joint_steps, validate_path
from .objectives import available_objectives, objective_bounds
from .se3 import NoStableFace
from .world import VolumeOutsideGrid

EXIT_OK, EXIT_INPUT, EXIT_NO_SOLUTION = 0, 1, 2
VARIANTS = {
    "mcts+localopt": ("mcts", True),
    "uniform+localopt": ("uniform", True),
    "uniform-localopt": ("uniform", False),
}


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# inputs


def load_scene(arg: str) -> assets.Scene:
    if arg.startswith("demo:"):
        name = arg[5:]
        if name not in assets.SCENES:
            raise InputError(f"unknown demo scene {name!r}; have {sorted(assets.SCENES)}")
        return assets.SCENES[name]()
    return formats.read_scene(arg)


def load_object(arg: str):
    if arg.startswith("demo:"):
        name = arg[5:]
        if name not in assets.OBJECTS:
            raise InputError(f"unknown demo object {name!r}; have {sorted(assets.OBJECTS)}")
        return assets.OBJECTS[name]()
    return formats.read_object(arg)


def load_arms(arg: str, obj) -> tuple[dict, dict]:
    if arg.startswith("demo:"):
        name = arg[5:]
        if name == "dual":
            arms = assets.dual_arm_robot()
        elif name == "gantry":
            arms = {"gantry": assets.cartesian_arm()}
        else:
            raise InputError(f"unknown demo robot {name!r}; have ['dual', 'gantry']")
        return arms, {a: assets.side_grasp(obj, a) for a in arms}
    arms, grasps = formats.read_arms(arg, obj)
    missing = sorted(set(arms) - set(grasps))
    if missing:
        raise InputError(f"{arg}: arms without a grasp: {missing}")
    return arms, grasps


def load_config(args) -> PlannerConfig:
    if args.config:
        cfg = formats.read_config(args.config)
    elif args.seed is not None:
        cfg = PlannerConfig(seed=args.seed)
    else:
        raise InputError("either --config or --seed is required")
    over = {}
    if getattr(args, "objective", None):
        over["objective"] = args.objective
    if getattr(args, "time_limit", None) is not None:
        over["time_limit"] = args.time_limit
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "sampler", None):
        over["sampler"] = args.sampler
    if getattr(args, "local_opt", None):
        over["local_opt"] = args.local_opt == "on"
    try:
        return dataclasses.replace(cfg, **over)
    except ValueError as e:
        raise InputError(str(e)) from None


# ---------------------------------------------------------------------------
# mesh export


def _cube_faces(occ: np.ndarray, origin, cs: float):
    """Boundary quads of the occupied cells."""
    verts, faces = [], []
    pad = np.pad(occ, 1)
    idx = np.argwhere(occ)
    offsets = [((-1, 0, 0), 0, 0), ((1, 0, 0), 0, 1), ((0, -1, 0), 1, 0), ((0, 1, 0), 1, 1), ((0, 0, -1), 2, 0),
               ((0, 0, 1), 2, 1)]
    for (dx, dy, dz), axis, side in offsets:
        nb = pad[1 + dx : pad.shape[0] - 1 + dx, 1 + dy : pad.shape[1] - 1 + dy, 1 + dz : pad.shape[2] - 1 + dz]
        sel = idx[~nb[idx[:, 0], idx[:, 1], idx[:, 2]]]
        u, v = [a for a in range(3) if a != axis]
        for cell in sel:
            lo = np.asarray(origin) + cell * cs
            base = lo.copy()
            base[axis] += side * cs
            corners = []
            for a, b in ((0, 0), (1, 0), (1, 1), (0, 1)):
                p = base.copy()
                p[u] += a * cs
                p[v] += b * cs
                corners.append(p)
            if (side == 1) == (axis == 1):  # make the winding face outwards
                corners = corners[::-1]
            k = len(verts)
            verts.extend(corners)
            faces.append((k, k + 1, k + 2, k + 3))
    return verts, faces


def _icosphere(center, radius):
    t = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * radius + center
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6),
         (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10),
         (8, 6, 7), (9, 8, 1)]
    return list(v), f


def export_mesh(scene: assets.Scene, obj=None, arms=None, grasps=None, path=None, max_frames: int = 8) -> str:
    """Wavefront OBJ text with groups for the environment voxels, the object
    at the final pose and the arm balls along the path."""
    lines = ["# placeplan export"]
    offset = 0

    def group(name, verts, faces):
        nonlocal offset
        lines.append(f"o {name}")
        lines.extend(f"v {p[0]:.6f} {p[1]:.6f} {p[2]:.6f}" for p in verts)
        lines.extend("f " + " ".join(str(offset + i + 1) for i in f) for f in faces)
        offset += len(verts)

    g = scene.grid
    group("environment", *_cube_faces(g.occupancy, g.origin, g.cell_size))
    if path is not None:
        arm, grasp = arms[path.arm_id], grasps[path.arm_id]
        pose = object_pose(arm, grasp, path.end)
        group("object", list(pose.apply(obj.surface_points)), [tuple(t) for t in obj.triangles])
        n = len(path.waypoints)
        picks = sorted(set(np.linspace(0, n - 1, min(n, max_frames)).round().astype(int)))
        for k in picks:
            centers, radii = collision_balls_at(arm, path.waypoints[k])
            verts, faces = [], []
            for c, r in zip(centers, radii):
                v, f = _icosphere(c, r)
                faces.extend(tuple(i + len(verts) for i in tri) for tri in f)
                verts.extend(v)
            group(f"arm_{path.arm_id}_{k}", verts, faces)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# runs


def _normalizer(lo: float, hi: float):
    span = hi - lo
    if not (np.isfinite(span) and span > 0):
        return lambda x: 1.0
    return lambda x: float(min(max((x - lo) / span, 0.0), 1.0))


def _metadata(cfg: PlannerConfig, variant: str, extra: dict) -> list[str]:
    out = ["# run 1", f"# seed {cfg.seed}", f"# variant {variant}", f"# config {formats.config_hash(cfg)}"]
    out += [f"# {k} {v}" for k, v in extra.items()]
    return out


def variant_name(cfg: PlannerConfig) -> str:
    return f"{cfg.sampler}{'+' if cfg.local_opt else '-'}localopt"


def cmd_run(args) -> int:
    try:
        scene = load_scene(args.scene)
        obj = load_object(args.object)
        arms, grasps = load_arms(args.arms, obj)
        cfg = load_config(args)
    except (formats.ParseError, InputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        planner = AnytimePlanner(cfg, scene.grid, scene.volume, obj, arms, grasps)
    except (NoStableFace, VolumeOutsideGrid) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionFailed as e:
        print(f"no solution: {e}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    norm = _normalizer(*objective_bounds(cfg.objective, planner.ctx.field))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for line in _metadata(cfg, variant_name(cfg), {"scene": scene.name, "object": obj.name,
                                                       "objective": cfg.objective}):
            out.write(line + "\n")
        out.write(formats.RECORD_HEADER + "\n")
        out.flush()

        def publish(sol: Solution):
            out.write(formats.format_record(sol.wall_time, sol.xi, norm(sol.xi), sol.arm_id, sol.n_waypoints) + "\n")
            out.flush()

        best = planner.run(publish)
    finally:
        if out is not sys.stdout:
            out.close()
    if best is None:
        print("no solution found", file=sys.stderr)
        return EXIT_NO_SOLUTION
    path_out = args.path_out or (f"{args.out}.path" if args.out else None)
    if path_out:
        FsPath(path_out).write_text(formats.dump_path(best.path))
    if args.export:
        FsPath(args.export).write_text(export_mesh(scene, obj, arms, grasps, best.path))
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        scene = load_scene(args.scene)
        obj = arms = grasps = path = None
        if args.path:
            if not (args.object and args.arms):
                raise InputError("--path needs --object and --arms")
            obj = load_object(args.object)
            arms, grasps = load_arms(args.arms, obj)
            path = formats.read_path(args.path)
            if path.arm_id not in arms:
                raise InputError(f"{args.path}: unknown arm {path.arm_id!r}")
            arm = arms[path.arm_id]
            for q in path.waypoints:
                if len(q) != arm.dof or not arm.within_limits(q):
                    raise InputError(f"{args.path}: waypoint outside the limits of arm {path.arm_id!r}")
    except (formats.ParseError, InputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    FsPath(args.out).write_text(export_mesh(scene, obj, arms, grasps, path))
    return EXIT_OK


def cmd_demo(args) -> int:
    out = FsPath(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, make in assets.SCENES.items():
        (out / f"{name}.scene").write_text(formats.dump_scene(make()))
    for name, make in assets.OBJECTS.items():
        formats.write_object(make(), out / f"{name}.obj")
    arms = assets.dual_arm_robot()
    text = formats.dump_arms(arms)
    (out / "dual.arms").write_text(text.replace("end\n", "  grasp side\nend\n"))
    (out / "default.config").write_text(formats.dump_config(PlannerConfig()))
    print(f"wrote demo assets to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark


def _bench_job(job):
    scene_arg, object_arg, arms_arg, cfg, clock = job
    scene = load_scene(scene_arg)
    obj = load_object(object_arg)
    arms, grasps = load_arms(arms_arg, obj)
    try:
        planner = AnytimePlanner(cfg, scene.grid, scene.volume, obj, arms, grasps)
        planner.run()
    except (PreconditionFailed, NoStableFace, VolumeOutsideGrid) as e:
        return {"error": str(e)}
    ok = all(_revalidate(planner, s) for s in planner.solutions)
    pts = [(s.iteration if clock == "iterations" else s.wall_time, s.xi) for s in planner.solutions]
    return {"points": pts, "valid": ok}


def _revalidate(planner: AnytimePlanner, sol: Solution) -> bool:
    ctx = planner.ctx
    arm = ctx.arm(sol.arm_id)
    valid = config_checker(ctx, sol.arm_id)
    if not validate_path(sol.path, valid, joint_steps(arm)):
        return False
    pose = object_pose(arm, ctx.grasp(sol.arm_id), sol.path.end)
    tol = ctx.tolerances
    return (is_stable(pose, sol.face, ctx.region_index, tol.stability_tol)
            and is_object_collision_free(pose, ctx.obj, ctx.field, tol.contact_offset)
            and ctx.objective(pose) == sol.xi)


def best_so_far(points, t: float) -> float | None:
    best = None
    for tp, xi in points:
        if tp <= t:
            best = xi
    return best


def benchmark(scenes, objects, arms_arg, cfg: PlannerConfig, seeds: int, clock: str = "wall", budget: int | None = None,
              variants=tuple(VARIANTS), jobs: int = 1, n_times: int = 10):
    """Run the (scene, object, variant, seed) matrix; returns (report text,
    per-run rows)."""
    if clock == "iterations":
        if not budget:
            raise InputError("--clock iterations needs --budget")
        cfg = dataclasses.replace(cfg, max_iterations=budget, time_limit=math.inf)
    matrix = []
    for scene_arg in scenes:
        for object_arg in objects:
            for v in variants:
                sampler, lo = VARIANTS[v]
                for s in range(seeds):
                    c = dataclasses.replace(cfg, sampler=sampler, local_opt=lo, seed=cfg.seed + s)
                    matrix.append((scene_arg, object_arg, v, s, (scene_arg, object_arg, arms_arg, c, clock)))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_bench_job, [m[-1] for m in matrix]))
    else:
        results = [_bench_job(m[-1]) for m in matrix]

    # per scene/object normalization over everything observed
    bounds = {}
    for m, r in zip(matrix, results):
        for _, xi in r.get("points", []):
            lo, hi = bounds.get(m[:2], (math.inf, -math.inf))
            bounds[m[:2]] = (min(lo, xi), max(hi, xi))
    horizon = budget if clock == "iterations" else cfg.time_limit
    times = [horizon * (k + 1) / n_times for k in range(n_times)]
    rows = []
    for m, r in zip(matrix, results):
        norm = _normalizer(*bounds.get(m[:2], (0.0, 0.0)))
        pts = r.get("points", [])
        curve = [0.0 if (b := best_so_far(pts, t)) is None else norm(b) for t in times]
        final = norm(pts[-1][1]) if pts else 0.0
        rows.append({"scene": m[0], "object": m[1], "variant": m[2], "seed": m[3], "curve": curve, "final": final,
                     "n": len(pts), "valid": r.get("valid", False), "error": r.get("error")})

    out = ["# benchmark 1", f"# config {formats.config_hash(cfg)}", f"# clock {clock}", f"# seeds {seeds}",
           f"# runs {len(rows)}", f"# failures {sum(1 for r in rows if r['error'])}"]
    for r in rows:
        if r["error"]:
            out.append(f"# failure {r['scene']} {r['object']} {r['variant']} seed={r['seed']}: {r['error']}")
    out.append("t " + " ".join(variants))
    for k, t in enumerate(times):
        vals = []
        for v in variants:
            cs = [r["curve"][k] for r in rows if r["variant"] == v]
            vals.append(f"{np.mean(cs):.6f}" if cs else "nan")
        out.append(f"{t:.6g} " + " ".join(vals))
    out.append("# final normalized objective per run")
    out.append("# scene object variant seed final n_solutions valid")
    for r in rows:
        out.append(f"# {r['scene']} {r['object']} {r['variant']} {r['seed']} {r['final']:.6f} {r['n']} "
                   f"{'yes' if r['valid'] else 'no'}")
    return "\n".join(out) + "\n", rows


def cmd_benchmark(args) -> int:
    try:
        obj0 = load_object(args.object[0])
        load_arms(args.arms, obj0)
        for s in args.scene:
            load_scene(s)
        for o in args.object:
            load_object(o)
        cfg = load_config(args)
        report, _ = benchmark(args.scene, args.object, args.arms, cfg, args.seeds, args.clock, args.budget,
                              tuple(args.variants), args.jobs)
    except (formats.ParseError, InputError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        FsPath(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_inputs(p, need_object=True):
    p.add_argument("--scene", required=True, help="scene file or demo:<name>")
    p.add_argument("--object", required=need_object, help="object file or demo:<name>")
    p.add_argument("--arms", required=need_object, help="arms file or demo:dual / demo:gantry")


def _add_planner(p):
    p.add_argument("--config", help="planner config file")
    p.add_argument("--objective", choices=available_objectives())
    p.add_argument("--time-limit", type=float, dest="time_limit")
    p.add_argument("--seed", type=int)
    p.add_argument("--sampler", choices=["mcts", "uniform"])
    p.add_argument("--local-opt", choices=["on", "off"], dest="local_opt")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="placeplan", description="Anytime object placement planner.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="plan one placement and stream improving solutions")
    _add_inputs(p)
    _add_planner(p)
    p.add_argument("--out", help="run-record file (default stdout)")
    p.add_argument("--path-out", help="final path file (default <out>.path)")
    p.add_argument("--export", help="write an OBJ mesh of the final solution")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("benchmark", help="run the sampler / local-optimization ablation matrix")
    p.add_argument("--scene", required=True, nargs="+")
    p.add_argument("--object", required=True, nargs="+")
    p.add_argument("--arms", required=True)
    _add_planner(p)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--variants", nargs="+", choices=list(VARIANTS), default=list(VARIANTS))
    p.add_argument("--clock", choices=["wall", "iterations"], default="wall",
                   help="'iterations' bounds runs by --budget loop iterations, making reports reproducible")
    p.add_argument("--budget", type=int, help="loop iterations per run with --clock iterations")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="report file (default stdout)")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("export", help="write an OBJ mesh of a scene and optionally a solution path")
    _add_inputs(p, need_object=False)
    p.add_argument("--path", help="path file of a solution")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("demo", help="write the built-in demo assets as files")
    p.add_argument("dir")
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
