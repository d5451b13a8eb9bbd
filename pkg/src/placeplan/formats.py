"""Versioned, line-oriented text formats for scenes, objects, arms,
planner configs, paths and run records.

Every file starts with ``<kind> <version>``. Blank lines and ``#``
comments are ignored on input.
"""

from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path as FsPath

import numpy as np

from .anytime import PlannerConfig
from .assets import Scene, side_grasp, top_grasp
from .context import Tolerances
from .kinematics import PRISMATIC, REVOLUTE, ArmModel, Grasp, Joint
from .motion_planner import Path
from .se3 import ObjectModel, Pose
from .world import TargetVolume, VoxelGrid

VERSION = 1
_FMT = "{:.17g}"


class ParseError(ValueError):
    def __init__(self, source, line: int, msg: str):
        self.source, self.line = str(source), line
        super().__init__(f"{source}:{line}: {msg}")


def _num(v) -> str:
    return _FMT.format(float(v))


def _nums(values) -> str:
    return " ".join(_num(v) for v in np.ravel(values))


class _Reader:
    """Tokenized non-empty lines with their numbers."""

    def __init__(self, text: str, source, kind: str):
        self.source = source
        self.lines = []
        for n, raw in enumerate(text.splitlines(), 1):
            s = raw.split("#", 1)[0].strip()
            if s:
                self.lines.append((n, s.split()))
        if not self.lines:
            raise ParseError(source, 1, "empty file")
        n, head = self.lines[0]
        if len(head) != 2 or head[0] != kind:
            raise ParseError(source, n, f"expected header '{kind} {VERSION}'")
        if head[1] != str(VERSION):
            raise ParseError(source, n, f"unsupported version {head[1]}")
        self.lines = self.lines[1:]

    def error(self, n, msg) -> ParseError:
        return ParseError(self.source, n, msg)

    def floats(self, n, toks, count=None) -> np.ndarray:
        try:
            out = np.array([float(t) for t in toks])
        except ValueError:
            raise self.error(n, f"expected numbers, got {' '.join(toks)!r}") from None
        if count is not None and len(out) != count:
            raise self.error(n, f"expected {count} numbers, got {len(out)}")
        if not np.all(np.isfinite(out)):
            raise self.error(n, "non-finite number")
        return out

    def ints(self, n, toks, count=None) -> list[int]:
        try:
            out = [int(t) for t in toks]
        except ValueError:
            raise self.error(n, f"expected integers, got {' '.join(toks)!r}") from None
        if count is not None and len(out) != count:
            raise self.error(n, f"expected {count} integers, got {len(out)}")
        return out


def _read_text(path) -> str:
    try:
        return FsPath(path).read_text()
    except OSError as e:
        raise ParseError(path, 0, e.strerror or str(e)) from None


def _pose_tokens(pose: Pose) -> str:
    return f"{_nums(pose.position)} {_nums(pose.quaternion)}"


def _pose(r: _Reader, n, toks) -> Pose:
    v = r.floats(n, toks, 7)
    try:
        return Pose(v[:3], v[3:])
    except ValueError as e:
        raise r.error(n, str(e)) from None


# ---------------------------------------------------------------------------
# scene


def dump_scene(scene: Scene) -> str:
    g, v = scene.grid, scene.volume
    out = [f"scene {VERSION}", f"name {scene.name}", f"origin {_nums(g.origin)}", f"cell_size {_num(g.cell_size)}",
           "dims " + " ".join(str(d) for d in g.dims), f"volume {_nums(v.lo)} {_nums(v.hi)}", "occupancy"]
    flat = g.occupancy.ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    starts = np.r_[0, change]
    lengths = np.diff(np.r_[starts, len(flat)])
    runs = [f"{int(flat[s])}:{ln}" for s, ln in zip(starts, lengths)]
    for k in range(0, len(runs), 16):
        out.append("  " + " ".join(runs[k : k + 16]))
    out.append("end")
    return "\n".join(out) + "\n"


def parse_scene(text: str, source="<scene>") -> Scene:
    r = _Reader(text, source, "scene")
    fields, boxes, runs = {}, [], None
    it = iter(r.lines)
    for n, toks in it:
        key, args = toks[0], toks[1:]
        if key == "name":
            fields["name"] = " ".join(args)
        elif key in ("origin", "cell_size", "volume"):
            fields[key] = (n, r.floats(n, args, {"origin": 3, "cell_size": 1, "volume": 6}[key]))
        elif key == "dims":
            fields[key] = (n, r.ints(n, args, 3))
        elif key == "box":
            boxes.append((n, r.floats(n, args, 6)))
        elif key == "occupancy":
            runs = []
            for n2, t2 in it:
                if t2 == ["end"]:
                    break
                for tok in t2:
                    try:
                        val, length = tok.split(":")
                        val, length = int(val), int(length)
                    except ValueError:
                        raise r.error(n2, f"bad run {tok!r}") from None
                    if val not in (0, 1) or length < 1:
                        raise r.error(n2, f"bad run {tok!r}")
                    runs.append((val, length))
            else:
                raise r.error(n, "occupancy block without 'end'")
        else:
            raise r.error(n, f"unknown key {key!r}")
    for key in ("origin", "cell_size", "dims", "volume"):
        if key not in fields:
            raise ParseError(source, 0, f"missing '{key}'")
    dims = fields["dims"][1]
    if min(dims) < 1:
        raise r.error(fields["dims"][0], "dims must be positive")
    cs = float(fields["cell_size"][1][0])
    if not cs > 0:
        raise r.error(fields["cell_size"][0], "cell_size must be positive")
    size = int(np.prod(dims))
    if runs is None:
        occ = np.zeros(size, dtype=bool)
    else:
        total = sum(ln for _, ln in runs)
        if total != size:
            raise ParseError(source, 0, f"occupancy has {total} cells, dims need {size}")
        occ = np.concatenate([np.full(ln, bool(v)) for v, ln in runs]) if runs else np.zeros(0, bool)
    grid = VoxelGrid(fields["origin"][1], cs, occ.reshape(dims))
    for n, b in boxes:
        grid = grid.fill_box(b[:3], b[3:])
    vn, vol = fields["volume"]
    try:
        volume = TargetVolume(vol[:3], vol[3:])
    except ValueError as e:
        raise r.error(vn, str(e)) from None
    return Scene(fields.get("name", "scene"), grid, volume)


# ---------------------------------------------------------------------------
# object


def dump_object(obj: ObjectModel) -> tuple[str, str]:
    """(OBJ mesh text, metadata sidecar text) with explicit body points."""
    mesh = [f"# {obj.name}"]
    mesh += [f"v {_nums(p)}" for p in obj.surface_points]
    mesh += ["f " + " ".join(str(int(i) + 1) for i in t) for t in obj.triangles]
    meta = [f"meta {VERSION}", f"name {obj.name}", f"com {_nums(obj.com)}"]
    meta += [f"b {_nums(p)}" for p in obj.body_points]
    return "\n".join(mesh) + "\n", "\n".join(meta) + "\n"


def parse_mesh(text: str, source="<mesh>") -> tuple[np.ndarray, np.ndarray]:
    """Vertices and triangles of a Wavefront OBJ (v / f lines; polygons are
    fan-triangulated, other statements ignored)."""
    verts, faces = [], []
    for n, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        if toks[0] == "v":
            if len(toks) < 4:
                raise ParseError(source, n, "a vertex needs 3 coordinates")
            try:
                verts.append([float(t) for t in toks[1:4]])
            except ValueError:
                raise ParseError(source, n, "bad vertex coordinates") from None
        elif toks[0] == "f":
            try:
                idx = [int(t.split("/")[0]) for t in toks[1:]]
            except ValueError:
                raise ParseError(source, n, "bad face indices") from None
            if len(idx) < 3:
                raise ParseError(source, n, "a face needs at least 3 vertices")
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            if min(idx) < 0 or max(idx) >= len(verts):
                raise ParseError(source, n, "face index out of range")
            faces += [(idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1)]
    if not verts:
        raise ParseError(source, 0, "mesh has no vertices")
    return np.array(verts, dtype=float), np.array(faces, dtype=int).reshape(-1, 3)


def points_inside_mesh(points, verts, tris) -> np.ndarray:
    """Parity of +x ray crossings with a closed triangle mesh."""
    p = np.asarray(points, dtype=float)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    d = np.array([1.0, 0.0, 0.0])
    e1, e2 = b - a, c - a
    h = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    # tiny skew of the ray origin avoids hitting shared edges exactly
    s = p[:, None, :] + np.array([0.0, 1.234e-7, 2.345e-7]) - a[None]
    u = np.einsum("nij,ij->ni", s, h) * inv
    qv = np.cross(s, e1[None])
    v = np.einsum("nij,j->ni", qv, d) * inv
    t = np.einsum("nij,ij->ni", qv, e2) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return hit.sum(axis=1) % 2 == 1


def body_points_from_mesh(verts, tris, resolution: float) -> np.ndarray:
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    axes = [np.linspace(a, b, max(2, int(np.ceil((b - a) / resolution)) + 1)) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    # shrink the lattice slightly so points on the surface count as inside
    centre = (lo + hi) / 2
    probe = centre + (pts - centre) * (1 - 1e-4)
    return pts[points_inside_mesh(probe, verts, tris)]


def parse_object(mesh_text: str, meta_text: str, source="<object>", meta_source="<meta>") -> ObjectModel:
    verts, tris = parse_mesh(mesh_text, source)
    r = _Reader(meta_text, meta_source, "meta")
    name, com, body, res = "object", None, [], None
    for n, toks in r.lines:
        key, args = toks[0], toks[1:]
        if key == "name":
            name = " ".join(args)
        elif key == "com":
            com = r.floats(n, args, 3)
        elif key == "b":
            body.append(r.floats(n, args, 3))
        elif key == "body_resolution":
            res = float(r.floats(n, args, 1)[0])
            if res <= 0:
                raise r.error(n, "body_resolution must be positive")
        else:
            raise r.error(n, f"unknown key {key!r}")
    if com is None:
        raise ParseError(meta_source, 0, "missing 'com'")
    if body:
        body = np.array(body)
    elif res is not None:
        if len(tris) == 0:
            raise ParseError(source, 0, "body_resolution needs a triangle mesh")
        body = body_points_from_mesh(verts, tris, res)
        if len(body) == 0:
            raise ParseError(meta_source, 0, "no lattice point falls inside the mesh")
    else:
        raise ParseError(meta_source, 0, "need 'b' lines or 'body_resolution'")
    try:
        return ObjectModel(verts, tris, com, body, name)
    except ValueError as e:
        raise ParseError(meta_source, 0, str(e)) from None


def meta_path(mesh_path) -> FsPath:
    return FsPath(mesh_path).with_suffix(".meta")


# ---------------------------------------------------------------------------
# arms and grasps


def dump_arms(arms: dict, grasps: dict | None = None) -> str:
    out = [f"arms {VERSION}"]
    for arm_id, arm in arms.items():
        out.append(f"arm {arm_id}")
        out.append(f"  base {_pose_tokens(arm.base_pose)}")
        for j in arm.joints:
            out.append(f"  joint {j.kind} {_nums(j.axis)} {_pose_tokens(j.origin)} {_num(j.lo)} {_num(j.hi)}")
        for link, balls in enumerate(arm.link_balls):
            for c, rad in balls:
                out.append(f"  ball {link} {_nums(c)} {_num(rad)}")
        out.append(f"  tool {_pose_tokens(arm.tool)}")
        if arm.q_rest is not None:
            out.append(f"  rest {_nums(arm.q_rest)}")
        if grasps and arm_id in grasps:
            out.append(f"  grasp {_pose_tokens(grasps[arm_id].transform)}")
        out.append("end")
    return "\n".join(out) + "\n"


def parse_arms(text: str, source="<arms>", obj: ObjectModel | None = None) -> tuple[dict, dict]:
    """Returns (arms, grasps). ``grasp side`` / ``grasp top`` derive the grasp
    from the object's bounding box and need ``obj``."""
    r = _Reader(text, source, "arms")
    arms, grasps = {}, {}
    cur = None
    for n, toks in r.lines:
        key, args = toks[0], toks[1:]
        if key == "arm":
            if cur is not None:
                raise r.error(n, "nested 'arm' block")
            if len(args) != 1:
                raise r.error(n, "usage: arm <id>")
            if args[0] in arms:
                raise r.error(n, f"duplicate arm id {args[0]!r}")
            cur = {"id": args[0], "line": n, "base": Pose.identity(), "tool": Pose.identity(), "joints": [],
                   "balls": [], "rest": None, "grasp": None}
            continue
        if cur is None:
            raise r.error(n, f"{key!r} outside an arm block")
        if key == "base":
            cur["base"] = _pose(r, n, args)
        elif key == "tool":
            cur["tool"] = _pose(r, n, args)
        elif key == "joint":
            if len(args) != 13 or args[0] not in (REVOLUTE, PRISMATIC):
                raise r.error(n, "usage: joint revolute|prismatic ax ay az px py pz qw qx qy qz lo hi")
            v = r.floats(n, args[1:], 12)
            try:
                cur["joints"].append(Joint(args[0], v[:3] / max(np.linalg.norm(v[:3]), 1e-300), Pose(v[3:6], v[6:10]),
                                           v[10], v[11]))
            except ValueError as e:
                raise r.error(n, str(e)) from None
        elif key == "ball":
            if len(args) != 5:
                raise r.error(n, "usage: ball link cx cy cz radius")
            link = r.ints(n, args[:1])[0]
            v = r.floats(n, args[1:], 4)
            if v[3] <= 0:
                raise r.error(n, "ball radius must be positive")
            cur["balls"].append((n, link, v[:3], v[3]))
        elif key == "rest":
            cur["rest"] = (n, r.floats(n, args))
        elif key == "grasp":
            if len(args) == 1 and args[0] in ("side", "top"):
                if obj is None:
                    raise r.error(n, f"'grasp {args[0]}' needs the object")
                cur["grasp"] = (side_grasp if args[0] == "side" else top_grasp)(obj, cur["id"])
            else:
                cur["grasp"] = Grasp(cur["id"], _pose(r, n, args))
        elif key == "end":
            arms[cur["id"]], grasp = _build_arm(r, cur)
            if grasp is not None:
                grasps[cur["id"]] = grasp
            cur = None
        else:
            raise r.error(n, f"unknown key {key!r}")
    if cur is not None:
        raise r.error(cur["line"], "arm block without 'end'")
    if not arms:
        raise ParseError(source, 0, "no arms defined")
    return arms, grasps


def _build_arm(r: _Reader, cur: dict):
    if not cur["joints"]:
        raise r.error(cur["line"], "arm without joints")
    nj = len(cur["joints"])
    balls = [[] for _ in range(nj + 1)]
    for n, link, c, rad in cur["balls"]:
        if not 0 <= link <= nj:
            raise r.error(n, f"ball link {link} out of range 0..{nj}")
        balls[link].append((c, rad))
    rest = None
    if cur["rest"] is not None:
        n, rest = cur["rest"]
        if len(rest) != nj:
            raise r.error(n, f"rest has {len(rest)} values, arm has {nj} joints")
    arm = ArmModel(cur["id"], cur["joints"], cur["base"], cur["tool"], balls, rest)
    if rest is not None and not arm.within_limits(rest):
        raise r.error(cur["rest"][0], "rest configuration outside joint limits")
    return arm, cur["grasp"]


# ---------------------------------------------------------------------------
# planner config

_TOL_FIELDS = [f.name for f in dataclasses.fields(Tolerances)]
_CFG_FIELDS = [f.name for f in dataclasses.fields(PlannerConfig) if f.name != "tolerances"]
_CFG_TYPES = {f.name: f.type for f in dataclasses.fields(PlannerConfig)}


def config_items(cfg: PlannerConfig) -> list[tuple[str, str]]:
    """Canonical (key, value) pairs covering every config field."""
    items = []
    for name in _CFG_FIELDS:
        items.append((name, _fmt_value(getattr(cfg, name))))
    for name in _TOL_FIELDS:
        items.append((f"tol.{name}", _fmt_value(getattr(cfg.tolerances, name))))
    return items


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _num(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt_value(x) for x in v)
    return str(v)


def dump_config(cfg: PlannerConfig) -> str:
    return f"config {VERSION}\n" + "".join(f"{k} = {v}\n" for k, v in config_items(cfg))


def config_hash(cfg: PlannerConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def _parse_value(r: _Reader, n, key: str, raw: str, default):
    low = raw.lower()
    if low == "none":
        return None
    kind = type(default) if default is not None else None
    if key in ("min_area", "max_iterations", "grad_step") or (key.startswith("tol.") and key != "tol.scales"):
        kind = int if key == "max_iterations" else float
    try:
        if key == "tol.scales":
            vals = tuple(float(x) for x in raw.split())
            if len(vals) != 5:
                raise ValueError("tol.scales needs 5 values")
            return vals
        if kind is bool:
            if low in ("on", "true", "yes", "1"):
                return True
            if low in ("off", "false", "no", "0"):
                return False
            raise ValueError(f"expected on/off, got {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as e:
        raise r.error(n, f"{key}: {e}") from None


def parse_config(text: str, source="<config>") -> PlannerConfig:
    r = _Reader(text, source, "config")
    base = PlannerConfig()
    cfg_kw, tol_kw = {}, {}
    for n, toks in r.lines:
        line = " ".join(toks)
        if "=" not in line:
            raise r.error(n, "expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.startswith("tol."):
            name = key[4:]
            if name not in _TOL_FIELDS:
                raise r.error(n, f"unknown key {key!r}")
            tol_kw[name] = _parse_value(r, n, key, raw, getattr(base.tolerances, name))
        else:
            if key not in _CFG_FIELDS:
                raise r.error(n, f"unknown key {key!r}")
            cfg_kw[key] = _parse_value(r, n, key, raw, getattr(base, key))
    if "seed" not in cfg_kw:
        raise ParseError(source, 0, "the config must set 'seed'")
    try:
        return PlannerConfig(**cfg_kw, tolerances=Tolerances(**tol_kw))
    except (TypeError, ValueError) as e:
        raise ParseError(source, 0, str(e)) from None


# ---------------------------------------------------------------------------
# paths and run records


def dump_path(path: Path) -> str:
    dof = len(path.waypoints[0]) if path.waypoints else 0
    out = [f"path {VERSION}", f"arm {path.arm_id}", f"dof {dof}"]
    out += [f"w {_nums(q)}" for q in path.waypoints]
    return "\n".join(out) + "\n"


def parse_path(text: str, source="<path>") -> Path:
    r = _Reader(text, source, "path")
    arm_id, dof, wps = None, None, []
    for n, toks in r.lines:
        key, args = toks[0], toks[1:]
        if key == "arm" and len(args) == 1:
            arm_id = args[0]
        elif key == "dof":
            dof = r.ints(n, args, 1)[0]
        elif key == "w":
            if dof is None:
                raise r.error(n, "'dof' must precede waypoints")
            wps.append(r.floats(n, args, dof))
        else:
            raise r.error(n, f"unknown key {key!r}")
    if arm_id is None or not wps:
        raise ParseError(source, 0, "a path needs 'arm' and at least one waypoint")
    return Path(wps, arm_id)


RECORD_HEADER = "t_s xi xi_norm arm n_waypoints"


def format_record(t: float, xi: float, xi_norm: float, arm_id: str, n_waypoints: int) -> str:
    return f"{t:.6f} {xi:.10g} {xi_norm:.6f} {arm_id} {n_waypoints}"


def parse_records(text: str) -> tuple[dict, list[tuple]]:
    """(metadata, rows) from a run-record stream."""
    meta, rows = {}, []
    for raw in text.splitlines():
        s = raw.strip()
        if not s:
            continue
        if s.startswith("#"):
            bits = s[1:].strip().split(None, 1)
            if len(bits) == 2:
                meta[bits[0]] = bits[1]
            continue
        if s == RECORD_HEADER:
            continue
        t, xi, xn, arm, nw = s.split()
        rows.append((float(t), float(xi), float(xn), arm, int(nw)))
    return meta, rows


# ---------------------------------------------------------------------------
# file wrappers


def read_scene(path) -> Scene:
    return parse_scene(_read_text(path), path)


def read_object(path) -> ObjectModel:
    """OBJ mesh at ``path`` plus the ``.meta`` sidecar next to it."""
    meta = meta_path(path)
    return parse_object(_read_text(path), _read_text(meta), path, meta)


def write_object(obj: ObjectModel, path) -> None:
    mesh, meta = dump_object(obj)
    FsPath(path).write_text(mesh)
    meta_path(path).write_text(meta)


def read_arms(path, obj: ObjectModel | None = None) -> tuple[dict, dict]:
    return parse_arms(_read_text(path), path, obj)


def read_config(path) -> PlannerConfig:
    return parse_config(_read_text(path), path)


def read_path(path) -> Path:
    return parse_path(_read_text(path), path)
