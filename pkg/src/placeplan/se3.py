"""Rigid poses, convex hulls and placement faces of rigid objects."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, QhullError

COPLANAR_TOL = 1e-6
STABILITY_MARGIN = 1e-4


class DegenerateInput(ValueError):
    """Raised when a point set does not span a 3d volume."""


class NoStableFace(ValueError):
    """Raised when no hull face of an object supports a resting placement."""


# ---------------------------------------------------------------------------
# rotations


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R):
    """Unit quaternion (w, x, y, z) with w >= 0 for a rotation matrix."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def axis_angle_matrix(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_log(R):
    """Rotation vector (axis * angle) of a rotation matrix."""
    cos_a = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_a)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-9:
        return 0.5 * w
    if np.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from R + I
        M = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(M)))
        axis = M[:, k] / np.sqrt(max(M[k, k], 1e-300))
        if np.dot(axis, w) < 0:
            axis = -axis
        return axis * angle
    return w * (angle / (2.0 * np.sin(angle)))


# ---------------------------------------------------------------------------
# poses


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: ``p_world = R @ p_local + position``.

    ``quaternion`` is (w, x, y, z). Euler angles follow the extrinsic x-y-z
    convention about world axes, i.e. ``R = Rz(e_z) @ Ry(e_y) @ Rx(e_x)``.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0:
            raise ValueError("quaternion must be non-zero and finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "quaternion", q / n)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls.from_rotation(T[:3, :3], T[:3, 3])

    @classmethod
    def from_rotation(cls, R, position) -> Pose:
        R = np.asarray(R, dtype=float)
        pose = cls(np.asarray(position, dtype=float), matrix_to_quat(R))
        # keep the exact matrix; the quaternion round trip loses ~1e-16
        pose.__dict__["rotation"] = R.copy()
        return pose

    @classmethod
    def from_euler(cls, position, ex: float, ey: float, ez: float) -> Pose:
        return cls.from_rotation(rot_z(ez) @ rot_y(ey) @ rot_x(ex), position)

    @classmethod
    def from_yaw(cls, theta: float, position) -> Pose:
        return cls.from_rotation(rot_z(theta), position)

    @cached_property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    @property
    def euler(self) -> np.ndarray:
        """(e_x, e_y, e_z) in radians."""
        R = self.rotation
        ey = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
        if abs(R[2, 0]) < 1 - 1e-12:
            ex = np.arctan2(R[2, 1], R[2, 2])
            ez = np.arctan2(R[1, 0], R[0, 0])
        else:
            # gimbal lock: fold everything into e_z
            ex = 0.0
            ez = np.arctan2(-R[0, 1], R[1, 1])
        return np.array([ex, ey, ez])

    @property
    def yaw(self) -> float:
        return float(self.euler[2])

    def __matmul__(self, other: Pose) -> Pose:
        R = self.rotation @ other.rotation
        return Pose.from_rotation(R, self.rotation @ other.position + self.position)

    def inverse(self) -> Pose:
        Rt = self.rotation.T
        return Pose.from_rotation(Rt, -Rt @ self.position)

    def apply(self, points) -> np.ndarray:
        """Transform a (3,) point or an (n, 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.position

    def translated(self, delta) -> Pose:
        return Pose.from_rotation(self.rotation, self.position + np.asarray(delta, dtype=float))

    def rotated_about_z(self, angle: float) -> Pose:
        """Rotate about the world z-axis through this pose's position."""
        return Pose.from_rotation(rot_z(angle) @ self.rotation, self.position)

    def distance(self, other: Pose) -> tuple[float, float]:
        """(position error in m, rotation angle error in rad)."""
        dp = float(np.linalg.norm(self.position - other.position))
        dR = self.rotation.T @ other.rotation
        return dp, float(np.linalg.norm(rotation_log(dR)))

    def __repr__(self):
        p = np.array2string(self.position, precision=4)
        e = np.array2string(self.euler, precision=4)
        return f"Pose(position={p}, euler={e})"


# ---------------------------------------------------------------------------
# convex hulls


@dataclass(frozen=True)
class HullFace:
    vertex_ids: np.ndarray  # ordered counter-clockwise seen from outside
    vertices: np.ndarray
    normal: np.ndarray
    offset: float  # plane: normal @ x == offset


@dataclass(frozen=True)
class Polyhedron:
    points: np.ndarray
    vertex_ids: np.ndarray
    faces: list

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        return all(f.normal @ p <= f.offset + tol for f in self.faces)


def _affine_rank(pts):
    centered = pts - pts.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    scale = max(s[0], 1e-300)
    return int(np.sum(s > 1e-9 * scale))


def _order_ccw(pts, normal):
    c = pts.mean(axis=0)
    u = pts[np.argmax(np.linalg.norm(pts - c, axis=1))] - c
    u = u - normal * (u @ normal)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    d = pts - c
    return np.argsort(np.arctan2(d @ v, d @ u))


def convex_hull(points, coplanar_tol: float = COPLANAR_TOL) -> Polyhedron:
    """Convex hull with coplanar triangles merged into polygonal faces."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise DegenerateInput("need at least 4 points in 3d")
    if _affine_rank(pts) < 3:
        raise DegenerateInput("points are coplanar")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc

    groups: list[list[int]] = []
    planes: list[tuple[np.ndarray, float]] = []
    for t, simplex in enumerate(hull.simplices):
        n = hull.equations[t, :3]
        off = -hull.equations[t, 3]
        tri = pts[simplex]
        for g, (gn, goff) in enumerate(planes):
            if gn @ n > 0 and np.all(np.abs(tri @ gn - goff) <= coplanar_tol):
                groups[g].append(t)
                break
        else:
            groups.append([t])
            planes.append((n, off))

    faces = []
    for g, tris in enumerate(groups):
        ids = np.unique(hull.simplices[tris].ravel())
        tri_pts = pts[hull.simplices[tris]]
        # area-weighted normal, oriented like the qhull plane
        cr = np.cross(tri_pts[:, 1] - tri_pts[:, 0], tri_pts[:, 2] - tri_pts[:, 0])
        cr *= np.sign(cr @ planes[g][0])[:, None]
        normal = cr.sum(axis=0)
        normal /= np.linalg.norm(normal)
        verts = pts[ids]
        order = _order_ccw(verts, normal)
        ids = ids[order]
        verts = verts[order]
        faces.append(HullFace(ids, verts, normal, float(np.max(verts @ normal))))
    return Polyhedron(pts, np.unique(hull.vertices), faces)


def polygon_inset_distance(point, vertices, normal) -> float:
    """Smallest signed distance from ``point`` (in the polygon plane) to the
    polygon's edge lines; positive inside a ccw convex polygon."""
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    e = b - a
    lens = np.linalg.norm(e, axis=1)
    d = np.cross(e, point - a) @ normal / np.where(lens > 0, lens, 1.0)
    return float(np.min(d))


# ---------------------------------------------------------------------------
# objects


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Rigid object in its own frame.

    ``body_points`` approximate the volume and are used for collision checks
    and clearance; ``surface_points`` define the convex hull.
    """

    surface_points: np.ndarray
    triangles: np.ndarray
    com: np.ndarray
    body_points: np.ndarray
    name: str = "object"

    def __post_init__(self):
        sp = np.asarray(self.surface_points, dtype=float).reshape(-1, 3)
        bp = np.asarray(self.body_points, dtype=float).reshape(-1, 3)
        tri = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        com = np.asarray(self.com, dtype=float).reshape(3)
        if len(sp) == 0 or len(bp) == 0:
            raise ValueError("surface_points and body_points must be non-empty")
        if len(tri) and (tri.min() < 0 or tri.max() >= len(sp)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "surface_points", sp)
        object.__setattr__(self, "body_points", bp)
        object.__setattr__(self, "triangles", tri)
        object.__setattr__(self, "com", com)
        if not self.hull.contains(com, tol=1e-9):
            raise ValueError("center of mass lies outside the convex hull")

    @cached_property
    def hull(self) -> Polyhedron:
        return convex_hull(self.surface_points)


@dataclass(frozen=True, eq=False)
class PlacementFace:
    """A hull face the object can rest on.

    ``ref_transform`` maps object-frame coordinates into the frame of the
    reference vertex: the reference vertex goes to the origin and the face
    normal to -z.
    """

    face_id: int
    vertices: np.ndarray
    normal: np.ndarray
    ref_transform: Pose
    height: float  # extent of the hull above the face plane

    @property
    def reference_vertex(self) -> np.ndarray:
        return self.vertices[0]


def _down_alignment(normal):
    """Rotation taking ``normal`` to -z with minimal angle."""
    target = np.array([0.0, 0.0, -1.0])
    c = float(np.clip(normal @ target, -1.0, 1.0))
    axis = np.cross(normal, target)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        return np.eye(3) if c > 0 else rot_x(np.pi)
    return axis_angle_matrix(axis / s, np.arctan2(s, c))


def face_reference_transform(vertices, normal) -> tuple[Pose, np.ndarray]:
    """Returns (fT_o, vertices re-ordered to start at the reference vertex).

    The reference vertex is the lexicographically smallest (x, y, z).
    """
    ref = np.lexsort((vertices[:, 2], vertices[:, 1], vertices[:, 0]))[0]
    verts = np.roll(vertices, -ref, axis=0)
    R = _down_alignment(normal)
    return Pose.from_rotation(R, -R @ verts[0]), verts


def is_com_supported(face: HullFace, com, margin: float = STABILITY_MARGIN) -> bool:
    proj = com + (face.offset - face.normal @ com) * face.normal
    return polygon_inset_distance(proj, face.vertices, face.normal) >= margin


def extract_placement_faces(obj: ObjectModel, margin: float = STABILITY_MARGIN) -> list[PlacementFace]:
    hull = obj.hull
    all_pts = hull.points[hull.vertex_ids]
    faces = []
    for hf in hull.faces:
        if not is_com_supported(hf, obj.com, margin):
            continue
        T, verts = face_reference_transform(hf.vertices, hf.normal)
        height = float(np.max(hf.offset - all_pts @ hf.normal))
        faces.append(PlacementFace(len(faces), verts, hf.normal, T, height))
    if not faces:
        raise NoStableFace(f"{obj.name}: no hull face supports the center of mass")
    return faces


def pose_from_parameters(region_z: float, x: float, y: float, theta: float, face: PlacementFace) -> Pose:
    """Object pose with the face's reference vertex at (x, y, region_z),
    resting on the face and rotated by ``theta`` about the vertical."""
    return Pose.from_yaw(theta, (x, y, region_z)) @ face.ref_transform
