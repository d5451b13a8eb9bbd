"""Voxel environments: distance fields, clearance and placement regions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage


class VolumeOutsideGrid(ValueError):
    """Raised when the target volume is not covered by the voxel grid."""


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Axis-aligned occupancy grid; cell (i, j, k) spans
    ``origin + [i, i+1) * cell_size`` along x (likewise y, z).

    The plane z = origin[2] is treated as solid ground below the grid.
    """

    origin: np.ndarray
    cell_size: float
    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3 or min(occ.shape) < 1:
            raise ValueError("occupancy must be a non-empty 3d array")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @classmethod
    def empty(cls, origin, cell_size, dims) -> VoxelGrid:
        return cls(origin, cell_size, np.zeros(tuple(int(d) for d in dims), dtype=bool))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.occupancy.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.array(self.dims) * self.cell_size

    def index_of(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.floor((pts - self.origin) / self.cell_size).astype(int)

    def center_of(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.cell_size

    def in_bounds(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.array(self.dims)), axis=-1)

    def fill_box(self, lo, hi) -> VoxelGrid:
        """New grid with every cell whose center lies in [lo, hi] occupied."""
        occ = self.occupancy.copy()
        lo_i = np.ceil((np.asarray(lo, float) - self.origin) / self.cell_size - 0.5).astype(int)
        hi_i = np.floor((np.asarray(hi, float) - self.origin) / self.cell_size - 0.5).astype(int)
        lo_i = np.maximum(lo_i, 0)
        hi_i = np.minimum(hi_i, np.array(self.dims) - 1)
        if np.all(hi_i >= lo_i):
            occ[lo_i[0] : hi_i[0] + 1, lo_i[1] : hi_i[1] + 1, lo_i[2] : hi_i[2] + 1] = True
        return VoxelGrid(self.origin, self.cell_size, occ)


@dataclass(frozen=True)
class TargetVolume:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not np.all(lo < hi):
            raise ValueError("target volume requires lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=-1)


# ---------------------------------------------------------------------------
# distance field


def _first_occupied_face(occ, axis, forward, origin, cs):
    """World coordinate of the near face of the first occupied cell strictly
    past each cell along ``axis`` (+inf / -inf when there is none)."""
    n = occ.shape[axis]
    idx = np.arange(n).reshape([-1 if a == axis else 1 for a in range(3)])
    big = n if forward else -1
    marked = np.where(occ, idx, big)
    if forward:
        # next occupied index at or after i, then shift by one
        nxt = np.flip(np.minimum.accumulate(np.flip(marked, axis), axis=axis), axis)
        nxt = np.concatenate([np.take(nxt, np.arange(1, n), axis=axis), np.full_like(np.take(nxt, [0], axis=axis), big)], axis=axis)
        face = origin[axis] + nxt * cs
        return np.where(nxt >= n, np.inf, face)
    prv = np.maximum.accumulate(marked, axis=axis)
    prv = np.concatenate([np.full_like(np.take(prv, [0], axis=axis), big), np.take(prv, np.arange(0, n - 1), axis=axis)], axis=axis)
    face = origin[axis] + (prv + 1) * cs
    return np.where(prv < 0, -np.inf, face)


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Signed distance and axis-ray clearance over a voxel grid.

    ``signed_distance`` holds values at cell centers (negative inside
    obstacles, ~0 on obstacle faces); point queries interpolate trilinearly.
    Clearance is the shortest of the rays {+x, -x, +y, -y, +z} from a point
    to an occupied cell or the target-volume boundary.
    """

    grid: VoxelGrid
    volume: TargetVolume
    signed_distance: np.ndarray
    ray_faces: dict = field(repr=False)

    @property
    def cell_size(self) -> float:
        return self.grid.cell_size

    def distance(self, points) -> np.ndarray:
        """Signed distance at arbitrary world points (n, 3) -> (n,)."""
        g = self.grid
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dims = np.array(g.dims)
        u = (pts - g.origin) / g.cell_size - 0.5
        i0 = np.clip(np.floor(u).astype(int), 0, dims - 1)
        i1 = np.minimum(i0 + 1, dims - 1)
        t = np.clip(u - i0, 0.0, 1.0)
        t = np.where(i1 == i0, 0.0, t)
        sd = self.signed_distance
        x0, y0, z0 = i0.T
        x1, y1, z1 = i1.T
        tx, ty, tz = t.T
        c00 = sd[x0, y0, z0] * (1 - tx) + sd[x1, y0, z0] * tx
        c10 = sd[x0, y1, z0] * (1 - tx) + sd[x1, y1, z0] * tx
        c01 = sd[x0, y0, z1] * (1 - tx) + sd[x1, y0, z1] * tx
        c11 = sd[x0, y1, z1] * (1 - tx) + sd[x1, y1, z1] * tx
        val = (c00 * (1 - ty) + c10 * ty) * (1 - tz) + (c01 * (1 - ty) + c11 * ty) * tz
        # space beyond the grid is free, except below the ground plane
        outside = np.linalg.norm(pts - np.clip(pts, g.origin, g.upper), axis=1)
        val = val + outside
        return np.minimum(val, pts[:, 2] - g.origin[2])

    def clearance(self, points) -> np.ndarray:
        """Axis-ray clearance at world points (n, 3) -> (n,); 0 outside V."""
        g, vol = self.grid, self.volume
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts))
        inside = vol.contains(pts)
        if not np.any(inside):
            return out
        p = pts[inside]
        idx = np.clip(g.index_of(p), 0, np.array(g.dims) - 1)
        ii, jj, kk = idx.T
        rf = self.ray_faces
        cand = np.stack(
            [
                rf["+x"][ii, jj, kk] - p[:, 0],
                p[:, 0] - rf["-x"][ii, jj, kk],
                rf["+y"][ii, jj, kk] - p[:, 1],
                p[:, 1] - rf["-y"][ii, jj, kk],
                rf["+z"][ii, jj, kk] - p[:, 2],
                vol.hi[0] - p[:, 0],
                p[:, 0] - vol.lo[0],
                vol.hi[1] - p[:, 1],
                p[:, 1] - vol.lo[1],
                vol.hi[2] - p[:, 2],
            ]
        )
        c = np.maximum(np.min(cand, axis=0), 0.0)
        c[g.occupancy[ii, jj, kk]] = 0.0
        out[inside] = c
        return out

    @cached_property
    def max_clearance(self) -> float:
        """Largest clearance over cell centers inside V (normalization bound)."""
        g = self.grid
        idx = np.argwhere(np.ones(g.dims, dtype=bool))
        centers = g.center_of(idx)
        return float(np.max(self.clearance(centers), initial=0.0))


def build_distance_field(grid: VoxelGrid, volume: TargetVolume) -> DistanceField:
    eps = 1e-9
    if np.any(volume.lo < grid.origin - eps) or np.any(volume.hi > grid.upper + eps):
        raise VolumeOutsideGrid("target volume extends beyond the voxel grid")
    cs = grid.cell_size
    occ = grid.occupancy
    # one solid layer under the grid models the ground plane
    padded = np.concatenate([np.ones(occ.shape[:2] + (1,), dtype=bool), occ], axis=2)
    free = ~padded
    d_free = ndimage.distance_transform_edt(free)[:, :, 1:]
    if np.any(free):
        d_occ = ndimage.distance_transform_edt(padded)[:, :, 1:]
    else:
        d_occ = np.full(occ.shape, float(max(occ.shape)))
    sd = np.where(occ, -(d_occ * cs - 0.5 * cs), d_free * cs - 0.5 * cs)
    faces = {
        "+x": _first_occupied_face(occ, 0, True, grid.origin, cs),
        "-x": _first_occupied_face(occ, 0, False, grid.origin, cs),
        "+y": _first_occupied_face(occ, 1, True, grid.origin, cs),
        "-y": _first_occupied_face(occ, 1, False, grid.origin, cs),
        "+z": _first_occupied_face(occ, 2, True, grid.origin, cs),
    }
    return DistanceField(grid, volume, sd, faces)


# ---------------------------------------------------------------------------
# placement regions


@dataclass(frozen=True, eq=False)
class PlacementRegion:
    """Horizontal support patch: a set of grid columns at one height."""

    z: float
    cells: np.ndarray  # (n, 2) integer (i, j) indices
    origin_xy: np.ndarray
    cell_size: float
    layer: int = 0
    region_id: int = 0

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=int).reshape(-1, 2)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin_xy", np.asarray(self.origin_xy, dtype=float).reshape(2))

    def __len__(self):
        return len(self.cells)

    @cached_property
    def lo_xy(self) -> np.ndarray:
        return self.origin_xy + self.cells * self.cell_size

    @cached_property
    def centers_xy(self) -> np.ndarray:
        return self.lo_xy + 0.5 * self.cell_size

    @property
    def area(self) -> float:
        return len(self.cells) * self.cell_size**2

    @cached_property
    def aabb2d(self) -> tuple[float, float, float, float]:
        lo = self.lo_xy.min(axis=0)
        hi = self.lo_xy.max(axis=0) + self.cell_size
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @cached_property
    def _cell_set(self) -> frozenset:
        return frozenset(map(tuple, self.cells.tolist()))

    def contains_xy(self, xy) -> bool:
        ij = np.floor((np.asarray(xy, float) - self.origin_xy) / self.cell_size).astype(int)
        return (int(ij[0]), int(ij[1])) in self._cell_set

    def horizontal_distance(self, xy) -> np.ndarray:
        """Distance from each of (m, 2) points to the union of cell footprints."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        lo = self.lo_xy[None, :, :]
        hi = lo + self.cell_size
        d = np.maximum(np.maximum(lo - xy[:, None, :], xy[:, None, :] - hi), 0.0)
        return np.sqrt(np.min(np.sum(d * d, axis=2), axis=1))

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from (m, 3) points to the region surface."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = self.horizontal_distance(pts[:, :2])
        return np.hypot(h, pts[:, 2] - self.z)

    def with_cells(self, cells) -> PlacementRegion:
        return PlacementRegion(self.z, cells, self.origin_xy, self.cell_size, self.layer, self.region_id)


_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def support_mask(grid: VoxelGrid, volume: TargetVolume, clearance_cells: int) -> np.ndarray:
    """Boolean (nx, ny, nz + 1) mask of support cells; layer 0 is the ground,
    layer k + 1 the top of grid layer k."""
    occ = grid.occupancy
    nx, ny, nz = occ.shape
    m = max(1, int(clearance_cells))
    solid = np.concatenate([np.ones((nx, ny, 1), dtype=bool), occ], axis=2)
    # free run length above each padded layer, counted inside the grid only
    free = ~occ
    run = np.zeros((nx, ny, nz + 1), dtype=int)
    for k in range(nz - 1, -1, -1):
        run[:, :, k] = np.where(free[:, :, k], run[:, :, k + 1] + 1, 0)
    mask = solid & (run >= m)
    # region surface coordinates must lie in the target volume
    cs = grid.cell_size
    z = grid.origin[2] + np.arange(nz + 1) * cs
    cx = grid.origin[0] + (np.arange(nx) + 0.5) * cs
    cy = grid.origin[1] + (np.arange(ny) + 0.5) * cs
    tol = 1e-9
    in_x = (cx >= volume.lo[0] - tol) & (cx <= volume.hi[0] + tol)
    in_y = (cy >= volume.lo[1] - tol) & (cy <= volume.hi[1] + tol)
    in_z = (z >= volume.lo[2] - tol) & (z <= volume.hi[2] + tol)
    return mask & in_x[:, None, None] & in_y[None, :, None] & in_z[None, None, :]


def extract_regions(grid: VoxelGrid, volume: TargetVolume, obj_clearance_height: float) -> list[PlacementRegion]:
    """Maximal 4-connected patches of support cells, one height per patch.

    A support cell is solid (or ground) with at least ``obj_clearance_height``
    of free grid cells directly above it, and its top surface inside V.
    """
    cs = grid.cell_size
    m = int(np.ceil(obj_clearance_height / cs - 1e-9))
    mask = support_mask(grid, volume, m)
    regions = []
    for layer in range(mask.shape[2]):
        labels, count = ndimage.label(mask[:, :, layer], structure=_FOUR_CONNECTED)
        for lab in range(1, count + 1):
            cells = np.argwhere(labels == lab)
            z = grid.origin[2] + layer * cs
            regions.append(PlacementRegion(z, cells, grid.origin[:2], cs, layer, len(regions)))
    return regions


def split_region(region: PlacementRegion) -> list[PlacementRegion]:
    """Split at the mean cell-center x and y into up to four quadrants,
    ordered (-x,-y), (-x,+y), (+x,-y), (+x,+y); empty quadrants are dropped."""
    c = region.centers_xy
    mean = c.mean(axis=0)
    low_x = c[:, 0] < mean[0]
    low_y = c[:, 1] < mean[1]
    out = []
    for qx, qy in ((True, True), (True, False), (False, True), (False, False)):
        sel = (low_x == qx) & (low_y == qy)
        if np.any(sel):
            out.append(region.with_cells(region.cells[sel]))
    return out


def sample_point(region: PlacementRegion, rng: np.random.Generator) -> np.ndarray:
    """Uniform point on the region surface (all cells have equal area)."""
    k = rng.integers(len(region.cells))
    xy = region.lo_xy[k] + rng.random(2) * region.cell_size
    return np.array([xy[0], xy[1], region.z])


class RegionIndex:
    """Fast support lookups over a fixed region set."""

    def __init__(self, regions: list[PlacementRegion]):
        self.regions = list(regions)
        self._by_cell: dict[tuple[int, int], list[float]] = {}
        if self.regions:
            r0 = self.regions[0]
            self.origin_xy = r0.origin_xy
            self.cell_size = r0.cell_size
        for r in self.regions:
            for i, j in r.cells.tolist():
                self._by_cell.setdefault((i, j), []).append(r.z)
        if self.regions:
            self._lo = np.concatenate([r.lo_xy for r in self.regions])
            self._z = np.concatenate([np.full(len(r), r.z) for r in self.regions])

    def support_excess(self, points, tol: float) -> np.ndarray:
        """Per point, the smallest Euclidean excess over ``tol`` (applied
        separately horizontally and vertically) to any region cell; 0 means
        the point touches a region."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), np.inf)
        if not self.regions:
            return out
        ij = np.floor((pts[:, :2] - self.origin_xy) / self.cell_size).astype(int)
        todo = []
        for n, (i, j) in enumerate(ij.tolist()):
            zs = self._by_cell.get((i, j))
            if zs is not None and min(abs(pts[n, 2] - z) for z in zs) <= tol:
                out[n] = 0.0
            else:
                todo.append(n)
        if todo:
            p = pts[todo]
            lo = self._lo[None, :, :]
            d = np.maximum(np.maximum(lo - p[:, None, :2], p[:, None, :2] - (lo + self.cell_size)), 0.0)
            h = np.sqrt(np.sum(d * d, axis=2))
            v = np.abs(p[:, None, 2] - self._z[None, :])
            ex = np.hypot(np.maximum(h - tol, 0.0), np.maximum(v - tol, 0.0))
            out[todo] = ex.min(axis=1)
        return out
