"""Environment maps, ray/polygon intersection and icosahedral ray launch sets.

Vectors are plain ``numpy`` arrays of shape ``(3,)``.  Obstructions are flat
simple polygons; they are intersectable from both sides and incidence angles
are folded into ``[0, pi/2]``.

Three intersection routes exist and must agree:

* :func:`intersect_ray_bruteforce` scans every polygon (reference);
* :func:`intersect_ray` walks a bounding-volume hierarchy and evaluates the
  same per-polygon arithmetic, so it is bitwise equal to the scan;
* :func:`intersect_rays` is the batched kernel used by the tracer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidParameterError, SchemaError
from .propagation import MaterialProfile

MIN_HIT_DISTANCE = 1e-9  # m, guards against self-intersection at a bounce point
COPLANAR_TOL = 1e-6      # m
SCHEMA_VERSION = 1


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        raise InvalidParameterError("cannot normalise a zero or non-finite vector")
    return v / n


def reflect_direction(d: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Specular reflection of ``d`` about a plane with unit normal ``n``."""
    return d - 2.0 * float(np.dot(d, n)) * n


def angle_between(a, b) -> float:
    """Angle in radians between two vectors; stable near 0 and pi."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))


def mirror_point(p: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Image of ``p`` across the plane ``normal . x = offset``."""
    return p - 2.0 * (float(np.dot(normal, p)) - offset) * normal


def _newell_normal(vertices: np.ndarray) -> np.ndarray:
    nxt = np.roll(vertices, -1, axis=0)
    n = np.array([
        np.sum((vertices[:, 1] - nxt[:, 1]) * (vertices[:, 2] + nxt[:, 2])),
        np.sum((vertices[:, 2] - nxt[:, 2]) * (vertices[:, 0] + nxt[:, 0])),
        np.sum((vertices[:, 0] - nxt[:, 0]) * (vertices[:, 1] + nxt[:, 1])),
    ])
    return n


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass(frozen=True)
class Obstruction:
    """A flat polygonal obstruction.

    Vertices are ordered counter-clockwise when seen from the side the normal
    points to.
    """

    id: str
    vertices: np.ndarray
    material_id: str
    normal: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 3 or len(verts) < 3:
            raise InvalidParameterError(f"obstruction {self.id!r}: need >= 3 vertices in 3D")
        if not np.all(np.isfinite(verts)):
            raise InvalidParameterError(f"obstruction {self.id!r}: non-finite vertex")
        raw = _newell_normal(verts)
        if np.linalg.norm(raw) < 1e-12:
            raise InvalidParameterError(f"obstruction {self.id!r}: degenerate polygon")
        n = raw / np.linalg.norm(raw)
        dev = np.abs((verts - verts.mean(axis=0)) @ n)
        if dev.max() > COPLANAR_TOL:
            raise InvalidParameterError(f"obstruction {self.id!r}: vertices are not coplanar")
        verts.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "normal", n)
        pts = self.local_vertices
        k = len(pts)
        for i in range(k):
            for j in range(i + 1, k):
                if j == i + 1 or (i == 0 and j == k - 1):
                    continue
                if _segments_cross(pts[i], pts[(i + 1) % k], pts[j], pts[(j + 1) % k]):
                    raise InvalidParameterError(f"obstruction {self.id!r}: polygon self-intersects")

    @property
    def offset(self) -> float:
        return float(np.dot(self.normal, self.vertices[0]))

    @cached_property
    def frame(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Origin and in-plane orthonormal axes ``(v0, u, w)``."""
        v0 = self.vertices[0]
        u = unit(self.vertices[1] - v0)
        w = np.cross(self.normal, u)
        return v0, u, w

    @cached_property
    def local_vertices(self) -> np.ndarray:
        v0, u, w = self.frame
        rel = self.vertices - v0
        return np.column_stack([rel @ u, rel @ w])

    def contains(self, point, tol: float = 1e-9) -> bool:
        """Whether an in-plane point lies inside the polygon (boundary inclusive within ``tol``)."""
        v0, u, w = self.frame
        rel = np.asarray(point, dtype=float) - v0
        a, b = float(rel @ u), float(rel @ w)
        poly = self.local_vertices
        if _crossing_inside(a, b, poly):
            return True
        return _boundary_distance(a, b, poly) <= tol


def _crossing_inside(a: float, b: float, poly: np.ndarray) -> bool:
    inside = False
    k = len(poly)
    for i in range(k):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % k]
        if (y1 > b) != (y2 > b):
            if a < (x2 - x1) * (b - y1) / (y2 - y1) + x1:
                inside = not inside
    return inside


def _boundary_distance(a: float, b: float, poly: np.ndarray) -> float:
    p = np.array([a, b])
    q1 = poly
    q2 = np.roll(poly, -1, axis=0)
    e = q2 - q1
    ll = np.einsum("ij,ij->i", e, e)
    t = np.clip(np.einsum("ij,ij->i", p - q1, e) / np.where(ll > 0, ll, 1.0), 0.0, 1.0)
    proj = q1 + t[:, None] * e
    return float(np.min(np.linalg.norm(proj - p, axis=1)))


@dataclass(frozen=True)
class Hit:
    point: np.ndarray
    obstruction_id: str
    distance: float
    incidence_angle: float
    index: int


class _PolygonArrays:
    """Flattened per-polygon data for the intersection kernels."""

    def __init__(self, obstructions: Sequence[Obstruction]):
        p = len(obstructions)
        kmax = max((len(o.vertices) for o in obstructions), default=3)
        self.count = p
        self.normals = np.zeros((p, 3))
        self.offsets = np.zeros(p)
        self.origins = np.zeros((p, 3))
        self.u = np.zeros((p, 3))
        self.w = np.zeros((p, 3))
        # closed, padded outlines: slot k..kmax repeat vertex 0 so padding edges are degenerate
        self.outline = np.zeros((p, kmax + 1, 2))
        self.lo = np.zeros((p, 3))
        self.hi = np.zeros((p, 3))
        self.kmax = kmax
        for i, o in enumerate(obstructions):
            v0, u, w = o.frame
            self.normals[i] = o.normal
            self.offsets[i] = o.offset
            self.origins[i] = v0
            self.u[i] = u
            self.w[i] = w
            loc = o.local_vertices
            self.outline[i, :len(loc)] = loc
            self.outline[i, len(loc):] = loc[0]
            self.lo[i] = o.vertices.min(axis=0)
            self.hi[i] = o.vertices.max(axis=0)
        pad = 1e-6 * (1.0 + np.max(np.abs(np.concatenate([self.lo, self.hi], axis=1)), axis=1, initial=0.0))
        self.lo_pad = self.lo - pad[:, None]
        self.hi_pad = self.hi + pad[:, None]
        # batched kernel: one matrix product yields plane distance and in-plane coordinates
        self.basis = np.concatenate([self.normals, self.u, self.w])
        self.origin_u = np.einsum("ij,ij->i", self.origins, self.u)
        self.origin_w = np.einsum("ij,ij->i", self.origins, self.w)
        box = self.outline
        self.a_lo = box[:, :, 0].min(axis=1) - pad
        self.a_hi = box[:, :, 0].max(axis=1) + pad
        self.b_lo = box[:, :, 1].min(axis=1) - pad
        self.b_hi = box[:, :, 1].max(axis=1) + pad

    def hit_distance(self, i: int, ox, oy, oz, dx, dy, dz) -> float:
        """Distance along the ray to polygon ``i`` or ``inf``.  Scalar reference arithmetic."""
        nx, ny, nz = self.normals[i]
        denom = nx * dx + ny * dy + nz * dz
        if denom == 0.0:
            return math.inf
        t = (self.offsets[i] - (nx * ox + ny * oy + nz * oz)) / denom
        if not t > MIN_HIT_DISTANCE:
            return math.inf
        hx, hy, hz = ox + t * dx, oy + t * dy, oz + t * dz
        cx, cy, cz = self.origins[i]
        rx, ry, rz = hx - cx, hy - cy, hz - cz
        ux, uy, uz = self.u[i]
        wx, wy, wz = self.w[i]
        a = rx * ux + ry * uy + rz * uz
        b = rx * wx + ry * wy + rz * wz
        inside = False
        out = self.outline[i]
        for k in range(self.kmax):
            x1, y1 = out[k]
            x2, y2 = out[k + 1]
            if (y1 > b) != (y2 > b):
                if a < (x2 - x1) * (b - y1) / (y2 - y1) + x1:
                    inside = not inside
        return float(t) if inside else math.inf


class _BVH:
    """Median-split bounding-volume hierarchy over polygon boxes."""

    LEAF_SIZE = 4

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.nodes = []  # (lo, hi, left, right, items)
        if len(lo):
            self._build(np.arange(len(lo)), lo, hi)

    def _build(self, idx, lo, hi) -> int:
        blo = lo[idx].min(axis=0)
        bhi = hi[idx].max(axis=0)
        node = len(self.nodes)
        self.nodes.append(None)
        if len(idx) <= self.LEAF_SIZE:
            self.nodes[node] = (blo, bhi, -1, -1, idx)
            return node
        centers = 0.5 * (lo[idx] + hi[idx])
        axis = int(np.argmax(bhi - blo))
        order = idx[np.argsort(centers[:, axis], kind="stable")]
        half = len(order) // 2
        left = self._build(order[:half], lo, hi)
        right = self._build(order[half:], lo, hi)
        self.nodes[node] = (blo, bhi, left, right, None)
        return node

    @staticmethod
    def _slab(lo, hi, o, inv, tmax) -> bool:
        t0, t1 = 0.0, tmax
        for ax in range(3):
            if math.isinf(inv[ax]):
                if o[ax] < lo[ax] - 1e-9 or o[ax] > hi[ax] + 1e-9:
                    return False
                continue
            ta = (lo[ax] - o[ax]) * inv[ax]
            tb = (hi[ax] - o[ax]) * inv[ax]
            if ta > tb:
                ta, tb = tb, ta
            # widen slightly so boxes of flat polygons are never missed
            t0 = max(t0, ta - 1e-9)
            t1 = min(t1, tb + 1e-9)
            if t0 > t1:
                return False
        return True

    def candidates(self, o, d, tmax=math.inf):
        if not self.nodes:
            return
        with np.errstate(divide="ignore"):
            inv = tuple(1.0 / x if x != 0.0 else math.inf for x in d)
        stack = [0]
        while stack:
            lo, hi, left, right, items = self.nodes[stack.pop()]
            if not self._slab(lo, hi, o, inv, tmax()):
                continue
            if items is not None:
                yield from items.tolist()
            else:
                stack.append(right)
                stack.append(left)


@dataclass(frozen=True)
class EnvironmentMap:
    """Immutable environment: polygons, materials and an optional bounding box."""

    obstructions: Tuple[Obstruction, ...]
    materials: Mapping[str, MaterialProfile]
    bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "obstructions", tuple(self.obstructions))
        object.__setattr__(self, "materials", dict(self.materials))
        ids = set()
        for o in self.obstructions:
            if o.id in ids:
                raise InvalidParameterError(f"duplicate obstruction id {o.id!r}")
            ids.add(o.id)
            if o.material_id not in self.materials:
                raise InvalidParameterError(
                    f"obstruction {o.id!r} references unknown material {o.material_id!r}")
        if self.bounds is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.bounds)
            object.__setattr__(self, "bounds", (lo, hi))
            for o in self.obstructions:
                if np.any(o.vertices < lo - 1e-9) or np.any(o.vertices > hi + 1e-9):
                    raise InvalidParameterError(f"obstruction {o.id!r} lies outside the bounds")

    @classmethod
    def build(cls, obstructions, materials, bounds=None) -> "EnvironmentMap":
        """Construct, deriving ``bounds`` from the vertices when not given."""
        obstructions = tuple(obstructions)
        if bounds is None and obstructions:
            allv = np.vstack([o.vertices for o in obstructions])
            bounds = (allv.min(axis=0), allv.max(axis=0))
        return cls(obstructions, materials, bounds)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {o.id: i for i, o in enumerate(self.obstructions)}

    @cached_property
    def arrays(self) -> _PolygonArrays:
        return _PolygonArrays(self.obstructions)

    @cached_property
    def bvh(self) -> _BVH:
        return _BVH(self.arrays.lo, self.arrays.hi)

    @cached_property
    def material_of(self) -> Tuple[MaterialProfile, ...]:
        return tuple(self.materials[o.material_id] for o in self.obstructions)

    def material_for(self, obstruction_index: int) -> MaterialProfile:
        return self.material_of[obstruction_index]

    def contains(self, point, tol: float = 1e-9) -> bool:
        if self.bounds is None:
            return True
        p = np.asarray(point, dtype=float)
        lo, hi = self.bounds
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))

    def with_materials(self, materials: Mapping[str, MaterialProfile]) -> "EnvironmentMap":
        """Same geometry, different material table."""
        return EnvironmentMap(self.obstructions, materials, self.bounds)


def _make_hit(env: EnvironmentMap, i: int, origin, direction, t: float) -> Hit:
    n = env.arrays.normals[i]
    cosi = min(1.0, abs(float(np.dot(n, direction))))
    return Hit(point=np.asarray(origin, dtype=float) + t * np.asarray(direction, dtype=float),
               obstruction_id=env.obstructions[i].id, distance=t,
               incidence_angle=math.acos(cosi), index=i)


def _resolve_exclude(env: EnvironmentMap, exclude) -> int:
    if exclude is None:
        return -1
    if isinstance(exclude, (int, np.integer)):
        return int(exclude)
    return env.index[exclude]


def intersect_ray_bruteforce(origin, direction, env: EnvironmentMap, exclude=None,
                             max_distance: float = math.inf) -> Optional[Hit]:
    """Nearest hit by scanning every polygon; ties go to the lowest index."""
    ox, oy, oz = (float(x) for x in origin)
    dx, dy, dz = (float(x) for x in direction)
    ex = _resolve_exclude(env, exclude)
    arr = env.arrays
    best, best_i = max_distance, -1
    for i in range(arr.count):
        if i == ex:
            continue
        t = arr.hit_distance(i, ox, oy, oz, dx, dy, dz)
        if t < best:
            best, best_i = t, i
    if best_i < 0:
        return None
    return _make_hit(env, best_i, origin, direction, best)


def intersect_ray(origin, direction, env: EnvironmentMap, exclude=None,
                  max_distance: float = math.inf) -> Optional[Hit]:
    """Nearest obstruction hit strictly ahead of ``origin``, or ``None``.

    ``exclude`` (id or index) skips the surface the ray is departing from.
    """
    ox, oy, oz = (float(x) for x in origin)
    dx, dy, dz = (float(x) for x in direction)
    ex = _resolve_exclude(env, exclude)
    arr = env.arrays
    state = [max_distance, -1]
    for i in env.bvh.candidates((ox, oy, oz), (dx, dy, dz), lambda: state[0]):
        if i == ex:
            continue
        t = arr.hit_distance(i, ox, oy, oz, dx, dy, dz)
        if t < state[0] or (t == state[0] and state[1] >= 0 and i < state[1]):
            state[0], state[1] = t, i
    if state[1] < 0:
        return None
    return _make_hit(env, state[1], origin, direction, state[0])


def intersect_rays(origins: np.ndarray, directions: np.ndarray, env: EnvironmentMap,
                   exclude: Optional[np.ndarray] = None, chunk: int = 1024):
    """Batched nearest-hit query.

    Returns ``(index, distance)`` arrays; ``index`` is -1 and ``distance`` is
    ``inf`` where a ray escapes.
    """
    origins = np.asarray(origins, dtype=float)
    directions = np.asarray(directions, dtype=float)
    r = len(origins)
    out_i = np.full(r, -1, dtype=np.int64)
    out_t = np.full(r, np.inf)
    arr = env.arrays
    if r == 0 or arr.count == 0:
        return out_i, out_t
    if exclude is None:
        exclude = np.full(r, -1, dtype=np.int64)
    p = arr.count
    rows = np.arange(min(chunk, r))
    for s in range(0, r, chunk):
        o = origins[s:s + chunk]
        d = directions[s:s + chunk]
        ex = exclude[s:s + chunk]
        c = len(o)
        po = o @ arr.basis.T
        pd = d @ arr.basis.T
        denom = pd[:, :p]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (arr.offsets - po[:, :p]) / denom
        ok = (denom != 0.0) & (t > MIN_HIT_DISTANCE)
        ok[rows[:c], np.where(ex >= 0, ex, 0)] &= ex < 0
        tz = np.where(ok, t, 0.0)
        a = po[:, p:2 * p] - arr.origin_u + tz * pd[:, p:2 * p]
        b = po[:, 2 * p:] - arr.origin_w + tz * pd[:, 2 * p:]
        # bounding-box prefilter in polygon coordinates; the crossing test below decides
        ok &= (a >= arr.a_lo) & (a <= arr.a_hi) & (b >= arr.b_lo) & (b <= arr.b_hi)
        ri, pi = np.nonzero(ok)
        if len(ri) == 0:
            continue
        tt = t[ri, pi]
        av = a[ri, pi]
        bv = b[ri, pi]
        inside = np.zeros(len(ri), dtype=bool)
        outline = arr.outline[pi]
        for k in range(arr.kmax):
            x1, y1 = outline[:, k, 0], outline[:, k, 1]
            x2, y2 = outline[:, k + 1, 0], outline[:, k + 1, 1]
            straddle = (y1 > bv) != (y2 > bv)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = (x2 - x1) * (bv - y1) / (y2 - y1) + x1
            inside ^= straddle & (av < xc)
        ri, pi, tt = ri[inside], pi[inside], tt[inside]
        full = np.full((c, p), np.inf)
        full[ri, pi] = tt
        best = np.argmin(full, axis=1)
        bt = full[rows[:c], best]
        hit = np.isfinite(bt)
        out_i[s:s + chunk] = np.where(hit, best, -1)
        out_t[s:s + chunk] = bt
    return out_i, out_t


def segment_crossings(env: EnvironmentMap, start, end, skip=()) -> list:
    """Every polygon crossed strictly between ``start`` and ``end``.

    Returns ``[(distance, index), ...]`` sorted by distance from ``start``.
    Crossings within :data:`MIN_HIT_DISTANCE` of either end are ignored, as
    are polygon indices in ``skip``.
    """
    arr = env.arrays
    if arr.count == 0:
        return []
    start = np.asarray(start, dtype=float)
    seg = np.asarray(end, dtype=float) - start
    length = float(np.linalg.norm(seg))
    if length <= 2 * MIN_HIT_DISTANCE:
        return []
    d = seg / length
    n = arr.normals
    denom = n[:, 0] * d[0] + n[:, 1] * d[1] + n[:, 2] * d[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (arr.offsets - (n[:, 0] * start[0] + n[:, 1] * start[1] + n[:, 2] * start[2])) / denom
    ok = (denom != 0.0) & (t > MIN_HIT_DISTANCE) & (t < length - MIN_HIT_DISTANCE)
    for s in skip:
        ok[s] = False
    h = start + np.where(ok, t, 0.0)[:, None] * d
    ok &= np.all((h >= arr.lo_pad) & (h <= arr.hi_pad), axis=1)
    out = []
    for i in np.nonzero(ok)[0]:
        ti = float(t[i])
        h = start + ti * d
        v0, u, w = arr.origins[i], arr.u[i], arr.w[i]
        rel = h - v0
        if _crossing_inside(float(rel @ u), float(rel @ w), env.obstructions[i].local_vertices):
            out.append((ti, int(i)))
    out.sort()
    return out


def reception_sphere_radius(angular_spacing: float, path_length: float) -> float:
    """Radius ``alpha * d / sqrt(3)`` of the RX capture sphere."""
    if not angular_spacing > 0 or not path_length > 0:
        raise InvalidParameterError("angular spacing and path length must be positive")
    return angular_spacing * path_length / math.sqrt(3.0)


# --- icosahedral launch directions -------------------------------------------------------

def _icosahedron():
    z = 1.0 / math.sqrt(5.0)
    rho = 2.0 / math.sqrt(5.0)
    verts = [(0.0, 0.0, 1.0)]
    for k in range(5):
        phi = 2.0 * math.pi * k / 5.0
        verts.append((rho * math.cos(phi), rho * math.sin(phi), z))
    for k in range(5):
        phi = 2.0 * math.pi * k / 5.0 + math.pi / 5.0
        verts.append((rho * math.cos(phi), rho * math.sin(phi), -z))
    verts.append((0.0, 0.0, -1.0))
    top, up, low, bot = 0, list(range(1, 6)), list(range(6, 11)), 11
    faces = []
    for k in range(5):
        k1 = (k + 1) % 5
        faces.append((top, up[k], up[k1]))
        faces.append((up[k], low[k], up[k1]))
        faces.append((up[k1], low[k], low[k1]))
        faces.append((bot, low[k1], low[k]))
    return np.array(verts), faces


@dataclass(frozen=True)
class Tessellation:
    frequency: int
    directions: np.ndarray

    @property
    def spacing_deg(self) -> float:
        """Nominal angular spacing between neighbouring rays, 69 deg / N_t."""
        return 69.0 / self.frequency

    @property
    def spacing_rad(self) -> float:
        return math.radians(self.spacing_deg)

    def __len__(self):
        return len(self.directions)


def _check_frequency(frequency) -> int:
    if isinstance(frequency, bool) or int(frequency) != frequency or frequency < 1:
        raise InvalidParameterError(f"tessellation frequency must be a positive integer, got {frequency!r}")
    return int(frequency)


_TESS_CACHE: Dict[int, Tessellation] = {}


def tessellate_icosahedron(frequency: int) -> Tessellation:
    """Unit directions to the vertices of an icosahedron subdivided ``frequency`` times per edge.

    Vertices are generated once each (corners, then edge interiors, then face
    interiors), giving exactly ``10 N^2 + 2`` directions in a fixed order.
    """
    nt = _check_frequency(frequency)
    if nt in _TESS_CACHE:
        return _TESS_CACHE[nt]
    verts, faces = _icosahedron()
    pts = [verts]
    edges = sorted({tuple(sorted((f[a], f[b]))) for f in faces for a, b in ((0, 1), (1, 2), (0, 2))})
    if nt > 1:
        i = np.arange(1, nt)[:, None]
        for a, b in edges:
            pts.append((verts[a] * (nt - i) + verts[b] * i) / nt)
        for fa, fb, fc in faces:
            rows = [(i_, j_, nt - i_ - j_) for i_ in range(1, nt) for j_ in range(1, nt - i_)]
            if rows:
                w = np.array(rows, dtype=float)
                pts.append((w[:, :1] * verts[fa] + w[:, 1:2] * verts[fb] + w[:, 2:] * verts[fc]) / nt)
    dirs = np.vstack(pts)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs.setflags(write=False)
    tess = Tessellation(nt, dirs)
    _TESS_CACHE[nt] = tess
    return tess


def tessellate_half_icosahedron(frequency: int, plane_normal) -> Tessellation:
    """Directions of the tessellated icosahedron lying in the half-space of ``plane_normal``."""
    nt = _check_frequency(frequency)
    n = np.asarray(plane_normal, dtype=float)
    if np.linalg.norm(n) == 0:
        raise InvalidParameterError("plane normal must be non-zero")
    n = n / np.linalg.norm(n)
    full = tessellate_icosahedron(nt).directions
    return Tessellation(nt, full[full @ n >= 0.0])


# --- environment file --------------------------------------------------------------------

def _req(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"missing field {where}.{key}" if where else f"missing field {key}",
                          field=f"{where}.{key}" if where else key)
    return doc[key]


def _number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(f"field {where} must be a finite number", field=where)
    return float(value)


def material_from_dict(name: str, doc: dict) -> MaterialProfile:
    where = f"materials.{name}"
    if not isinstance(doc, dict):
        raise SchemaError(f"field {where} must be an object", field=where)
    refl = _number(_req(doc, "reflection_loss_db", where), f"{where}.reflection_loss_db")
    opaque = doc.get("opaque", False)
    if not isinstance(opaque, bool):
        raise SchemaError(f"field {where}.opaque must be a boolean", field=f"{where}.opaque")
    pen = None
    if not opaque:
        pen = _number(_req(doc, "penetration_loss_db", where), f"{where}.penetration_loss_db")
    rough = _number(doc.get("roughness_height_m", 0.0), f"{where}.roughness_height_m")
    scat = doc.get("scattering", False)
    if not isinstance(scat, bool):
        raise SchemaError(f"field {where}.scattering must be a boolean", field=f"{where}.scattering")
    try:
        return MaterialProfile(name, refl, pen, rough, scat)
    except InvalidParameterError as exc:
        raise SchemaError(str(exc), field=where) from exc


def environment_from_dict(doc: dict) -> EnvironmentMap:
    """Parse and validate an environment document (see README for the schema)."""
    if not isinstance(doc, dict):
        raise SchemaError("environment document must be a JSON object")
    version = _req(doc, "version", "")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported environment version {version!r}", field="version")
    mats_doc = _req(doc, "materials", "")
    if not isinstance(mats_doc, dict):
        raise SchemaError("field materials must be an object", field="materials")
    materials = {name: material_from_dict(name, m) for name, m in mats_doc.items()}
    obs_doc = _req(doc, "obstructions", "")
    if not isinstance(obs_doc, list):
        raise SchemaError("field obstructions must be a list", field="obstructions")
    obstructions = []
    for k, o in enumerate(obs_doc):
        where = f"obstructions[{k}]"
        name = _req(o, "name", where)
        mat = _req(o, "material", where)
        if mat not in materials:
            raise SchemaError(f"{where}.material references unknown material {mat!r}",
                              field=f"{where}.material")
        verts = _req(o, "vertices", where)
        try:
            arr = np.asarray(verts, dtype=float)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"field {where}.vertices must be a list of [x, y, z]",
                              field=f"{where}.vertices") from exc
        if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) < 3:
            raise SchemaError(f"field {where}.vertices must hold >= 3 points of [x, y, z]",
                              field=f"{where}.vertices")
        try:
            obstructions.append(Obstruction(str(name), arr, mat))
        except InvalidParameterError as exc:
            raise SchemaError(f"{where}: {exc}", field=f"{where}.vertices") from exc
    bounds = None
    if "bounds" in doc:
        b = doc["bounds"]
        try:
            bounds = (np.asarray(_req(b, "min", "bounds"), dtype=float),
                      np.asarray(_req(b, "max", "bounds"), dtype=float))
        except (TypeError, ValueError) as exc:
            raise SchemaError("field bounds must hold min/max triples", field="bounds") from exc
        if bounds[0].shape != (3,) or bounds[1].shape != (3,):
            raise SchemaError("field bounds must hold min/max triples", field="bounds")
    try:
        return EnvironmentMap.build(obstructions, materials, bounds)
    except InvalidParameterError as exc:
        raise SchemaError(str(exc)) from exc


def environment_to_dict(env: EnvironmentMap) -> dict:
    mats = {}
    for name, m in env.materials.items():
        entry = {"reflection_loss_db": m.reflection_loss_db, "opaque": m.opaque}
        if not m.opaque:
            entry["penetration_loss_db"] = m.penetration_loss_db
        if m.roughness_height_m:
            entry["roughness_height_m"] = m.roughness_height_m
        if m.scattering:
            entry["scattering"] = True
        mats[name] = entry
    doc = {
        "version": SCHEMA_VERSION,
        "materials": mats,
        "obstructions": [{"name": o.id, "material": o.material_id,
                          "vertices": o.vertices.tolist()} for o in env.obstructions],
    }
    if env.bounds is not None:
        doc["bounds"] = {"min": env.bounds[0].tolist(), "max": env.bounds[1].tolist()}
    return doc


def load_environment(path) -> EnvironmentMap:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return environment_from_dict(doc)
