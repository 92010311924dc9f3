"""Hybrid shooting-bouncing-ray / image-method tracer.

Rays are launched from the TX along a tessellated icosahedron and followed
through reflections and thin-wall penetrations.  Every ray segment passing
through the RX reception sphere nominates its ordered surface sequence (the
*signature*).  Each signature is then solved exactly by mirroring the RX
across the reflecting planes and validated against the real polygons, so the
emitted paths carry image-method accuracy regardless of the launch grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .antenna import AntennaPattern, AntennaPose, gain_toward, gains_toward, isotropic_pattern
from .errors import InvalidParameterError
from .geometry import (
    EnvironmentMap, angle_between, intersect_rays, mirror_point, segment_crossings,
    tessellate_icosahedron, unit,
)
from .propagation import (
    SPEED_OF_LIGHT, ScatteringParameters, fspl_db, rayleigh_critical_height,
    scatter_gain, scattered_power_dbm, wavelength_m,
)

REFLECTION = "R"
PENETRATION = "P"
SCATTERING = "S"
KIND_NAMES = {REFLECTION: "reflection", PENETRATION: "penetration", SCATTERING: "scattering"}


@dataclass(frozen=True)
class Interaction:
    kind: str
    obstruction_id: str
    material_id: str
    point: np.ndarray
    incidence_angle: float


@dataclass(frozen=True)
class MultipathComponent:
    """One propagation path from TX to RX.

    ``aod`` points from the TX toward the first path point, ``aoa`` from the RX
    toward the last one (the direction the energy arrives from).
    """

    aod: np.ndarray
    aoa: np.ndarray
    tof_ns: float
    path_length_m: float
    power_dbm: float
    interactions: Tuple[Interaction, ...] = ()
    surface_signature: Tuple[Tuple[str, str], ...] = ()

    @property
    def n_refl(self) -> int:
        return sum(1 for _, k in self.surface_signature if k == REFLECTION)

    @property
    def n_pen(self) -> int:
        return sum(1 for _, k in self.surface_signature if k == PENETRATION)

    @property
    def n_scat(self) -> int:
        return sum(1 for _, k in self.surface_signature if k == SCATTERING)

    @property
    def power_mw(self) -> float:
        return 10.0 ** (self.power_dbm / 10.0)


@dataclass(frozen=True)
class TraceConfig:
    """Tracer settings.

    ``rx_sensitivity_dbm=None`` disables power-based ray dropping (discovery
    mode).  ``reception_margin`` scales the reception-sphere radius; values
    above 1 trade extra candidate signatures (rejected by validation) for
    robustness against the irregular spacing of the tessellation.
    ``refinement_levels`` bounds the ray splitting applied where a ray tube
    is cut by a polygon outline; each level triples the angular resolution
    around the affected launch directions.
    """

    tessellation_frequency: int = 30
    max_reflections: int = 5
    max_penetrations: int = 3
    rx_sensitivity_dbm: Optional[float] = -120.0
    frequency_ghz: float = 28.0
    scattering_enabled: bool = False
    tx_power_dbm: float = 0.0
    reception_margin: float = 3.0
    refinement_levels: int = 1
    scatter_frequency: int = 4
    scattering: ScatteringParameters = field(default_factory=ScatteringParameters)

    def __post_init__(self):
        if self.max_reflections < 0 or self.max_penetrations < 0:
            raise InvalidParameterError("interaction limits must be >= 0")
        if not self.frequency_ghz > 0:
            raise InvalidParameterError("frequency must be positive")
        if self.rx_sensitivity_dbm is not None and not math.isfinite(self.rx_sensitivity_dbm):
            raise InvalidParameterError("RX sensitivity must be finite")
        if not self.reception_margin > 0:
            raise InvalidParameterError("reception margin must be positive")
        if self.refinement_levels < 0:
            raise InvalidParameterError("refinement levels must be >= 0")


@dataclass
class TraceResult:
    components: List[MultipathComponent]
    los_blocked: bool
    stats: Dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class CorrectedPath:
    points: Tuple[np.ndarray, ...]
    length: float
    aod: np.ndarray
    aoa: np.ndarray
    interactions: Tuple[Interaction, ...]
    indices: Tuple[int, ...]


def _normalise_signature(signature, env: EnvironmentMap) -> List[Tuple[int, str]]:
    out = []
    for obs, kind in signature:
        idx = env.index[obs] if isinstance(obs, str) else int(obs)
        out.append((idx, kind))
    return out


def correct_path(signature, tx, rx, env: EnvironmentMap, start_skip: Optional[int] = None
                 ) -> Optional[CorrectedPath]:
    """Exact geometric path for a reflection/penetration signature, or ``None``.

    The RX is mirrored across the reflecting planes in reverse order, the TX is
    joined to the deepest image and the intersection points are unfolded.  Each
    reflection point must lie inside its polygon and every leg must cross
    exactly the penetrations the signature lists for it, in order.
    ``start_skip`` excludes the polygon the path starts on (scatter points).
    """
    sig = _normalise_signature(signature, env)
    if any(k not in (REFLECTION, PENETRATION) for _, k in sig):
        raise InvalidParameterError("correct_path handles reflections and penetrations only")
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    arr = env.arrays
    refl = [i for i, k in sig if k == REFLECTION]
    slots: List[List[int]] = [[]]
    for i, k in sig:
        if k == REFLECTION:
            slots.append([])
        else:
            slots[-1].append(i)

    images = [None] * len(refl)
    cur = rx
    for m in range(len(refl) - 1, -1, -1):
        i = refl[m]
        cur = mirror_point(cur, arr.normals[i], arr.offsets[i])
        images[m] = cur

    points = [tx]
    p = tx
    for m, i in enumerate(refl):
        n, off = arr.normals[i], arr.offsets[i]
        dp = float(np.dot(n, p)) - off
        dq = float(np.dot(n, images[m])) - off
        if dp * dq >= 0.0:
            return None
        x = p + (dp / (dp - dq)) * (images[m] - p)
        if not env.obstructions[i].contains(x):
            return None
        points.append(x)
        p = x
    points.append(rx)

    interactions = []
    for s in range(len(points) - 1):
        a, b = points[s], points[s + 1]
        seg_len = float(np.linalg.norm(b - a))
        if seg_len <= 1e-9:
            return None
        d = (b - a) / seg_len
        skip = []
        if s > 0:
            skip.append(refl[s - 1])
        elif start_skip is not None:
            skip.append(start_skip)
        if s < len(refl):
            skip.append(refl[s])
        crossed = segment_crossings(env, a, b, skip)
        if [i for _, i in crossed] != slots[s]:
            return None
        for t, i in crossed:
            mat = env.material_for(i)
            if mat.opaque:
                return None
            cosi = min(1.0, abs(float(np.dot(arr.normals[i], d))))
            o = env.obstructions[i]
            interactions.append(Interaction(PENETRATION, o.id, o.material_id, a + t * d, math.acos(cosi)))
        if s < len(refl):
            i = refl[s]
            o = env.obstructions[i]
            cosi = min(1.0, abs(float(np.dot(arr.normals[i], d))))
            interactions.append(Interaction(REFLECTION, o.id, o.material_id, b, math.acos(cosi)))

    length = float(sum(np.linalg.norm(points[s + 1] - points[s]) for s in range(len(points) - 1)))
    return CorrectedPath(
        points=tuple(points), length=length,
        aod=unit(points[1] - points[0]), aoa=unit(points[-2] - points[-1]),
        interactions=tuple(interactions),
        indices=tuple(env.index[x.obstruction_id] for x in interactions),
    )


def interaction_loss_db(env: EnvironmentMap, interactions: Sequence[Interaction]) -> float:
    """Sum of per-interaction losses, each clamped at 0 dB for forward simulation."""
    total = 0.0
    for x in interactions:
        m = env.materials[x.material_id]
        if x.kind == REFLECTION:
            total += max(0.0, m.reflection_loss_db)
        elif x.kind == PENETRATION:
            total += max(0.0, m.penetration_loss_db)
    return total


def dedup_components(raw: Sequence[MultipathComponent]) -> List[MultipathComponent]:
    """One component per signature (the strongest), ordered by power then signature."""
    best: Dict[tuple, MultipathComponent] = {}
    for c in raw:
        kept = best.get(c.surface_signature)
        if kept is None or c.power_dbm > kept.power_dbm:
            best[c.surface_signature] = c
    return sorted(best.values(), key=lambda c: (-c.power_dbm, c.surface_signature))


@dataclass(frozen=True)
class Match:
    measured_index: int
    component: Optional[MultipathComponent]
    deviation_deg: float

    @property
    def matched(self) -> bool:
        return self.component is not None


def match_components(simulated: Sequence[MultipathComponent], measured, threshold_deg: float) -> List[Match]:
    """Pair each measured ``(aoa, aod, power)`` record with the closest simulated path.

    Closeness is the sum of AoA and AoD angular deviations.  Records whose best
    deviation exceeds ``threshold_deg`` come back unmatched.
    """
    out = []
    for j, rec in enumerate(measured):
        aoa, aod = np.asarray(rec[0], dtype=float), np.asarray(rec[1], dtype=float)
        best, best_dev = None, math.inf
        for c in simulated:
            dev = math.degrees(angle_between(c.aoa, aoa) + angle_between(c.aod, aod))
            if dev < best_dev:
                best, best_dev = c, dev
        if best is None or best_dev > threshold_deg:
            out.append(Match(j, None, best_dev))
        else:
            out.append(Match(j, best, best_dev))
    return out


class _NodeStore:
    """Interaction tree shared by all rays: parent pointer, polygon index, kind."""

    def __init__(self):
        self._parent: List[np.ndarray] = []
        self._obs: List[np.ndarray] = []
        self._kind: List[np.ndarray] = []
        self.size = 0

    def add(self, parents, obs, kind: str) -> np.ndarray:
        k = len(parents)
        ids = np.arange(self.size, self.size + k)
        self._parent.append(np.asarray(parents, dtype=np.int64))
        self._obs.append(np.asarray(obs, dtype=np.int64))
        self._kind.append(np.full(k, kind))
        self.size += k
        return ids

    def freeze(self):
        if not self._parent:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, "<U1")
        return np.concatenate(self._parent), np.concatenate(self._obs), np.concatenate(self._kind)


def _chain(node: int, parent, obs, kind):
    """Ordered ``(polygon, kind)`` sequence ending at ``node`` plus the root node id."""
    seq = []
    root = node
    while node >= 0:
        seq.append((int(obs[node]), str(kind[node])))
        root = node
        node = int(parent[node])
    return tuple(reversed(seq)), root


@dataclass
class _Rays:
    origin: np.ndarray
    direction: np.ndarray
    length: np.ndarray      # unfolded distance from the emitter
    ref_dbm: np.ndarray     # power at 1 m from the emitter
    loss: np.ndarray        # accumulated interaction loss, dB
    node: np.ndarray        # last interaction node, -1 at the emitter
    exclude: np.ndarray
    nrefl: np.ndarray
    npen: np.ndarray
    launch: np.ndarray      # index of the launch direction the ray descends from

    def __len__(self):
        return len(self.origin)

    def take(self, mask) -> "_Rays":
        return _Rays(*(getattr(self, f)[mask] for f in self.__dataclass_fields__))


def _material_tables(env: EnvironmentMap):
    mats = env.material_of
    refl = np.array([max(0.0, m.reflection_loss_db) for m in mats])
    pen = np.array([math.inf if m.opaque else max(0.0, m.penetration_loss_db) for m in mats])
    return refl, pen


def _edge_distance(arr, hi, point):
    """Distance from each hit point to the outline of the polygon it lies on."""
    rel = point - arr.origins[hi]
    q = np.stack([np.einsum("ij,ij->i", rel, arr.u[hi]), np.einsum("ij,ij->i", rel, arr.w[hi])], axis=1)
    out = arr.outline[hi]
    a, b = out[:, :-1], out[:, 1:]
    ab = b - a
    aq = q[:, None, :] - a
    den = np.einsum("ikj,ikj->ik", ab, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(den > 0, np.einsum("ikj,ikj->ik", aq, ab) / den, 0.0)
    f = np.clip(f, 0.0, 1.0)
    d = aq - f[..., None] * ab
    return np.sqrt(np.einsum("ikj,ikj->ik", d, d)).min(axis=1)


def _shoot(env, rays: _Rays, rx, alpha, cfg: TraceConfig, nodes: _NodeStore, captured: set,
           rx_gain_max: float, max_refl: int, max_pen: int, stats, on_first_hit=None,
           straddled: Optional[np.ndarray] = None):
    """Propagate a bundle of rays, recording nodes of segments that pass the reception test.

    When ``straddled`` is given, launch directions whose ray tube footprint
    reaches the outline of a polygon they hit are flagged in it.
    """
    refl_loss, pen_loss = _material_tables(env)
    normals = env.arrays.normals
    sens = cfg.rx_sensitivity_dbm
    k = math.sqrt(3.0)
    first = True
    while len(rays):
        idx, t = intersect_rays(rays.origin, rays.direction, env, rays.exclude)
        stats["intersection_tests"] += len(rays) * env.arrays.count

        w = rx - rays.origin
        s = np.einsum("ij,ij->i", w, rays.direction)
        s = np.clip(s, 0.0, t)
        perp = np.linalg.norm(w - s[:, None] * rays.direction, axis=1)
        dist = rays.length + s
        cap = (perp <= cfg.reception_margin * alpha * dist / k) & (rays.node >= 0)
        captured.update(rays.node[cap].tolist())

        hit = idx >= 0
        if on_first_hit is not None and first:
            on_first_hit(rays.take(hit), idx[hit], t[hit])
        first = False
        if not hit.any():
            break
        h = rays.take(hit)
        hi, ht = idx[hit], t[hit]
        point = h.origin + ht[:, None] * h.direction
        length = h.length + ht
        spread = 20.0 * np.log10(np.maximum(length, 1e-12))
        if straddled is not None:
            cosi = np.abs(np.einsum("ij,ij->i", h.direction, normals[hi]))
            footprint = _TUBE_RADIUS * alpha * length / np.maximum(cosi, 1e-3)
            near = _edge_distance(env.arrays, hi, point) < footprint
            straddled[h.launch[near]] = True

        children = []
        # reflections
        m = h.nrefl < max_refl
        if m.any():
            loss = h.loss[m] + refl_loss[hi[m]]
            keep = np.ones(m.sum(), bool) if sens is None else (h.ref_dbm[m] - spread[m] - loss + rx_gain_max >= sens)
            if keep.any():
                sel = np.nonzero(m)[0][keep]
                n = normals[hi[sel]]
                d = h.direction[sel]
                d = d - 2.0 * np.einsum("ij,ij->i", d, n)[:, None] * n
                children.append(_Rays(point[sel], d, length[sel], h.ref_dbm[sel], loss[keep],
                                      nodes.add(h.node[sel], hi[sel], REFLECTION), hi[sel],
                                      h.nrefl[sel] + 1, h.npen[sel], h.launch[sel]))
        # thin-wall penetrations
        m = (h.npen < max_pen) & np.isfinite(pen_loss[hi])
        if m.any():
            loss = h.loss[m] + pen_loss[hi[m]]
            keep = np.ones(m.sum(), bool) if sens is None else (h.ref_dbm[m] - spread[m] - loss + rx_gain_max >= sens)
            if keep.any():
                sel = np.nonzero(m)[0][keep]
                children.append(_Rays(point[sel], h.direction[sel], length[sel], h.ref_dbm[sel], loss[keep],
                                      nodes.add(h.node[sel], hi[sel], PENETRATION), hi[sel],
                                      h.nrefl[sel], h.npen[sel] + 1, h.launch[sel]))
        if not children:
            break
        rays = _Rays(*(np.concatenate([getattr(c, f) for c in children]) for f in _Rays.__dataclass_fields__))


# covering radius of the tessellation in units of its nominal spacing (measured ~0.62)
_TUBE_RADIUS = 0.65

# each split re-launches a tube on a hexagonal grid this many times finer
_SPLIT = 3


def _hex_pattern(factor: int) -> np.ndarray:
    """Hexagonal lattice points (unit spacing) covering a tube of radius ``_TUBE_RADIUS * factor``."""
    r = _TUBE_RADIUS * factor + 1e-9
    n = int(math.ceil(r)) + 1
    pts = []
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            x, y = i + 0.5 * j, j * math.sqrt(3.0) / 2.0
            if math.hypot(x, y) <= r:
                pts.append((x, y))
    pts.sort(key=lambda p: (round(math.hypot(*p), 9), math.atan2(p[1], p[0])))
    return np.array(pts)


def _split_directions(dirs: np.ndarray, alpha: float, factor: int = _SPLIT) -> np.ndarray:
    """Directions around each of ``dirs`` on a hexagonal grid of spacing ``alpha / factor``."""
    pattern = _hex_pattern(factor)
    helper = np.where(np.abs(dirs[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(dirs, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(dirs, e1)
    step = math.tan(alpha / factor)
    out = dirs[:, None, :] + step * (pattern[None, :, 0:1] * e1[:, None, :] + pattern[None, :, 1:2] * e2[:, None, :])
    out = out.reshape(-1, 3)
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _lobe_gains(dirs: np.ndarray, incident: np.ndarray, normal: np.ndarray, params: ScatteringParameters):
    spec = incident - 2.0 * float(np.dot(incident, normal)) * normal
    cf = np.clip(dirs @ spec, -1.0, 1.0)
    cb = np.clip(dirs @ -incident, -1.0, 1.0)
    return (params.lambda_mix * ((1.0 + cf) / 2.0) ** params.alpha_forward
            + (1.0 - params.lambda_mix) * ((1.0 + cb) / 2.0) ** params.alpha_back)


def trace(env: EnvironmentMap, tx: AntennaPose, rx: AntennaPose,
          tx_pattern: Optional[AntennaPattern] = None, rx_pattern: Optional[AntennaPattern] = None,
          config: TraceConfig = TraceConfig()) -> TraceResult:
    """Find the multipath components between ``tx`` and ``rx``."""
    tx_pattern = tx_pattern or isotropic_pattern()
    rx_pattern = rx_pattern or isotropic_pattern()
    tpos, rpos = tx.position, rx.position
    if np.allclose(tpos, rpos, atol=1e-9, rtol=0):
        raise InvalidParameterError("TX and RX positions coincide")
    for name, p in (("TX", tpos), ("RX", rpos)):
        if not env.contains(p):
            raise InvalidParameterError(f"{name} position {p.tolist()} lies outside the environment bounds")

    cfg = config
    stats = {"rays_launched": 0, "scatter_rays_launched": 0, "intersection_tests": 0,
             "candidates": 0, "components_before_dedup": 0, "components_after_dedup": 0}
    tess = tessellate_icosahedron(cfg.tessellation_frequency)
    dirs = np.array(tess.directions)

    def launch(d):
        n = len(d)
        stats["rays_launched"] += n
        ref0 = cfg.tx_power_dbm + gains_toward(tx_pattern, tx, d) - fspl_db(1.0, cfg.frequency_ghz)
        return _Rays(np.tile(tpos, (n, 1)), d, np.zeros(n), ref0, np.zeros(n),
                     np.full(n, -1, np.int64), np.full(n, -1, np.int64),
                     np.zeros(n, np.int64), np.zeros(n, np.int64), np.arange(n))

    nodes = _NodeStore()
    captured: set = set()
    scatter_hits = []

    def collect(first_hits: _Rays, hi, ht):
        if not cfg.scattering_enabled or len(hi) == 0:
            return
        lam = wavelength_m(cfg.frequency_ghz)
        normals = env.arrays.normals
        for r in range(len(hi)):
            i = int(hi[r])
            mat = env.material_for(i)
            d = first_hits.direction[r]
            cosi = min(1.0, abs(float(np.dot(normals[i], d))))
            theta = math.acos(cosi)
            rough = theta < math.pi / 2 and mat.roughness_height_m > rayleigh_critical_height(lam, theta)
            if mat.scattering or rough:
                scatter_hits.append((first_hits.origin[r] + ht[r] * d, i, d, float(ht[r]), theta,
                                     float(first_hits.ref_dbm[r] - 20.0 * math.log10(max(ht[r], 1e-12)))))

    rx_gain_max = rx_pattern.max_gain_dbi
    alpha = tess.spacing_rad
    straddled = np.zeros(len(dirs), bool)
    _shoot(env, launch(dirs), rpos, alpha, cfg, nodes, captured, rx_gain_max,
           cfg.max_reflections, cfg.max_penetrations, stats, on_first_hit=collect, straddled=straddled)
    # ray splitting: tubes cut by a polygon outline are re-shot on a finer local grid
    for level in range(cfg.refinement_levels):
        if not straddled.any():
            break
        dirs = _split_directions(dirs[straddled], alpha)
        alpha /= _SPLIT
        straddled = np.zeros(len(dirs), bool)
        _shoot(env, launch(dirs), rpos, alpha, cfg, nodes, captured, rx_gain_max,
               cfg.max_reflections, cfg.max_penetrations, stats,
               straddled=straddled if level + 1 < cfg.refinement_levels else None)

    # diffuse scattering: one scatter bounce at a first-order hit, then specular
    scatter_nodes: Dict[int, int] = {}
    if scatter_hits:
        stess = tessellate_icosahedron(cfg.scatter_frequency)
        chunks = []
        s_nodes = nodes.add(np.full(len(scatter_hits), -1), [h[1] for h in scatter_hits], SCATTERING)
        for k, (p, i, d_in, s1, theta, inc_dbm) in enumerate(scatter_hits):
            scatter_nodes[int(s_nodes[k])] = k
            n = env.arrays.normals[i]
            side = -n if np.dot(n, d_in) > 0 else n
            # open hemisphere: grazing directions never leave the surface
            h = stess.directions[stess.directions @ side > 0.0]
            lobe = _lobe_gains(h, d_in, n, cfg.scattering)
            with np.errstate(divide="ignore"):
                ref = inc_dbm + 20.0 * math.log10(max(cfg.scattering.s_coefficient, 1e-300)) + 10.0 * np.log10(lobe)
            m = len(h)
            chunks.append(_Rays(np.tile(p, (m, 1)), h, np.zeros(m), ref, np.zeros(m),
                                np.full(m, s_nodes[k]), np.full(m, i), np.zeros(m, np.int64),
                                np.zeros(m, np.int64), np.zeros(m, np.int64)))
        srays = _Rays(*(np.concatenate([getattr(c, f) for c in chunks]) for f in _Rays.__dataclass_fields__))
        stats["scatter_rays_launched"] = len(srays)
        _shoot(env, srays, rpos, stess.spacing_rad, cfg, nodes, captured, rx_gain_max,
               max(0, cfg.max_reflections - 1), cfg.max_penetrations, stats)

    parent, obs, kind = nodes.freeze()
    candidates = set()
    scatter_candidates = set()
    for node in captured:
        chain, root = _chain(node, parent, obs, kind)
        if chain[0][1] == SCATTERING:
            scatter_candidates.add((scatter_nodes[root], chain[1:]))
        else:
            candidates.add(chain)

    # corner twins: a path hugging the edge between two reflectors has a launch window narrower
    # than the ray spacing, while the reversed order usually has a wide one; validation rejects misfits
    for sig in sorted(candidates):
        for k in range(len(sig) - 1):
            a, b = sig[k], sig[k + 1]
            if a[1] == REFLECTION and b[1] == REFLECTION and a[0] != b[0]:
                candidates.add(sig[:k] + (b, a) + sig[k + 2:])

    # the direct line, possibly through thin walls
    direct = segment_crossings(env, tpos, rpos)
    los_blocked = bool(direct)
    if len(direct) <= cfg.max_penetrations and all(not env.material_for(i).opaque for _, i in direct):
        candidates.add(tuple((i, PENETRATION) for _, i in direct))
    stats["candidates"] = len(candidates) + len(scatter_candidates)

    raw = []
    for sig in sorted(candidates):
        raw.append(_specular_component(sig, env, tx, rx, tx_pattern, rx_pattern, cfg))
    for k, rest in sorted(scatter_candidates):
        raw.append(_scatter_component(scatter_hits[k], rest, env, tx, rx, tx_pattern, rx_pattern, cfg))
    raw = [c for c in raw if c is not None
           and (cfg.rx_sensitivity_dbm is None or c.power_dbm >= cfg.rx_sensitivity_dbm)]
    stats["components_before_dedup"] = len(raw)
    comps = dedup_components(raw)
    stats["components_after_dedup"] = len(comps)
    return TraceResult(comps, los_blocked, stats)


def _signature_ids(env, interactions):
    return tuple((x.obstruction_id, x.kind) for x in interactions)


def _specular_component(sig, env, tx, rx, tx_pattern, rx_pattern, cfg) -> Optional[MultipathComponent]:
    path = correct_path(sig, tx.position, rx.position, env)
    if path is None:
        return None
    power = (cfg.tx_power_dbm + gain_toward(tx_pattern, tx, path.aod) + gain_toward(rx_pattern, rx, path.aoa)
             - fspl_db(path.length, cfg.frequency_ghz) - interaction_loss_db(env, path.interactions))
    return MultipathComponent(
        aod=path.aod, aoa=path.aoa, tof_ns=path.length / SPEED_OF_LIGHT * 1e9,
        path_length_m=path.length, power_dbm=power, interactions=path.interactions,
        surface_signature=_signature_ids(env, path.interactions))


def _scatter_component(hit, rest, env, tx, rx, tx_pattern, rx_pattern, cfg) -> Optional[MultipathComponent]:
    p, i, d_in, s1, theta, inc_dbm = hit
    path = correct_path(rest, p, rx.position, env, start_skip=i)
    if path is None:
        return None
    n = env.arrays.normals[i]
    side = -n if np.dot(n, d_in) > 0 else n
    if float(np.dot(path.aod, side)) <= 0.0:
        return None
    spec = d_in - 2.0 * float(np.dot(d_in, n)) * n
    lobe = scatter_gain(angle_between(path.aod, spec), angle_between(path.aod, -d_in), cfg.scattering)
    power = (scattered_power_dbm(inc_dbm, s1, path.length, lobe, cfg.scattering, cfg.frequency_ghz)
             - interaction_loss_db(env, path.interactions) + gain_toward(rx_pattern, rx, path.aoa))
    o = env.obstructions[i]
    scat = Interaction(SCATTERING, o.id, o.material_id, p, theta)
    interactions = (scat,) + path.interactions
    length = s1 + path.length
    return MultipathComponent(
        aod=unit(d_in), aoa=path.aoa, tof_ns=length / SPEED_OF_LIGHT * 1e9, path_length_m=length,
        power_dbm=power, interactions=interactions, surface_signature=_signature_ids(env, interactions))
