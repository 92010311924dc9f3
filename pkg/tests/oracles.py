"""Independent reference computations used by the test-suite.

Nothing here imports the tracer; the box-room image method works in the
room's own axis-aligned frame with coordinate flips only.
"""

import itertools
import math
from fractions import Fraction

import numpy as np

from raycal.geometry import EnvironmentMap, Obstruction
from raycal.propagation import MaterialProfile

C = 299_792_458.0

# wall name -> (axis, side); side 0 is the min face, 1 the max face
WALLS = {"x0": (0, 0), "x1": (0, 1), "y0": (1, 0), "y1": (1, 1), "z0": (2, 0), "z1": (2, 1)}


def friis_db(d, f_ghz):
    lam = C / (f_ghz * 1e9)
    return -20.0 * math.log10(lam / (4.0 * math.pi * d))


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def box_face(size, axis, side):
    """Corners of one box face, counter-clockwise seen from inside the room."""
    a1, a2 = [a for a in range(3) if a != axis]
    corners = []
    for u, v in ((0, 0), (1, 0), (1, 1), (0, 1)):
        p = np.zeros(3)
        p[axis] = size[axis] * side
        p[a1] = size[a1] * u
        p[a2] = size[a2] * v
        corners.append(p)
    corners = np.array(corners)
    inward = np.zeros(3)
    inward[axis] = 1.0 if side == 0 else -1.0
    n = np.cross(corners[1] - corners[0], corners[2] - corners[0])
    if np.dot(n, inward) < 0:
        corners = corners[::-1]
    return corners


def box_environment(size, losses, rotation=None, shift=None, walls=None):
    """Opaque box room, optionally rotated/translated into world coordinates."""
    rotation = np.eye(3) if rotation is None else rotation
    shift = np.zeros(3) if shift is None else np.asarray(shift, float)
    walls = list(WALLS) if walls is None else walls
    mats = {}
    obs = []
    for name in walls:
        axis, side = WALLS[name]
        mats["m_" + name] = MaterialProfile("m_" + name, losses[name], None)
        corners = box_face(size, axis, side) @ rotation.T + shift
        obs.append(Obstruction(name, corners, "m_" + name))
    return EnvironmentMap.build(obs, mats)


def image_method_box(size, tx, rx, losses, max_bounces, f_ghz, tx_power_dbm=0.0, walls=None):
    """All specular paths of a box room up to ``max_bounces`` in its local frame.

    Returns ``{signature: (length, power_dbm, points)}``.
    """
    walls = list(WALLS) if walls is None else walls
    tx = np.asarray(tx, float)
    rx = np.asarray(rx, float)
    out = {(): (float(np.linalg.norm(rx - tx)), None, [tx, rx])}
    for k in range(1, max_bounces + 1):
        for seq in itertools.product(walls, repeat=k):
            if any(seq[i] == seq[i + 1] for i in range(k - 1)):
                continue
            imgs = [None] * k
            cur = rx.copy()
            for m in range(k - 1, -1, -1):
                axis, side = WALLS[seq[m]]
                cur = cur.copy()
                cur[axis] = 2.0 * size[axis] * side - cur[axis]
                imgs[m] = cur
            pts = [tx]
            p = tx
            ok = True
            for m in range(k):
                axis, side = WALLS[seq[m]]
                plane = size[axis] * side
                q = imgs[m]
                if q[axis] == p[axis]:
                    ok = False
                    break
                t = (plane - p[axis]) / (q[axis] - p[axis])
                if not 0.0 < t < 1.0:
                    ok = False
                    break
                x = p + t * (q - p)
                if any(x[a] < 0.0 or x[a] > size[a] for a in range(3) if a != axis):
                    ok = False
                    break
                pts.append(x)
                p = x
            if not ok:
                continue
            pts.append(rx)
            length = sum(float(np.linalg.norm(pts[i + 1] - pts[i])) for i in range(len(pts) - 1))
            out[tuple(seq)] = (length, None, pts)
    result = {}
    for seq, (length, _, pts) in out.items():
        power = tx_power_dbm - friis_db(length, f_ghz) - sum(losses[w] for w in seq)
        result[seq] = (length, power, pts)
    return result


def moment_delay_spread(taus, powers):
    """Second central moment in exact rational arithmetic, rounded once at the end."""
    p = [Fraction(float(x)) for x in powers]
    t = [Fraction(float(x)) for x in taus]
    total = sum(p)
    m1 = sum(a * b for a, b in zip(p, t)) / total
    m2 = sum(a * b * b for a, b in zip(p, t)) / total
    return math.sqrt(m2 - m1 * m1)
