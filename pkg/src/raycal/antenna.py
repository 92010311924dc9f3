"""Rotationally symmetric antenna patterns built from a single azimuth cut."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, SchemaError
from .geometry import angle_between

SYNTHETIC_FLOOR_DB = -40.0


@dataclass(frozen=True)
class AntennaPattern:
    """Boresight gain plus a relative-gain cut over [-180, 180] degrees.

    The 3D pattern is the cut rotated about the boresight axis, so the gain
    depends only on the off-boresight angle.
    """

    boresight_gain_dbi: float
    angles_deg: np.ndarray
    gains_db: np.ndarray
    hpbw_deg: float

    def __post_init__(self):
        ang = np.asarray(self.angles_deg, dtype=float)
        g = np.asarray(self.gains_db, dtype=float)
        if ang.shape != g.shape or ang.ndim != 1 or len(ang) < 2:
            raise InvalidParameterError("azimuth cut needs matching angle and gain columns")
        order = np.argsort(ang, kind="stable")
        ang, g = ang[order], g[order]
        if np.any(np.diff(ang) <= 0):
            raise InvalidParameterError("azimuth cut angles must be distinct")
        if ang[0] > -180.0 + 1e-9 or ang[-1] < 180.0 - 1e-9:
            raise InvalidParameterError("azimuth cut must cover [-180, 180] degrees")
        if np.any(g > 1e-9):
            raise InvalidParameterError("relative gains must be <= 0 dB")
        if abs(float(np.interp(0.0, ang, g))) > 0.01:
            raise InvalidParameterError("relative gain at boresight must be 0 dB")
        if not self.hpbw_deg > 0:
            raise InvalidParameterError("HPBW must be positive")
        ang.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "angles_deg", ang)
        object.__setattr__(self, "gains_db", g)

    def relative_gain_db(self, theta_deg):
        """Relative gain at off-boresight angle(s) in [0, 180] degrees.

        Both sides of the cut are interpolated (linear in dB) and averaged; for a
        symmetric cut that is just the lookup.
        """
        theta = np.abs(np.asarray(theta_deg, dtype=float))
        return 0.5 * (np.interp(theta, self.angles_deg, self.gains_db)
                      + np.interp(-theta, self.angles_deg, self.gains_db))

    @property
    def max_gain_dbi(self) -> float:
        return self.boresight_gain_dbi


@dataclass(frozen=True)
class AntennaPose:
    position: np.ndarray
    boresight: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        b = np.asarray(self.boresight, dtype=float)
        if p.shape != (3,) or b.shape != (3,):
            raise InvalidParameterError("pose position and boresight must be 3-vectors")
        nb = np.linalg.norm(b)
        if nb == 0 or not np.isfinite(nb):
            raise InvalidParameterError("boresight must be non-zero")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "boresight", b / nb)

    @classmethod
    def from_angles(cls, position, azimuth_deg: float, elevation_deg: float) -> "AntennaPose":
        return cls(position, direction_from_angles(azimuth_deg, elevation_deg))


def direction_from_angles(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit vector; azimuth counter-clockwise from +x in the xy plane, elevation above it."""
    az, el = math.radians(azimuth_deg), math.radians(elevation_deg)
    return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])


def angles_from_direction(d) -> tuple:
    """Inverse of :func:`direction_from_angles`, in degrees."""
    x, y, z = (float(v) for v in d)
    az = math.degrees(math.atan2(y, x))
    el = math.degrees(math.atan2(z, math.hypot(x, y)))
    return az, el


def gain_toward(pattern: AntennaPattern, pose: AntennaPose, direction) -> float:
    """Gain in dBi along ``direction`` for an antenna at ``pose``."""
    theta = math.degrees(angle_between(pose.boresight, direction))
    return pattern.boresight_gain_dbi + float(pattern.relative_gain_db(theta))


def gains_toward(pattern: AntennaPattern, pose: AntennaPose, directions: np.ndarray) -> np.ndarray:
    """Vectorised :func:`gain_toward` for an ``(n, 3)`` array of unit directions."""
    d = np.asarray(directions, dtype=float)
    cross = np.linalg.norm(np.cross(d, pose.boresight), axis=1)
    theta = np.degrees(np.arctan2(cross, d @ pose.boresight))
    return pattern.boresight_gain_dbi + pattern.relative_gain_db(theta)


def synthetic_pattern(hpbw_deg: float, boresight_gain_dbi: float,
                      step_deg: float = 0.1) -> AntennaPattern:
    """Gaussian main lobe, ``-3 (2 theta / hpbw)^2`` dB, floored at -40 dB."""
    if not 0.0 < hpbw_deg < 180.0:
        raise InvalidParameterError(f"HPBW must lie in (0, 180) degrees, got {hpbw_deg!r}")
    n = int(round(180.0 / step_deg))
    ang = np.linspace(-180.0, 180.0, 2 * n + 1)
    g = np.maximum(-3.0 * (2.0 * ang / hpbw_deg) ** 2, SYNTHETIC_FLOOR_DB)
    return AntennaPattern(boresight_gain_dbi, ang, g, hpbw_deg)


def isotropic_pattern(gain_dbi: float = 0.0) -> AntennaPattern:
    return AntennaPattern(gain_dbi, np.array([-180.0, 180.0]), np.zeros(2), 360.0)


def load_pattern_csv(path, boresight_gain_dbi: float, hpbw_deg: float) -> AntennaPattern:
    """Read a cut file with header ``angle_deg,relative_gain_db``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["angle_deg", "relative_gain_db"]:
            raise SchemaError(f"{path}: expected header angle_deg,relative_gain_db", field="header")
        rows = []
        for line, row in enumerate(reader, start=2):
            try:
                rows.append((float(row["angle_deg"]), float(row["relative_gain_db"])))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{line}: non-numeric value", field="relative_gain_db") from exc
    if not rows:
        raise SchemaError(f"{path}: no samples")
    a, g = zip(*rows)
    try:
        return AntennaPattern(boresight_gain_dbi, np.array(a), np.array(g), hpbw_deg)
    except InvalidParameterError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def write_pattern_csv(path, pattern: AntennaPattern) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["angle_deg", "relative_gain_db"])
        for a, g in zip(pattern.angles_deg, pattern.gains_db):
            w.writerow([f"{a:.9g}", f"{g:.9g}"])
