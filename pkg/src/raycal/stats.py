"""Secondary channel statistics computed from traced (or measured) components."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import EmptyProfileError, InvalidParameterError

# sounder multipath resolution, ns
RESOLUTION_NS = {28.0: 2.5, 73.0: 2.0, 142.0: 2.0}

# reported when the mean resultant vanishes (antipodal arrivals); sqrt(-2 ln r) diverges there
ANGULAR_SPREAD_CAP_DEG = 180.0


@dataclass(frozen=True)
class PowerDelayProfile:
    delays_ns: np.ndarray
    powers_mw: np.ndarray
    resolution_ns: float

    @property
    def bins(self):
        return list(zip(self.delays_ns.tolist(), self.powers_mw.tolist()))


@dataclass(frozen=True)
class SpreadReport:
    rms_delay_spread_ns: float
    rms_angular_spread_deg: float
    n_components: int
    angular_degenerate: bool = False


@dataclass(frozen=True)
class ComparisonRow:
    statistic: str
    mean_measured: float
    mean_predicted: float
    mean_delta: float
    std_measured: Optional[float]
    std_predicted: Optional[float]
    std_delta: Optional[float]


def _arrays(components):
    """``(tof_ns, power_mw, aoa_azimuth_rad)`` from components or plain tuples."""
    tof, p, az = [], [], []
    for c in components:
        if hasattr(c, "tof_ns"):
            tof.append(c.tof_ns)
            p.append(10.0 ** (c.power_dbm / 10.0))
            az.append(math.atan2(c.aoa[1], c.aoa[0]))
        else:
            t, pdbm, a = c
            tof.append(t)
            p.append(10.0 ** (pdbm / 10.0))
            az.append(math.radians(a))
    return np.array(tof, float), np.array(p, float), np.array(az, float)


def synthesize_pdp(components, resolution_ns: float) -> PowerDelayProfile:
    """Bin component powers (mW) into delay bins starting at the earliest arrival."""
    if not resolution_ns > 0:
        raise InvalidParameterError("resolution must be positive")
    if len(components) == 0:
        raise EmptyProfileError("cannot build a power-delay profile from no components")
    tof, p, _ = _arrays(components)
    t0 = tof.min()
    idx = np.floor((tof - t0) / resolution_ns + 1e-9).astype(np.int64)
    nbins = int(idx.max()) + 1
    powers = np.bincount(idx, weights=p, minlength=nbins)
    delays = t0 + resolution_ns * np.arange(nbins)
    occupied = powers > 0
    return PowerDelayProfile(delays[occupied], powers[occupied], float(resolution_ns))


def rms_delay_spread(components) -> float:
    """Power-weighted standard deviation of arrival times, ns."""
    tof, p, _ = _arrays(components)
    if len(tof) == 0:
        raise EmptyProfileError("delay spread needs at least one component")
    return _delay_spread(tof, p)


def _delay_spread(tof: np.ndarray, p: np.ndarray) -> float:
    w = p / p.sum()
    # centre first: the moment formula is invariant to a common offset and this keeps it exact
    t = tof - np.sum(w * tof)
    return float(math.sqrt(max(float(np.sum(w * t * t)), 0.0)))


def rms_angular_spread(components) -> float:
    """Circular azimuth spread of arrivals, ``sqrt(-2 ln R)`` in degrees."""
    return angular_spread_report(components)[0]


def angular_spread_report(components):
    """``(spread_deg, degenerate)``; ``degenerate`` is set when the resultant vanishes."""
    _, p, az = _arrays(components)
    if len(p) == 0:
        raise EmptyProfileError("angular spread needs at least one component")
    return _angular_spread(az, p)


def _angular_spread(az: np.ndarray, p: np.ndarray):
    total = p.sum()
    res = np.sum(p * np.exp(1j * az))
    if abs(res) / total <= 1e-12:
        return ANGULAR_SPREAD_CAP_DEG, True
    # 1 - R as a sum of nonnegative terms about the mean direction; forming R first
    # and taking its log loses everything to rounding when the arrivals are tight
    half = 0.5 * (az - np.angle(res))
    one_minus_r = float(np.sum(p * 2.0 * np.sin(half) ** 2) / total)
    spread = math.sqrt(max(-2.0 * math.log1p(-min(one_minus_r, 1.0 - 1e-12)), 0.0))
    return min(math.degrees(spread), ANGULAR_SPREAD_CAP_DEG), False


def spread_report(components) -> SpreadReport:
    tof, p, az = _arrays(components)
    if len(tof) == 0:
        raise EmptyProfileError("spread report needs at least one component")
    ang, degenerate = _angular_spread(az, p)
    return SpreadReport(_delay_spread(tof, p), ang, len(tof), degenerate)


def _mean_std(values: Sequence[float]):
    v = np.asarray(values, float)
    mean = float(np.mean(v))
    std = float(np.std(v, ddof=1)) if len(v) > 1 else None
    return mean, std


def compare_statistics(measured: Sequence[SpreadReport], simulated: Sequence[SpreadReport]) -> List[ComparisonRow]:
    """Per-statistic means and standard deviations with measured-minus-predicted differences.

    Standard deviations use the sample (n-1) estimator and are ``None`` for a
    single location.
    """
    if len(measured) != len(simulated):
        raise InvalidParameterError(
            f"location lists differ in length: {len(measured)} measured vs {len(simulated)} simulated")
    if not measured:
        raise InvalidParameterError("no locations to compare")
    rows = []
    for name, attr in (("rms_angular_spread_deg", "rms_angular_spread_deg"),
                       ("rms_delay_spread_ns", "rms_delay_spread_ns")):
        mm, sm = _mean_std([getattr(r, attr) for r in measured])
        mp, sp = _mean_std([getattr(r, attr) for r in simulated])
        sd = None if sm is None or sp is None else sm - sp
        rows.append(ComparisonRow(name, mm, mp, mm - mp, sm, sp, sd))
    return rows


def fixed(x: float, digits: int) -> str:
    """Fixed-point text without a sign on values that round to zero."""
    s = f"{x:.{digits}f}"
    return s[1:] if s.startswith("-") and float(s) == 0.0 else s


def format_comparison(rows: Sequence[ComparisonRow]) -> str:
    """Plain-text table: mean and std for measured and predicted with their differences."""
    def f(v):
        return "n/a" if v is None else fixed(v, 1)

    header = f"{'statistic':<24}{'mu meas':>9}{'mu pred':>9}{'delta':>8}{'sd meas':>9}{'sd pred':>9}{'delta':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.statistic:<24}{f(r.mean_measured):>9}{f(r.mean_predicted):>9}{f(r.mean_delta):>8}"
                     f"{f(r.std_measured):>9}{f(r.std_predicted):>9}{f(r.std_delta):>8}")
    return "\n".join(lines)
