"""Per-interaction power bookkeeping.

Everything here works in dB/dBm except :func:`scatter_gain`, which returns a
linear power ratio.  Reflection and penetration losses are constant per
material, independent of incidence angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import InvalidParameterError

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class MaterialProfile:
    """Electrical behaviour of one material.

    ``penetration_loss_db`` is ``None`` for opaque materials: no transmitted
    ray is spawned.  ``scattering`` forces diffuse scattering on regardless of
    the Rayleigh roughness test.
    """

    name: str
    reflection_loss_db: float
    penetration_loss_db: Optional[float] = None
    roughness_height_m: float = 0.0
    scattering: bool = False

    def __post_init__(self):
        if not math.isfinite(self.reflection_loss_db):
            raise InvalidParameterError(f"material {self.name!r}: reflection loss must be finite")
        if self.penetration_loss_db is not None and not math.isfinite(self.penetration_loss_db):
            raise InvalidParameterError(f"material {self.name!r}: penetration loss must be finite")
        if self.roughness_height_m < 0:
            raise InvalidParameterError(f"material {self.name!r}: roughness height must be >= 0")

    @property
    def opaque(self) -> bool:
        return self.penetration_loss_db is None


@dataclass(frozen=True)
class ScatteringParameters:
    """Dual-lobe directive scattering parameters.

    Defaults are the values held fixed for every material during calibration.
    """

    lambda_mix: float = 0.8
    alpha_back: int = 10
    alpha_forward: int = 10
    s_coefficient: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise InvalidParameterError("lambda_mix must lie in [0, 1]")
        if self.alpha_back < 1 or self.alpha_forward < 1:
            raise InvalidParameterError("lobe width exponents must be >= 1")
        if not 0.0 <= self.s_coefficient <= 1.0:
            raise InvalidParameterError("s_coefficient must lie in [0, 1]")


def wavelength_m(frequency_ghz: float) -> float:
    if frequency_ghz <= 0:
        raise InvalidParameterError("frequency must be positive")
    return SPEED_OF_LIGHT / (frequency_ghz * 1e9)


def fspl_db(distance: float, frequency_ghz: float) -> float:
    """Friis free-space path loss, ``20 log10(4 pi d f / c)``."""
    if not distance > 0 or not frequency_ghz > 0:
        raise InvalidParameterError("distance and frequency must be positive")
    return 20.0 * math.log10(4.0 * math.pi * distance * frequency_ghz * 1e9 / SPEED_OF_LIGHT)


def reflect_power_db(incident_dbm: float, material: MaterialProfile) -> float:
    return incident_dbm - material.reflection_loss_db


def penetrate_power_db(incident_dbm: float, material: MaterialProfile) -> Optional[float]:
    """Power after a thin-wall crossing, or ``None`` when the material is opaque."""
    if material.opaque:
        return None
    return incident_dbm - material.penetration_loss_db


def rayleigh_critical_height(wavelength: float, incidence_angle: float) -> float:
    """Surface perturbation height above which the surface counts as rough."""
    if wavelength <= 0:
        raise InvalidParameterError("wavelength must be positive")
    if not 0.0 <= incidence_angle < math.pi / 2:
        raise InvalidParameterError("incidence angle must lie in [0, pi/2)")
    return wavelength / (8.0 * math.cos(incidence_angle))


def is_rough(material: MaterialProfile, wavelength: float, incidence_angle: float) -> bool:
    if incidence_angle >= math.pi / 2:
        return False
    return material.roughness_height_m > rayleigh_critical_height(wavelength, incidence_angle)


def scatter_gain(psi_forward: float, psi_back: float, params: ScatteringParameters) -> float:
    """Dual-lobe pattern factor in [0, 1].

    ``psi_forward`` is the angle between the scattered ray and the specular
    direction, ``psi_back`` the angle between the scattered ray and the
    reversed incident direction.
    """
    for name, psi in (("psi_forward", psi_forward), ("psi_back", psi_back)):
        if not 0.0 <= psi <= math.pi:
            raise InvalidParameterError(f"{name} must lie in [0, pi], got {psi!r}")
    fwd = ((1.0 + math.cos(psi_forward)) / 2.0) ** params.alpha_forward
    back = ((1.0 + math.cos(psi_back)) / 2.0) ** params.alpha_back
    return params.lambda_mix * fwd + (1.0 - params.lambda_mix) * back


def scattered_power_dbm(incident_dbm: float, seg1: float, seg2: float, lobe_gain: float,
                        params: ScatteringParameters, frequency_ghz: float) -> float:
    """Power re-radiated from a scatter point and carried over ``seg2``.

    ``incident_dbm`` is the power arriving at the scatterer (TX-side spreading
    over ``seg1`` already applied).  The scatterer re-radiates
    ``S**2 * lobe_gain`` of it referenced to 1 m, then Friis spreading over
    ``seg2`` applies.  Composed with the TX leg this gives the 1/(s1 s2)^2 law.
    """
    if not seg1 > 0 or not seg2 > 0:
        raise InvalidParameterError("path segments must be positive")
    if lobe_gain <= 0 or params.s_coefficient == 0:
        return -math.inf
    return (incident_dbm
            + 20.0 * math.log10(params.s_coefficient)
            + 10.0 * math.log10(lobe_gain)
            - fspl_db(seg2, frequency_ghz)
            + fspl_db(1.0, frequency_ghz))
