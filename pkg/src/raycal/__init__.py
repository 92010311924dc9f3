"""Site-specific radio ray tracing with least-squares material calibration."""

from .antenna import AntennaPattern, AntennaPose, isotropic_pattern, synthetic_pattern
from .calibration import (
    CalibrationSystem, LossVector, MeasurementRecord, assemble_system, error_statistics,
    solve_linear_domain, solve_log_domain,
)
from .errors import (
    EmptyProfileError, EmptySystemError, InsufficientDataError, InvalidParameterError, RaycalError,
    SchemaError,
)
from .geometry import EnvironmentMap, Obstruction, load_environment, tessellate_icosahedron
from .propagation import MaterialProfile, ScatteringParameters, fspl_db
from .stats import rms_angular_spread, rms_delay_spread, synthesize_pdp
from .tracer import MultipathComponent, TraceConfig, TraceResult, trace

__version__ = "0.1.0"
