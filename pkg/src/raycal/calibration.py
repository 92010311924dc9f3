"""Material loss calibration against directional power measurements.

Every matched measurement contributes one linear equation in the unknown
per-material losses (dB)::

    A_j = P_TX + G_T + G_R - FSPL(d_j) - P_meas = sum_i w_pen[i,j] Lpen_i + w_ref[i,j] Lref_i

Stacking the rows gives ``W L = A``.  The dB-domain fit is the closed-form
least-squares solution; the linear-domain fit anneals the linear
coefficients ``l = 10**(-L/10)`` against ``B_j = 10**(-A_j/10)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .antenna import AntennaPattern, AntennaPose, gain_toward, isotropic_pattern
from .errors import EmptySystemError, InsufficientDataError, InvalidParameterError
from .geometry import EnvironmentMap
from .propagation import MaterialProfile, fspl_db
from .tracer import (
    PENETRATION, REFLECTION, MultipathComponent, TraceConfig, match_components, trace,
)

log = logging.getLogger(__name__)

# uncalibrated discovery materials: amplitude reflection coefficient 0.9, 1 dB per wall crossing
DISCOVERY_REFLECTION_COEFF = 0.9
DISCOVERY_REFLECTION_LOSS_DB = -20.0 * math.log10(DISCOVERY_REFLECTION_COEFF)
DISCOVERY_PENETRATION_LOSS_DB = 1.0


@dataclass(frozen=True)
class MeasurementRecord:
    """One directional measurement: both antennas pointed, strongest path power recorded."""

    id: str
    tx_pose: AntennaPose
    rx_pose: AntennaPose
    tx_power_dbm: float
    measured_power_dbm: float
    frequency_ghz: float
    tx_pattern: AntennaPattern = field(default_factory=isotropic_pattern)
    rx_pattern: AntennaPattern = field(default_factory=isotropic_pattern)

    def __post_init__(self):
        for name in ("tx_power_dbm", "measured_power_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"record {self.id!r}: {name} must be finite")
        if not self.frequency_ghz > 0:
            raise InvalidParameterError(f"record {self.id!r}: frequency must be positive")


@dataclass
class CalibrationSystem:
    """``W L = A`` plus the bookkeeping needed to report on it.

    Columns of ``weights`` are the penetration counts of every material in
    ``material_order`` followed by the reflection counts.
    """

    weights: np.ndarray
    residuals: np.ndarray
    material_order: Tuple[str, ...]
    record_ids: Tuple[str, ...]
    matched: Tuple[MultipathComponent, ...] = ()
    unmatched_ids: Tuple[str, ...] = ()
    no_unknown_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        m = len(self.residuals)
        if self.weights.shape != (m, 2 * len(self.material_order)):
            raise InvalidParameterError("weight matrix must be M x 2N")
        if not np.all(np.isfinite(self.residuals)):
            raise InvalidParameterError("residuals must be finite")

    @property
    def column_labels(self) -> List[str]:
        return ([f"pen:{m}" for m in self.material_order]
                + [f"ref:{m}" for m in self.material_order])

    @property
    def retained_columns(self) -> np.ndarray:
        """Indices of columns with at least one nonzero weight."""
        return np.nonzero(np.any(self.weights != 0, axis=0))[0]

    @property
    def linear_targets(self) -> np.ndarray:
        """``B_j``: measured-over-free-space power ratio, the linear product of the coefficients."""
        return 10.0 ** (-self.residuals / 10.0)


@dataclass(frozen=True)
class LossVector:
    """Penetration losses then reflection losses in dB; ``nan`` where there is no estimate."""

    values: np.ndarray
    material_order: Tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.material_order)

    @property
    def estimated(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def negative(self) -> List[str]:
        labels = ([f"pen:{m}" for m in self.material_order]
                  + [f"ref:{m}" for m in self.material_order])
        return [lab for lab, v in zip(labels, self.values) if np.isfinite(v) and v < 0]

    def penetration_db(self, material: str) -> Optional[float]:
        v = self.values[self.material_order.index(material)]
        return float(v) if np.isfinite(v) else None

    def reflection_db(self, material: str) -> Optional[float]:
        v = self.values[self.n + self.material_order.index(material)]
        return float(v) if np.isfinite(v) else None

    def as_materials(self, base: Dict[str, MaterialProfile]) -> Dict[str, MaterialProfile]:
        """Calibrated profiles for forward simulation: losses clamped at 0 dB,
        unestimated entries keep the values in ``base``."""
        out = {}
        for name, mat in base.items():
            ref = mat.reflection_loss_db
            pen = mat.penetration_loss_db
            if name in self.material_order:
                r = self.reflection_db(name)
                p = self.penetration_db(name)
                if r is not None:
                    ref = max(0.0, r)
                if p is not None and not mat.opaque:
                    pen = max(0.0, p)
            out[name] = MaterialProfile(name, ref, pen, mat.roughness_height_m, mat.scattering)
        return out


@dataclass(frozen=True)
class LogDomainSolution:
    losses: LossVector
    of_db_ss: float
    of_db_rms: float
    record_residuals: np.ndarray   # A_j - w_j L, dB
    std_errors: np.ndarray         # nan where unavailable
    rank: int
    n_unknowns: int
    warnings: Tuple[str, ...] = ()

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.n_unknowns


@dataclass(frozen=True)
class LinearDomainSolution:
    losses: LossVector
    of_lin: float
    of_db_ss: float
    of_db_rms: float
    record_residuals: np.ndarray
    initial_temperature: float
    accepted_moves: int
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class DistributionFit:
    name: str
    params: Dict[str, float]
    log_likelihood: float
    aic: float


@dataclass(frozen=True)
class ErrorStatistics:
    mean_db: float
    std_db: float
    abs_std_db: float
    best_fit: Optional[str]
    fits: Dict[str, DistributionFit]
    degenerate: bool = False


def discovery_materials(materials: Dict[str, MaterialProfile]) -> Dict[str, MaterialProfile]:
    """Highly reflective, nearly transparent stand-ins used to find candidate paths.

    Opaque materials stay opaque: whether a surface transmits at all is
    geometry-level knowledge the calibration does not revisit.
    """
    return {
        name: MaterialProfile(name, DISCOVERY_REFLECTION_LOSS_DB,
                              None if m.opaque else DISCOVERY_PENETRATION_LOSS_DB,
                              m.roughness_height_m, m.scattering)
        for name, m in materials.items()
    }


def interaction_counts(component: MultipathComponent, material_order: Sequence[str]) -> np.ndarray:
    """One weight row: penetration counts per material, then reflection counts."""
    n = len(material_order)
    col = {m: i for i, m in enumerate(material_order)}
    row = np.zeros(2 * n)
    for x in component.interactions:
        if x.kind == PENETRATION:
            row[col[x.material_id]] += 1
        elif x.kind == REFLECTION:
            row[n + col[x.material_id]] += 1
    return row


def _discovery_config(config: Optional[TraceConfig], frequency_ghz: float) -> TraceConfig:
    base = config or TraceConfig(tessellation_frequency=10)
    return TraceConfig(
        tessellation_frequency=base.tessellation_frequency,
        max_reflections=base.max_reflections,
        max_penetrations=base.max_penetrations,
        rx_sensitivity_dbm=None,
        frequency_ghz=frequency_ghz,
        scattering_enabled=False,
        tx_power_dbm=0.0,
        reception_margin=base.reception_margin,
        refinement_levels=base.refinement_levels,
    )


def assemble_system(records: Sequence[MeasurementRecord], env: EnvironmentMap,
                    config: Optional[TraceConfig] = None, threshold_deg: Optional[float] = None,
                    cache: Optional[dict] = None) -> CalibrationSystem:
    """Match every record to a discovered path and build ``W`` and ``A``.

    Discovery traces use isotropic antennas and are cached per TX/RX position
    pair and frequency in ``cache`` (pass a dict to share it across calls).
    ``threshold_deg`` defaults to the sum of the two antenna HPBWs, i.e.
    twice the HPBW when both horns match.
    """
    if not records:
        raise EmptySystemError("no measurement records supplied")
    material_order = tuple(env.materials)
    disc_env = env.with_materials(discovery_materials(env.materials))
    cache = {} if cache is None else cache

    rows, amps, ids, comps = [], [], [], []
    unmatched, no_unknowns = [], []
    for rec in records:
        key = (tuple(rec.tx_pose.position), tuple(rec.rx_pose.position), rec.frequency_ghz)
        if key not in cache:
            cfg = _discovery_config(config, rec.frequency_ghz)
            cache[key] = trace(disc_env, AntennaPose(rec.tx_pose.position), AntennaPose(rec.rx_pose.position),
                               config=cfg).components
        found = cache[key]
        thr = threshold_deg if threshold_deg is not None else rec.tx_pattern.hpbw_deg + rec.rx_pattern.hpbw_deg
        # the measured path departs along the TX boresight and arrives along the RX boresight
        match = match_components(found, [(rec.rx_pose.boresight, rec.tx_pose.boresight, rec.measured_power_dbm)],
                                 thr)[0]
        if not match.matched:
            unmatched.append(rec.id)
            continue
        c = match.component
        row = interaction_counts(c, material_order)
        if not row.any():
            no_unknowns.append(rec.id)
            continue
        a = (rec.tx_power_dbm + gain_toward(rec.tx_pattern, rec.tx_pose, c.aod)
             + gain_toward(rec.rx_pattern, rec.rx_pose, c.aoa)
             - fspl_db(c.path_length_m, rec.frequency_ghz) - rec.measured_power_dbm)
        rows.append(row)
        amps.append(a)
        ids.append(rec.id)
        comps.append(c)

    if unmatched:
        log.warning("%d record(s) matched no discovered path: %s", len(unmatched), ", ".join(unmatched))
    if no_unknowns:
        log.warning("%d record(s) matched interaction-free paths and carry no unknowns: %s",
                    len(no_unknowns), ", ".join(no_unknowns))
    if not rows:
        detail = "no unknowns: every matched path is line-of-sight" if no_unknowns else "no record matched a path"
        raise EmptySystemError(f"calibration system is empty ({detail})")
    return CalibrationSystem(np.array(rows), np.array(amps), material_order, tuple(ids), tuple(comps),
                             tuple(unmatched), tuple(no_unknowns))


def of_db(weights: np.ndarray, residuals: np.ndarray, losses: np.ndarray) -> Tuple[float, float]:
    """Sum of squared dB errors and their RMS.  ``nan`` losses count as 0 (unused columns)."""
    e = residuals - weights @ np.nan_to_num(losses)
    ss = float(e @ e)
    return ss, math.sqrt(ss / len(e))


def of_lin(weights: np.ndarray, targets: np.ndarray, coeffs: np.ndarray) -> float:
    """RMS of ``B_j - prod_i l_i ** w_ij`` over the records."""
    pred = np.exp(weights @ np.log(coeffs))
    e = targets - pred
    return float(math.sqrt(e @ e / len(e)))


def solve_log_domain(system: CalibrationSystem) -> LogDomainSolution:
    """Closed-form least squares over the columns that carry weight.

    Full-rank systems are solved via QR; rank-deficient ones fall back to the
    minimum-norm solution with a warning.
    """
    W, A = system.weights, system.residuals
    keep = system.retained_columns
    values = np.full(W.shape[1], np.nan)
    std = np.full(W.shape[1], np.nan)
    warnings: List[str] = []
    Wr = W[:, keep]
    p = Wr.shape[1]
    rank = int(np.linalg.matrix_rank(Wr)) if p else 0
    if rank == p:
        Q, R = np.linalg.qr(Wr)
        x = np.linalg.solve(R, Q.T @ A)
    else:
        x = np.linalg.lstsq(Wr, A, rcond=None)[0]
        msg = (f"rank-deficient system: rank {rank} < {p} unknowns; "
               "minimum-norm solution reported, individual losses are not identifiable")
        warnings.append(msg)
        log.warning(msg)
    values[keep] = x
    e = A - Wr @ x
    ss = float(e @ e)
    m = len(A)
    if m > rank:
        sigma2 = ss / (m - rank)
        cov = sigma2 * np.linalg.pinv(Wr.T @ Wr)
        std[keep] = np.sqrt(np.maximum(np.diag(cov), 0.0))
    losses = LossVector(values, system.material_order)
    if losses.negative:
        msg = "negative fitted losses (clamped to 0 dB for forward simulation): " + ", ".join(losses.negative)
        warnings.append(msg)
        log.warning(msg)
    return LogDomainSolution(losses, ss, math.sqrt(ss / m), e, std, rank, p, tuple(warnings))


def _initial_temperature(objective, x0, propose, rng, samples: int = 100, target: float = 0.8) -> float:
    """Temperature at which an average uphill move from ``x0`` is accepted with ``target`` probability."""
    f0 = objective(x0)
    ups = []
    for _ in range(samples):
        d = objective(propose(x0, rng)) - f0
        if d > 0:
            ups.append(d)
    if not ups:
        return 1e-12
    return -float(np.mean(ups)) / math.log(target)


def solve_linear_domain(system: CalibrationSystem, initial: Optional[LogDomainSolution] = None,
                        seed: int = 42, iterations: int = 200, moves: int = 50,
                        cooling: float = 0.95, step_sigma: float = 0.05) -> LinearDomainSolution:
    """Simulated annealing of the linear coefficients ``l in (0, 1]``.

    Starts at the dB-domain solution (negative losses clamped to 0 dB) and
    returns the best point visited.  Each move rescales one randomly chosen
    coefficient by a log-normal factor.
    """
    if initial is None:
        initial = solve_log_domain(system)
    W, B = system.weights, system.linear_targets
    keep = system.retained_columns
    Wr = W[:, keep]
    l0 = 10.0 ** (-np.maximum(initial.losses.values[keep], 0.0) / 10.0)
    l0 = np.clip(l0, 1e-300, 1.0)
    rng = np.random.default_rng(seed)
    k = len(keep)

    def objective(l):
        return of_lin(Wr, B, l)

    def propose(l, g):
        out = l.copy()
        i = g.integers(k)
        out[i] = min(1.0, out[i] * math.exp(step_sigma * g.standard_normal()))
        return out

    temp0 = _initial_temperature(objective, l0, propose, np.random.default_rng(seed + 1))
    cur, fcur = l0, objective(l0)
    best, fbest = cur, fcur
    accepted = 0
    temp = temp0
    for _ in range(iterations):
        for _ in range(moves):
            cand = propose(cur, rng)
            fc = objective(cand)
            if fc <= fcur or rng.random() < math.exp(-(fc - fcur) / temp):
                cur, fcur = cand, fc
                accepted += 1
                if fc < fbest:
                    best, fbest = cand, fc
        temp *= cooling

    values = np.full(W.shape[1], np.nan)
    values[keep] = -10.0 * np.log10(best)
    ss, rms = of_db(W, system.residuals, values)
    return LinearDomainSolution(LossVector(values, system.material_order), fbest, ss, rms,
                                system.residuals - W @ np.nan_to_num(values), temp0, accepted,
                                initial.warnings)


def log_solution_of_lin(system: CalibrationSystem, solution: LogDomainSolution) -> float:
    """Linear objective of a dB-domain solution as used for forward simulation (clamped at 0 dB)."""
    keep = system.retained_columns
    l = 10.0 ** (-np.maximum(solution.losses.values[keep], 0.0) / 10.0)
    return of_lin(system.weights[:, keep], system.linear_targets, l)


def error_statistics(residuals) -> ErrorStatistics:
    """Summary statistics and an AIC choice among Normal, Exponential and Rayleigh.

    The Exponential and Rayleigh candidates model ``|e|``; they are extended
    symmetrically to signed errors (density halved on each side) so their
    likelihoods compare directly with the Normal fit on ``e``.
    """
    e = np.asarray(residuals, dtype=float)
    n = len(e)
    if n < 3:
        raise InsufficientDataError(f"need at least 3 residuals, got {n}")
    mean = float(np.mean(e))
    std = float(np.std(e, ddof=1))
    abs_std = float(np.std(np.abs(e), ddof=1))
    if np.all(e == 0):
        return ErrorStatistics(mean, std, abs_std, None, {}, degenerate=True)

    fits = {}
    mu, sigma = mean, float(np.std(e))
    if sigma > 0:
        ll = -0.5 * n * math.log(2.0 * math.pi * sigma * sigma) - 0.5 * n
        fits["normal"] = DistributionFit("normal", {"mu": mu, "sigma": sigma}, ll, 4.0 - 2.0 * ll)
    a = np.abs(e)
    beta = float(np.mean(a))
    ll = -n * math.log(2.0 * beta) - n
    fits["exponential"] = DistributionFit("exponential", {"scale": beta}, ll, 2.0 - 2.0 * ll)
    if np.all(a > 0):
        s2 = float(np.sum(a * a)) / (2.0 * n)
        ll = float(np.sum(np.log(a))) - n * math.log(2.0 * s2) - n
        fits["rayleigh"] = DistributionFit("rayleigh", {"scale": math.sqrt(s2)}, ll, 2.0 - 2.0 * ll)
    best = min(fits.values(), key=lambda f: f.aic).name
    return ErrorStatistics(mean, std, abs_std, best, fits)


def synthesize_records(env: EnvironmentMap, links, true_materials: Dict[str, MaterialProfile],
                       config: Optional[TraceConfig] = None, frequency_ghz: float = 28.0,
                       tx_power_dbm: float = 30.0, tx_pattern: Optional[AntennaPattern] = None,
                       rx_pattern: Optional[AntennaPattern] = None, per_link: int = 3,
                       noise_db: float = 0.0, rng=None, id_prefix: str = "r") -> List[MeasurementRecord]:
    """Directional measurements forward-simulated with known losses.

    For each ``(tx_position, rx_position)`` link the ``per_link`` strongest
    paths that interact with at least one surface become records, with both
    antennas pointed exactly along the path.  Gaussian noise of ``noise_db``
    is added to the measured power.
    """
    tx_pattern = tx_pattern or isotropic_pattern()
    rx_pattern = rx_pattern or isotropic_pattern()
    rng = np.random.default_rng(0) if rng is None else rng
    true_env = env.with_materials(true_materials)
    cfg = _discovery_config(config, frequency_ghz)
    records = []
    for k, (tpos, rpos) in enumerate(links):
        comps = trace(true_env, AntennaPose(tpos), AntennaPose(rpos), config=cfg).components
        comps = [c for c in comps if c.interactions][:per_link]
        for m, c in enumerate(comps):
            tx_pose = AntennaPose(tpos, c.aod)
            rx_pose = AntennaPose(rpos, c.aoa)
            loss = float(interaction_counts(c, tuple(true_materials)) @ _loss_vector(true_materials))
            power = (tx_power_dbm + tx_pattern.max_gain_dbi + rx_pattern.max_gain_dbi
                     - fspl_db(c.path_length_m, frequency_ghz) - loss)
            if noise_db:
                power += float(rng.normal(0.0, noise_db))
            records.append(MeasurementRecord(f"{id_prefix}{k}_{m}", tx_pose, rx_pose, tx_power_dbm, power,
                                             frequency_ghz, tx_pattern, rx_pattern))
    return records


def _loss_vector(materials: Dict[str, MaterialProfile]) -> np.ndarray:
    pen = [0.0 if m.opaque else m.penetration_loss_db for m in materials.values()]
    ref = [m.reflection_loss_db for m in materials.values()]
    return np.array(pen + ref)
