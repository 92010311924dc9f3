"""File formats: run configs, measurement and component CSVs, reports."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .antenna import (
    AntennaPattern, AntennaPose, angles_from_direction, direction_from_angles,
    load_pattern_csv, synthetic_pattern,
)
from .calibration import MeasurementRecord
from .errors import SchemaError
from .geometry import EnvironmentMap, load_environment
from .propagation import SPEED_OF_LIGHT, ScatteringParameters
from .tracer import MultipathComponent, TraceConfig

COMPONENT_HEADER = ["path_id", "power_dbm", "tof_ns", "aod_az_deg", "aod_el_deg", "aoa_az_deg",
                    "aoa_el_deg", "n_refl", "n_pen", "n_scat", "signature"]
MEASUREMENT_HEADER = ["id", "tx_x", "tx_y", "tx_z", "rx_x", "rx_y", "rx_z", "tx_az_deg", "tx_el_deg",
                      "rx_az_deg", "rx_el_deg", "tx_power_dbm", "measured_power_dbm", "freq_ghz"]
STATS_HEADER = ["location", "n_components", "rms_delay_spread_ns", "rms_angular_spread_deg",
                "angular_degenerate"]
CONFIG_VERSION = 1


def fmt(x: float) -> str:
    """Fixed 9-significant-digit text used for every numeric output."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if x == 0.0:
        return "0"
    return f"{x:.9g}"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv(path, header: Sequence[str]) -> List[Tuple[int, Dict[str, str]]]:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        got = [f.strip() for f in (reader.fieldnames or [])]
        if got != list(header):
            missing = [h for h in header if h not in got]
            what = f"missing column(s) {', '.join(missing)}" if missing else "unexpected column layout"
            raise SchemaError(f"{path}: {what}; expected header {','.join(header)}",
                              field=missing[0] if missing else "header")
        return [(line, {k.strip(): (v or "").strip() for k, v in row.items()})
                for line, row in enumerate(reader, start=2)]


def _float(row, key, path, line) -> float:
    try:
        v = float(row[key])
    except (TypeError, ValueError):
        raise SchemaError(f"{path}:{line}: {key} is not a number: {row.get(key)!r}", field=key) from None
    if not math.isfinite(v):
        raise SchemaError(f"{path}:{line}: {key} must be finite", field=key)
    return v


# ---------------------------------------------------------------- components


@dataclass(frozen=True)
class ComponentRow:
    """A component as stored in a components CSV."""

    path_id: str
    power_dbm: float
    tof_ns: float
    aod_az_deg: float
    aod_el_deg: float
    aoa_az_deg: float
    aoa_el_deg: float
    n_refl: int
    n_pen: int
    n_scat: int
    signature: Tuple[Tuple[str, str], ...]

    @property
    def location(self) -> str:
        return self.path_id.rsplit("/", 1)[0]

    @property
    def aod(self) -> np.ndarray:
        return direction_from_angles(self.aod_az_deg, self.aod_el_deg)

    @property
    def aoa(self) -> np.ndarray:
        return direction_from_angles(self.aoa_az_deg, self.aoa_el_deg)

    def to_component(self) -> MultipathComponent:
        """Component carrying the stored fields; interaction points are not stored and come back empty."""
        return MultipathComponent(self.aod, self.aoa, self.tof_ns, self.tof_ns * 1e-9 * SPEED_OF_LIGHT,
                                  self.power_dbm, (), self.signature)


def format_signature(signature) -> str:
    return "|".join(f"{obs}:{kind}" for obs, kind in signature)


def parse_signature(text: str) -> Tuple[Tuple[str, str], ...]:
    if not text:
        return ()
    out = []
    for part in text.split("|"):
        obs, sep, kind = part.rpartition(":")
        if not sep or not obs or kind not in ("R", "P", "S"):
            raise SchemaError(f"bad signature element {part!r}", field="signature")
        out.append((obs, kind))
    return tuple(out)


def component_row(path_id: str, c: MultipathComponent) -> ComponentRow:
    aod = angles_from_direction(c.aod)
    aoa = angles_from_direction(c.aoa)
    return ComponentRow(path_id, c.power_dbm, c.tof_ns, aod[0], aod[1], aoa[0], aoa[1],
                        c.n_refl, c.n_pen, c.n_scat, tuple(c.surface_signature))


def components_csv(rows: Sequence[ComponentRow]) -> str:
    return _csv_text(COMPONENT_HEADER, [
        [r.path_id, fmt(r.power_dbm), fmt(r.tof_ns), fmt(r.aod_az_deg), fmt(r.aod_el_deg),
         fmt(r.aoa_az_deg), fmt(r.aoa_el_deg), r.n_refl, r.n_pen, r.n_scat, format_signature(r.signature)]
        for r in rows])


def read_components(path) -> List[ComponentRow]:
    out = []
    for line, row in _read_csv(path, COMPONENT_HEADER):
        vals = {k: _float(row, k, path, line) for k in COMPONENT_HEADER[1:7]}
        counts = {}
        for k in ("n_refl", "n_pen", "n_scat"):
            try:
                counts[k] = int(row[k])
            except ValueError:
                raise SchemaError(f"{path}:{line}: {k} is not an integer", field=k) from None
        try:
            sig = parse_signature(row["signature"])
        except SchemaError as exc:
            raise SchemaError(f"{path}:{line}: {exc}", field="signature") from None
        if not row["path_id"]:
            raise SchemaError(f"{path}:{line}: empty path_id", field="path_id")
        out.append(ComponentRow(row["path_id"], **vals, **counts, signature=sig))
    return out


def group_by_location(rows: Sequence[ComponentRow]) -> Dict[str, List[ComponentRow]]:
    groups: Dict[str, List[ComponentRow]] = {}
    for r in rows:
        groups.setdefault(r.location, []).append(r)
    return groups


# ---------------------------------------------------------------- measurements


def read_measurements(path, tx_pattern: AntennaPattern, rx_pattern: AntennaPattern) -> List[MeasurementRecord]:
    records = []
    seen = set()
    for line, row in _read_csv(path, MEASUREMENT_HEADER):
        rid = row["id"]
        if not rid:
            raise SchemaError(f"{path}:{line}: empty id", field="id")
        if rid in seen:
            raise SchemaError(f"{path}:{line}: duplicate id {rid!r}", field="id")
        seen.add(rid)
        v = {k: _float(row, k, path, line) for k in MEASUREMENT_HEADER[1:]}
        if v["freq_ghz"] <= 0:
            raise SchemaError(f"{path}:{line}: freq_ghz must be positive", field="freq_ghz")
        tx = AntennaPose.from_angles([v["tx_x"], v["tx_y"], v["tx_z"]], v["tx_az_deg"], v["tx_el_deg"])
        rx = AntennaPose.from_angles([v["rx_x"], v["rx_y"], v["rx_z"]], v["rx_az_deg"], v["rx_el_deg"])
        records.append(MeasurementRecord(rid, tx, rx, v["tx_power_dbm"], v["measured_power_dbm"],
                                         v["freq_ghz"], tx_pattern, rx_pattern))
    if not records:
        raise SchemaError(f"{path}: no measurement rows")
    return records


def measurements_csv(records: Sequence[MeasurementRecord]) -> str:
    rows = []
    for r in records:
        taz, tel = angles_from_direction(r.tx_pose.boresight)
        raz, rel = angles_from_direction(r.rx_pose.boresight)
        rows.append([r.id, *(fmt(x) for x in r.tx_pose.position), *(fmt(x) for x in r.rx_pose.position),
                     fmt(taz), fmt(tel), fmt(raz), fmt(rel), fmt(r.tx_power_dbm), fmt(r.measured_power_dbm),
                     fmt(r.frequency_ghz)])
    return _csv_text(MEASUREMENT_HEADER, rows)


# ---------------------------------------------------------------- run config


@dataclass(frozen=True)
class AntennaSpec:
    gain_dbi: float = 0.0
    hpbw_deg: Optional[float] = None   # None: isotropic
    pattern_file: Optional[Path] = None

    def pattern(self) -> AntennaPattern:
        from .antenna import isotropic_pattern
        if self.pattern_file is not None:
            return load_pattern_csv(self.pattern_file, self.gain_dbi, self.hpbw_deg or 360.0)
        if self.hpbw_deg is None:
            return isotropic_pattern(self.gain_dbi)
        return synthetic_pattern(self.hpbw_deg, self.gain_dbi)


@dataclass(frozen=True)
class Link:
    id: str
    tx: AntennaPose
    rx: AntennaPose


@dataclass(frozen=True)
class RunConfig:
    environment: Optional[Path] = None
    measurements: Optional[Path] = None
    tx_antenna: AntennaSpec = field(default_factory=AntennaSpec)
    rx_antenna: AntennaSpec = field(default_factory=AntennaSpec)
    links: Tuple[Link, ...] = ()
    trace: TraceConfig = field(default_factory=lambda: TraceConfig(tessellation_frequency=30))
    seed: int = 42
    resolution_ns: Optional[float] = None


_TRACE_KEYS = {f.name for f in fields(TraceConfig)} - {"scattering"}


def _pose(doc, where) -> AntennaPose:
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object", field=where)
    pos = doc.get("position")
    if not (isinstance(pos, list) and len(pos) == 3 and all(isinstance(x, (int, float)) for x in pos)):
        raise SchemaError(f"{where}.position: expected three numbers", field=f"{where}.position")
    az = doc.get("az_deg", 0.0)
    el = doc.get("el_deg", 0.0)
    for k, v in (("az_deg", az), ("el_deg", el)):
        if not isinstance(v, (int, float)):
            raise SchemaError(f"{where}.{k}: expected a number", field=f"{where}.{k}")
    return AntennaPose.from_angles(pos, float(az), float(el))


def _antenna(doc, where, base: Path) -> AntennaSpec:
    if doc is None:
        return AntennaSpec()
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object", field=where)
    unknown = set(doc) - {"gain_dbi", "hpbw_deg", "pattern"}
    if unknown:
        raise SchemaError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}", field=where)
    pattern = doc.get("pattern")
    return AntennaSpec(float(doc.get("gain_dbi", 0.0)),
                       None if doc.get("hpbw_deg") is None else float(doc["hpbw_deg"]),
                       None if pattern is None else base / pattern)


def run_config_from_dict(doc: dict, base: Path = Path(".")) -> RunConfig:
    if not isinstance(doc, dict):
        raise SchemaError("run config must be a JSON object")
    if doc.get("version") != CONFIG_VERSION:
        raise SchemaError(f"run config: version must be {CONFIG_VERSION}", field="version")
    known = {"version", "environment", "measurements", "antennas", "links", "trace", "scattering",
             "seed", "resolution_ns"}
    unknown = set(doc) - known
    if unknown:
        raise SchemaError(f"run config: unknown key(s) {', '.join(sorted(unknown))}", field=sorted(unknown)[0])

    trace_doc = doc.get("trace", {})
    if not isinstance(trace_doc, dict):
        raise SchemaError("trace: expected an object", field="trace")
    bad = set(trace_doc) - _TRACE_KEYS
    if bad:
        raise SchemaError(f"trace: unknown key(s) {', '.join(sorted(bad))}", field=f"trace.{sorted(bad)[0]}")
    scat_doc = doc.get("scattering", {})
    if not isinstance(scat_doc, dict):
        raise SchemaError("scattering: expected an object", field="scattering")
    try:
        scat = ScatteringParameters(**scat_doc)
        tcfg = TraceConfig(**{"tessellation_frequency": 30, **trace_doc, "scattering": scat})
    except TypeError as exc:
        raise SchemaError(f"scattering: {exc}", field="scattering") from None
    except ValueError as exc:
        raise SchemaError(f"trace: {exc}", field="trace") from None

    links = []
    ids = set()
    for k, ld in enumerate(doc.get("links", [])):
        where = f"links[{k}]"
        if not isinstance(ld, dict) or "tx" not in ld or "rx" not in ld:
            raise SchemaError(f"{where}: expected an object with tx and rx", field=where)
        lid = str(ld.get("id", f"L{k}"))
        if lid in ids:
            raise SchemaError(f"{where}.id: duplicate link id {lid!r}", field=f"{where}.id")
        ids.add(lid)
        links.append(Link(lid, _pose(ld["tx"], f"{where}.tx"), _pose(ld["rx"], f"{where}.rx")))

    ant = doc.get("antennas", {}) or {}
    seed = doc.get("seed", 42)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise SchemaError("seed: expected an integer", field="seed")
    res = doc.get("resolution_ns")
    return RunConfig(
        environment=None if doc.get("environment") is None else base / doc["environment"],
        measurements=None if doc.get("measurements") is None else base / doc["measurements"],
        tx_antenna=_antenna(ant.get("tx"), "antennas.tx", base),
        rx_antenna=_antenna(ant.get("rx"), "antennas.rx", base),
        links=tuple(links), trace=tcfg, seed=seed,
        resolution_ns=None if res is None else float(res),
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    try:
        return run_config_from_dict(doc, path.parent)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}", field=exc.field) from None


def load_environment_checked(path) -> EnvironmentMap:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    return load_environment(path)


# ---------------------------------------------------------------- reports


def stats_csv(rows) -> str:
    """``rows``: ``(location, SpreadReport)`` pairs."""
    return _csv_text(STATS_HEADER, [
        [loc, r.n_components, fmt(r.rms_delay_spread_ns), fmt(r.rms_angular_spread_deg),
         int(r.angular_degenerate)] for loc, r in rows])


def read_stats(path):
    from .stats import SpreadReport
    out = []
    for line, row in _read_csv(path, STATS_HEADER):
        try:
            n = int(row["n_components"])
            deg = bool(int(row["angular_degenerate"]))
        except ValueError:
            raise SchemaError(f"{path}:{line}: integer column is malformed", field="n_components") from None
        out.append((row["location"], SpreadReport(_float(row, "rms_delay_spread_ns", path, line),
                                                  _float(row, "rms_angular_spread_deg", path, line), n, deg)))
    return out


def sniff_header(path) -> List[str]:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    with path.open(newline="") as fh:
        first = fh.readline()
    return [h.strip() for h in first.strip().split(",")]
