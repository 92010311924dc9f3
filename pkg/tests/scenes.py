"""Synthetic environments shared by calibration, CLI and acceptance tests."""

import dataclasses
import numpy as np

from raycal.geometry import EnvironmentMap, Obstruction
from raycal.propagation import MaterialProfile
from raycal.tracer import TraceConfig

TRUE_MATERIALS = {
    "concrete": MaterialProfile("concrete", 10.3, None),
    "floor": MaterialProfile("floor", 8.0, None),
    "drywall": MaterialProfile("drywall", 6.1, 2.8),
    "glass": MaterialProfile("glass", 3.5, 3.2),
}

# discovery settings for calibration tests: enough bounces for every link in the office scene
CAL_CONFIG = TraceConfig(tessellation_frequency=10, max_reflections=2, max_penetrations=2)


def rect(x0, y0, z0, x1, y1, z1):
    """Axis-aligned rectangle; exactly one of the coordinate ranges is flat."""
    if x0 == x1:
        return [(x0, y0, z0), (x0, y1, z0), (x0, y1, z1), (x0, y0, z1)]
    if y0 == y1:
        return [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)]
    return [(x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0)]


def office_scene(materials=None):
    """20 x 10 x 3 m room split by a drywall partition (doorway at y > 6) and a glass one (gap at y < 4)."""
    materials = dict(TRUE_MATERIALS if materials is None else materials)
    L, Wd, H = 20.0, 10.0, 3.0
    obs = [
        Obstruction("wall_w", rect(0, 0, 0, 0, Wd, H), "concrete"),
        Obstruction("wall_e", rect(L, 0, 0, L, Wd, H), "concrete"),
        Obstruction("wall_s", rect(0, 0, 0, L, 0, H), "concrete"),
        Obstruction("wall_n", rect(0, Wd, 0, L, Wd, H), "concrete"),
        Obstruction("floor", rect(0, 0, 0, L, Wd, 0), "floor"),
        Obstruction("ceiling", rect(0, 0, H, L, Wd, H), "floor"),
        Obstruction("part_dry", rect(7, 0, 0, 7, 6, H), "drywall"),
        Obstruction("part_glass", rect(13, 4, 0, 13, Wd, H), "glass"),
    ]
    return EnvironmentMap.build(obs, materials)


def office_links(n=20, seed=7):
    """Random TX/RX pairs at 1.2-2.2 m height spread over the three rooms."""
    rng = np.random.default_rng(seed)
    links = []
    while len(links) < n:
        tx = np.array([rng.uniform(0.5, 19.5), rng.uniform(0.5, 9.5), rng.uniform(1.2, 2.2)])
        rx = np.array([rng.uniform(0.5, 19.5), rng.uniform(0.5, 9.5), rng.uniform(1.2, 2.2)])
        if min(abs(tx[0] - 7), abs(rx[0] - 7), abs(tx[0] - 13), abs(rx[0] - 13)) < 0.5:
            continue
        if np.linalg.norm(tx - rx) < 2.0:
            continue
        links.append((tx, rx))
    return links


def cluttered_scene(n_boxes=7, seed=3, rough_walls=False):
    """Office shell plus free-standing cabinets: 8 + 6 * n_boxes obstructions (50 by default).

    ``rough_walls`` marks the concrete shell as a diffuse scatterer.
    """
    rng = np.random.default_rng(seed)
    base = office_scene()
    obs = list(base.obstructions)
    mats = dict(base.materials)
    mats["metal"] = MaterialProfile("metal", 1.0, None)
    if rough_walls:
        mats["concrete"] = dataclasses.replace(mats["concrete"], roughness_height_m=0.002, scattering=True)
    k = 0
    while k < n_boxes:
        x, y = rng.uniform(1.0, 18.0), rng.uniform(1.0, 8.5)
        if abs(x - 7) < 1.5 or abs(x - 13) < 1.5:
            continue
        w, d, h = rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.8, 2.0)
        x1, y1 = x + w, y + d
        faces = [rect(x, y, 0, x, y1, h), rect(x1, y, 0, x1, y1, h), rect(x, y, 0, x1, y, h),
                 rect(x, y1, 0, x1, y1, h), rect(x, y, h, x1, y1, h), rect(x, y, 0.001, x1, y1, 0.001)]
        for f, face in enumerate(faces):
            obs.append(Obstruction(f"cab{k}_{f}", face, "metal"))
        k += 1
    return EnvironmentMap.build(obs, mats)


def write_office_fixture(root, n_links=6, seed=7, noise_db=0.0):
    """Environment JSON, synthetic measurements CSV and a run config under ``root``; returns the config path."""
    import json
    from pathlib import Path

    from raycal.calibration import synthesize_records
    from raycal.geometry import environment_to_dict
    from raycal.io import measurements_csv

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    env = office_scene()
    links = office_links(n_links, seed=seed)
    (root / "env.json").write_text(json.dumps(environment_to_dict(env), indent=1))
    records = synthesize_records(env, links, TRUE_MATERIALS, config=CAL_CONFIG, noise_db=noise_db,
                                 rng=np.random.default_rng(seed))
    (root / "measurements.csv").write_text(measurements_csv(records))
    doc = {
        "version": 1,
        "environment": "env.json",
        "measurements": "measurements.csv",
        "antennas": {"tx": {"gain_dbi": 0.0}, "rx": {"gain_dbi": 0.0}},
        "links": [{"id": f"L{k}", "tx": {"position": [float(x) for x in tx]},
                   "rx": {"position": [float(x) for x in rx]}} for k, (tx, rx) in enumerate(links)],
        "trace": {"tessellation_frequency": 10, "max_reflections": 2, "max_penetrations": 2},
        "seed": 42,
    }
    path = root / "run.json"
    path.write_text(json.dumps(doc, indent=1))
    return path
