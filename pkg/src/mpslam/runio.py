"""Run-directory file schemas shared by the CLI, the tests and downstream
consumers (the plotting package reads these files and nothing else).

  measurements.jsonl  one record per (step, mt): the engine's only input
  ground_truth.json   true trajectories, biases, map and origin labels
  estimates.jsonl     one record per (step, entity)
  metrics.csv         one row per step, header in metrics.METRICS_HEADER
  manifest.json       resolved config, seed, schema version, config hash

All JSON is emitted with sorted keys so byte-identical runs produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from . import __version__
from .engine import Estimates
from .metrics import METRICS_HEADER
from .scenario import GroundTruth, ScenarioConfig, build_environment
from .synth import OriginLabel

SCHEMA_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ------------------------------------------------------------- measurements

def write_measurements(path, records: dict[tuple[int, int], np.ndarray]) -> None:
    with open(path, "w") as fh:
        for (n, i) in sorted(records):
            z = np.asarray(records[(n, i)])
            fh.write(_dumps({"step": n, "mt": i, "z": z.tolist()}) + "\n")


def read_measurements(path) -> dict[tuple[int, int], np.ndarray]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out[(rec["step"], rec["mt"])] = np.asarray(rec["z"], dtype=float).reshape(-1, 4)
    return out


# -------------------------------------------------------------- ground truth

def write_ground_truth(path, truth: GroundTruth) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "mt_states": truth.mt_states.tolist(),
        "bs_biases": truth.bs_biases.tolist(),
        "vas": [
            {"bs": v.bs_id, "wall": v.wall_id, "position": list(map(float, v.position))}
            for v in truth.vas
        ],
        "origins": {
            f"{n},{i}": [
                {"kind": lab.kind, "bs": lab.bs_id, "wall": lab.wall_id} for lab in labs
            ]
            for (n, i), labs in sorted(truth.origins.items())
        },
    }
    Path(path).write_text(_dumps(doc))


def read_ground_truth(path) -> GroundTruth:
    from .geometry import VirtualAnchor

    doc = json.loads(Path(path).read_text())
    origins = {}
    for key, labs in doc.get("origins", {}).items():
        n, i = map(int, key.split(","))
        origins[(n, i)] = [OriginLabel(l["kind"], l["bs"], l["wall"]) for l in labs]
    return GroundTruth(
        mt_states=np.asarray(doc["mt_states"], dtype=float),
        bs_biases=np.asarray(doc["bs_biases"], dtype=float),
        vas=[
            VirtualAnchor(v["bs"], v["wall"], np.asarray(v["position"], dtype=float))
            for v in doc["vas"]
        ],
        origins=origins,
    )


# ---------------------------------------------------------------- estimates

def estimate_records(est: Estimates) -> list[dict]:
    recs = []
    for i, mt in enumerate(est.mts):
        recs.append(
            {
                "step": est.step,
                "entity": "mt",
                "index": i,
                "position": [float(mt.position[0]), float(mt.position[1])],
                "orientation": mt.orientation,
                "velocity": [float(mt.velocity[0]), float(mt.velocity[1])],
                "bias": mt.bias,
            }
        )
    for j, b in enumerate(est.bs_biases):
        recs.append({"step": est.step, "entity": "bs", "index": j + 1, "bias": float(b)})
    for p in est.pvas:
        recs.append(
            {
                "step": est.step,
                "entity": "pva",
                "key": p.key,
                "bs": p.bs_index,
                "existence": p.existence,
                "position": [float(p.position[0]), float(p.position[1])],
            }
        )
    return recs


def write_estimates(path, all_records: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in all_records:
            fh.write(_dumps(rec) + "\n")


def read_estimates(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ------------------------------------------------------------------ metrics

def write_metrics_csv(path, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(METRICS_HEADER) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[k]) if not isinstance(row[k], int) else str(row[k]) for k in METRICS_HEADER) + "\n")


def read_metrics_csv(path) -> list[dict]:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header != METRICS_HEADER:
        raise ValueError(f"unexpected metrics header: {header}")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        row = {}
        for key, val in zip(header, vals):
            row[key] = int(val) if key in ("step", "n_confirmed") else float(val)
        rows.append(row)
    return rows


# ----------------------------------------------------------------- manifest

def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.TimeoutExpired):
        pass
    return "unknown"


def write_manifest(path, cfg: ScenarioConfig, prune: bool, threads: int) -> None:
    cfg_dict = cfg.to_dict()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "seed": cfg.seed,
        "config": cfg_dict,
        "config_sha256": hashlib.sha256(_dumps(cfg_dict).encode()).hexdigest(),
        "git_describe": _git_describe(),
        "prune": prune,
        "threads": threads,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
