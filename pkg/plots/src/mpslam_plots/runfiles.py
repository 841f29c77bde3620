"""Readers for the documented run-directory file schemas."""

from __future__ import annotations

import csv
import json
from pathlib import Path

SUPPORTED_SCHEMA = 1


class RunDirError(ValueError):
    """Missing file or unsupported schema in a run directory."""


def load_manifest(run_dir: Path) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise RunDirError(f"missing manifest.json in {run_dir}")
    doc = json.loads(path.read_text())
    version = doc.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise RunDirError(f"unsupported schema_version {version!r} (supported: {SUPPORTED_SCHEMA})")
    return doc


def load_ground_truth(run_dir: Path) -> dict:
    path = Path(run_dir) / "ground_truth.json"
    if not path.exists():
        raise RunDirError(f"missing ground_truth.json in {run_dir}")
    return json.loads(path.read_text())


def load_estimates(run_dir: Path) -> list[dict]:
    path = Path(run_dir) / "estimates.jsonl"
    if not path.exists():
        raise RunDirError(f"missing estimates.jsonl in {run_dir}")
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_metrics(run_dir: Path) -> list[dict]:
    path = Path(run_dir) / "metrics.csv"
    if not path.exists():
        raise RunDirError(f"missing metrics.csv in {run_dir}")
    with open(path) as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append({k: float(v) for k, v in rec.items()})
        return rows


def steps_in(estimates: list[dict]) -> list[int]:
    return sorted({rec["step"] for rec in estimates})
