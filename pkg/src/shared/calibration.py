"""
Frozen regression thresholds of a run directory.

The first evaluation written to a directory records the thresholds it used
together with what it measured. Later evaluations into the same directory
read them back and mark their verdicts as calibrated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from src.shared.jsonio import read_document, require, write_document

log = logging.getLogger(__name__)

CALIBRATION_FILE = "calibration.json"


@dataclass(frozen=True)
class Calibration:
    flat_budget: float
    sawtooth_threshold: float
    measured: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "flat_budget": self.flat_budget,
            "sawtooth_threshold": self.sawtooth_threshold,
            "measured": self.measured,
        }


def load_calibration(run_dir: Path) -> Optional[Calibration]:
    """The recorded calibration of `run_dir`, or None before the first run."""
    path = Path(run_dir) / CALIBRATION_FILE
    if not path.exists():
        return None
    raw = require(read_document(path), "calibration", "dict", str(path))
    where = f"{path}.calibration"
    calibration = Calibration(
        flat_budget=float(require(raw, "flat_budget", "number", where)),
        sawtooth_threshold=float(require(raw, "sawtooth_threshold", "number", where)),
        measured=require(raw, "measured", "dict", where, default={}),
    )
    log.info("Using calibration from %s", path)
    return calibration


def record_calibration(run_dir: Path, calibration: Calibration, provenance: dict) -> Path:
    path = write_document(
        Path(run_dir) / CALIBRATION_FILE,
        {"kind": "calibration", "provenance": provenance, "calibration": calibration.to_dict()},
    )
    log.info("Recorded calibration thresholds in %s", path)
    return path
