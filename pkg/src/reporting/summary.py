"""Consolidated run report: collects the documents of a run directory into one summary."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from src import __version__
from src.shared.jsonio import export_rows_csv, read_document, write_document

log = logging.getLogger(__name__)

RUN_DOCUMENTS = {
    "audit": "audit.json",
    "family_audit": "family_audit.json",
    "evaluation": "eval.json",
    "betas": "betas.json",
}

CONDITION_COLUMNS = ["audit", "condition", "value", "worst_angle", "level", "checked", "skipped", "passed"]


@dataclass
class RunSummary:
    library_version: str = __version__
    config_hashes: list[str] = field(default_factory=list)
    commands: list[str] = field(default_factory=list)
    audit: Optional[dict] = None
    family_audit: Optional[dict] = None
    distortion: Optional[dict] = None
    flatness: Optional[dict] = None
    graph: Optional[dict] = None
    isometry: Optional[dict] = None
    sawtooth: Optional[dict] = None
    eps_prime: Optional[dict] = None
    betas: Optional[dict] = None

    @property
    def passed(self) -> bool:
        checks = [
            (self.audit or {}).get("passed"),
            (self.flatness or {}).get("passed"),
            (self.sawtooth or {}).get("passed"),
        ]
        return all(c is not False for c in checks)

    def to_dict(self) -> dict:
        return {
            "library_version": self.library_version,
            "config_hashes": self.config_hashes,
            "commands": self.commands,
            "passed": self.passed,
            "audit": self.audit,
            "family_audit": self.family_audit,
            "distortion": self.distortion,
            "flatness": self.flatness,
            "graph": self.graph,
            "isometry": self.isometry,
            "sawtooth": self.sawtooth,
            "eps_prime": self.eps_prime,
            "betas": self.betas,
        }

    def condition_rows(self) -> list[dict]:
        rows = []
        for name, audit in (("ccbp", self.audit), ("family", self.family_audit)):
            for condition, values in ((audit or {}).get("conditions") or {}).items():
                rows.append({"audit": name, "condition": condition, **values})
        return rows


def _beta_digest(document: dict) -> dict:
    points = document.get("profile", {}).get("points", [])
    return {
        "points": len(points),
        "max_J_inf": max((p.get("J_inf", 0.0) for p in points), default=0.0),
        "max_J_1": max((p.get("J_1", 0.0) for p in points), default=0.0),
    }


def collect_run(run_dir: Path) -> RunSummary:
    """Read whichever run documents exist in `run_dir`."""
    run_dir = Path(run_dir)
    summary = RunSummary()
    for key, filename in RUN_DOCUMENTS.items():
        path = run_dir / filename
        if not path.exists():
            continue
        document = read_document(path)
        provenance = document.get("provenance", {})
        summary.commands.append(provenance.get("command", key))
        if provenance.get("config_hash") and provenance["config_hash"] not in summary.config_hashes:
            summary.config_hashes.append(provenance["config_hash"])
        if key == "audit":
            summary.audit = document.get("audit")
        elif key == "family_audit":
            summary.family_audit = document.get("audit")
        elif key == "betas":
            summary.betas = _beta_digest(document)
        else:
            for section in ("distortion", "flatness", "graph", "isometry", "sawtooth", "eps_prime"):
                if document.get(section) is not None:
                    setattr(summary, section, document[section])
    log.info("Collected %d run documents from %s", len(summary.commands), run_dir)
    return summary


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _audit_table(title: str, audit: Optional[dict]) -> str:
    if not audit:
        return ""
    lines = [
        f"## {title}",
        "",
        f"Threshold {_fmt(audit.get('threshold'))} (eps {_fmt(audit.get('eps'))} x c_audit {_fmt(audit.get('c_audit'))}); "
        f"effective eps {_fmt(audit.get('effective_eps'))}; passed: {_fmt(audit.get('passed'))}.",
        "",
        "| Condition | Worst value | Worst angle (rad) | Level | Checked | Skipped | Passed |",
        "| --- | ---: | ---: | ---: | ---: | ---: | --- |",
    ]
    for name, c in audit.get("conditions", {}).items():
        lines.append(
            f"| {name} | {_fmt(c.get('value'))} | {_fmt(c.get('worst_angle'))} | {_fmt(c.get('level'))} "
            f"| {c.get('checked', 0)} | {c.get('skipped', 0)} | {_fmt(c.get('passed'))} |"
        )
    if audit.get("structural"):
        lines += ["", f"Structural issues: {len(audit['structural'])}."]
    return "\n".join(lines) + "\n"


def _metric_table(title: str, values: Optional[dict], keys: list[str]) -> str:
    if not values:
        return ""
    rows = "\n".join(f"| {key} | {_fmt(values.get(key))} |" for key in keys if key in values)
    return f"## {title}\n\n| Metric | Value |\n| --- | ---: |\n{rows}\n"


def render_markdown(summary: RunSummary) -> str:
    sections = [
        _audit_table("CCBP audit", summary.audit),
        _audit_table("Plane family audit", summary.family_audit),
        _metric_table("Distortion", summary.distortion,
                      ["n_pairs", "ratio_min", "ratio_max", "spread", "exponent", "exponent_upper", "exponent_lower"]),
        _metric_table("Flatness", summary.flatness, ["worst", "eps_in", "ratio", "budget", "passed", "checked"]),
        _metric_table("Graph checks", summary.graph, ["checked", "single_valued", "max_lipschitz"]),
        _metric_table("Isometry field", summary.isometry, ["orthogonality_residual", "mapping_residual", "max_increment"]),
        _metric_table("Saw-tooth audit", summary.sawtooth, ["n_members", "min_distance", "min_ratio", "threshold", "passed"]),
        _metric_table("Epsilon-prime sums", summary.eps_prime, ["max", "mean", "points"]),
        _metric_table("Beta profile", summary.betas, ["points", "max_J_inf", "max_J_1"]),
    ]
    body = "\n".join(section for section in sections if section)
    return f"""# Reifenberg parameterization run report

| Field | Value |
| --- | --- |
| Library version | {summary.library_version} |
| Config hashes | {", ".join(summary.config_hashes) or "n/a"} |
| Commands | {", ".join(summary.commands) or "n/a"} |
| Overall | {"passed" if summary.passed else "FAILED"} |

Thresholds flagged as calibrated are regression values frozen from calibration runs, not proven constants.

{body}"""


def write_report(summary: RunSummary, out_dir: Path) -> tuple[Path, Path, Path]:
    """Write report.json, report.md and the audit condition table as conditions.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = write_document(out_dir / "report.json", {"kind": "report", "report": summary.to_dict()})
    md_path = out_dir / "report.md"
    md_path.write_text(render_markdown(summary), encoding="utf-8", newline="\n")
    csv_path = export_rows_csv(summary.condition_rows(), out_dir / "conditions.csv", CONDITION_COLUMNS)
    return json_path, md_path, csv_path
