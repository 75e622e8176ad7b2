"""Tests for run summaries, the markdown report and the PDF dossier."""
import csv

import pytest

from src.reporting.pdf.run_dossier import generate_run_dossier_pdf
from src.reporting.summary import RunSummary, collect_run, render_markdown, write_report
from src.shared.jsonio import write_document

AUDIT = {
    "kind": "ccbp",
    "eps": 0.01,
    "c_audit": 25.0,
    "threshold": 0.25,
    "passed": True,
    "effective_eps": 0.002,
    "structural": [],
    "conditions": {
        "same_level": {"value": 0.05, "worst_angle": 0.05, "level": 2, "checked": 40, "skipped": 0, "passed": True},
        "cross_level": {"value": 0.03, "worst_angle": 0.03, "level": 1, "checked": 12, "skipped": 1, "passed": True},
    },
}


@pytest.fixture
def run_dir(tmp_path):
    run = tmp_path / "run"
    write_document(run / "audit.json", {"kind": "audit", "provenance": {"command": "build", "config_hash": "aaa"}, "audit": AUDIT})
    write_document(
        run / "eval.json",
        {
            "kind": "evaluation",
            "provenance": {"command": "eval", "config_hash": "aaa"},
            "distortion": {"n_pairs": 50, "ratio_min": 0.98, "ratio_max": 1.03, "exponent": 0.99},
            "flatness": {"worst": 0.01, "eps_in": 0.002, "ratio": 5.0, "budget": 50.0, "passed": True},
            "eps_prime": {"max": 0.0, "mean": 0.0, "points": 16},
        },
    )
    write_document(
        run / "betas.json",
        {
            "kind": "betas",
            "provenance": {"command": "betas", "config_hash": "bbb"},
            "profile": {"points": [{"point_id": 3, "J_inf": 0.2, "J_1": 0.4}, {"point_id": 9, "J_inf": 0.1, "J_1": 0.7}]},
        },
    )
    return run


class TestCollectRun:
    def test_reads_available_documents(self, run_dir):
        summary = collect_run(run_dir)
        assert summary.commands == ["build", "eval", "betas"]
        assert summary.config_hashes == ["aaa", "bbb"]
        assert summary.audit["threshold"] == 0.25
        assert summary.flatness["passed"] is True
        assert summary.betas == {"points": 2, "max_J_inf": 0.2, "max_J_1": 0.7}
        assert summary.isometry is None
        assert summary.passed

    def test_empty_directory(self, tmp_path):
        summary = collect_run(tmp_path)
        assert summary.commands == []
        assert summary.passed

    def test_failed_section_fails_the_run(self):
        assert not RunSummary(sawtooth={"passed": False}).passed
        assert RunSummary(flatness={"passed": None}).passed

    def test_condition_rows(self, run_dir):
        rows = collect_run(run_dir).condition_rows()
        assert [(r["audit"], r["condition"]) for r in rows] == [("ccbp", "same_level"), ("ccbp", "cross_level")]


class TestMarkdown:
    def test_sections(self, run_dir):
        text = render_markdown(collect_run(run_dir))
        assert "## CCBP audit" in text
        assert "| same_level | 0.05 | 0.05 | 2 | 40 | 0 | yes |" in text
        assert "## Distortion" in text
        assert "## Beta profile" in text
        assert "## Saw-tooth audit" not in text
        assert "| Overall | passed |" in text

    def test_failed_run(self):
        text = render_markdown(RunSummary(audit={**AUDIT, "passed": False}))
        assert "| Overall | FAILED |" in text
        assert "passed: no" in text


def test_write_report(tmp_path, run_dir):
    json_path, md_path, csv_path = write_report(collect_run(run_dir), tmp_path / "report")
    assert json_path.name == "report.json"
    assert md_path.read_text().startswith("# Reifenberg parameterization run report")
    with csv_path.open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert rows[0]["condition"] == "same_level"
    assert rows[1]["skipped"] == "1"


def test_pdf_dossier(tmp_path, run_dir):
    path = generate_run_dossier_pdf(collect_run(run_dir), tmp_path / "pdf" / "report.pdf")
    assert path.exists()
    assert path.read_bytes().startswith(b"%PDF")


def test_pdf_dossier_of_an_empty_run(tmp_path):
    path = generate_run_dossier_pdf(RunSummary(), tmp_path / "empty.pdf")
    assert path.stat().st_size > 0
