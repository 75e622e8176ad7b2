"""End-to-end tests for the reifenberg command line."""
import csv
import json

import numpy as np
import pytest

from src.beta.cloud import plane_cloud
from src.cli.main import _spread_indices, build_parser, main
from src.geom.primitives import coordinate_plane
from src.nets.ccbp import uniform_ccbp
from src.nets.multiscale import build_net
from src.shared.errors import EXIT_AUDIT, EXIT_NUMERIC, EXIT_OK, EXIT_SCHEMA
from src.shared.jsonio import write_document


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    """Run every command from an empty directory with no REIFENBERG_* overrides."""
    monkeypatch.chdir(tmp_path)
    for name in ("REIFENBERG_THREADS", "REIFENBERG_SEED", "REIFENBERG_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"depth": 2, "grid_half_width": 0.5, "grid_pitch": 0.01, "n_pairs": 50}))
    return path


@pytest.fixture
def spec(tmp_path):
    path = tmp_path / "line.json"
    path.write_text(json.dumps({"kind": "graph", "half_width": 1.5, "pitch": 0.01}))
    return path


@pytest.fixture
def built(tmp_path, config, spec):
    """gen + build into tmp_path/run; returns the run directory."""
    run = tmp_path / "run"
    assert main(["gen", str(spec), "--out", str(run)]) == EXIT_OK
    assert main(["build", str(run / "cloud.json"), "--config", str(config), "--out", str(run)]) == EXIT_OK
    return run


@pytest.fixture
def tilted_ccbp(tmp_path):
    sigma0 = coordinate_plane(2, 1)
    net = build_net(plane_cloud(sigma0, 1.5, 0.01), depth=1)
    ccbp = uniform_ccbp(net, sigma0, eps=0.001)
    ccbp.frames[1][0] = [[np.cos(0.5), np.sin(0.5)]]
    return write_document(tmp_path / "tilted.json", {"kind": "ccbp", "ccbp": ccbp.to_dict()})


def _read(path):
    return json.loads(path.read_text())


# ── gen / build ──


class TestGenAndBuild:
    def test_gen_writes_cloud(self, tmp_path, spec):
        assert main(["gen", str(spec), "--out", str(tmp_path / "out")]) == EXIT_OK
        document = _read(tmp_path / "out" / "cloud.json")
        assert document["kind"] == "cloud"
        assert document["schema_version"] == 1
        assert len(document["cloud"]["points"]) == 301
        assert document["provenance"]["spec"]["kind"] == "graph"
        assert document["provenance"]["command"] == "gen"

    def test_reruns_are_byte_identical(self, tmp_path, config, spec):
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["gen", str(spec), "--out", str(out)]) == EXIT_OK
            assert main(["build", str(out / "cloud.json"), "--config", str(config), "--out", str(out)]) == EXIT_OK
        for filename in ("cloud.json", "ccbp.json", "audit.json"):
            assert (tmp_path / "a" / filename).read_bytes() == (tmp_path / "b" / filename).read_bytes()

    def test_build_writes_ccbp_and_audit(self, built):
        ccbp = _read(built / "ccbp.json")
        audit = _read(built / "audit.json")
        assert len(ccbp["ccbp"]["frames"]) == 3
        assert ccbp["provenance"]["config"]["depth"] == 2
        assert audit["audit"]["passed"] is True

    def test_custom_sigma0(self, tmp_path, config, built):
        plane = tmp_path / "plane.json"
        plane.write_text(json.dumps({"plane": {"base": [0.0, 0.0], "frame": [[1.0, 0.0]]}}))
        out = tmp_path / "custom"
        args = ["build", str(built / "cloud.json"), "--config", str(config), "--sigma0", str(plane), "--out", str(out)]
        assert main(args) == EXIT_OK
        assert _read(out / "ccbp.json")["provenance"]["inputs"]["sigma0"] == "plane.json"

    def test_sigma0_of_wrong_dimension(self, tmp_path, config, built):
        plane = tmp_path / "plane.json"
        plane.write_text(json.dumps({"plane": {"base": [0.0, 0.0, 0.0], "frame": [[1.0, 0.0, 0.0]]}}))
        args = ["build", str(built / "cloud.json"), "--config", str(config), "--sigma0", str(plane), "--out", str(tmp_path)]
        assert main(args) == EXIT_SCHEMA


# ── betas ──


class TestBetas:
    def test_selected_points(self, tmp_path, built):
        out = tmp_path / "betas"
        assert main(["betas", str(built / "cloud.json"), "--depth", "1", "--points", "100,150", "--out", str(out)]) == EXIT_OK
        profile = _read(out / "betas.json")["profile"]
        assert [p["point_id"] for p in profile["points"]] == [100, 150]
        with (out / "betas.csv").open(newline="") as handle:
            assert len(list(csv.DictReader(handle))) == 4

    def test_index_out_of_range(self, tmp_path, built):
        assert main(["betas", str(built / "cloud.json"), "--points", "5000", "--out", str(tmp_path)]) == EXIT_SCHEMA

    def test_missing_weights(self, tmp_path):
        path = tmp_path / "bare.json"
        path.write_text(json.dumps({"cloud": {"intrinsic_dim": 1, "points": [[0.0, 0.0], [0.1, 0.0]]}}))
        assert main(["betas", str(path), "--out", str(tmp_path)]) == EXIT_SCHEMA


# ── eval ──


class TestEval:
    def test_eval_flat_map(self, built, config):
        assert main(["eval", str(built / "ccbp.json"), "--config", str(config), "--out", str(built)]) == EXIT_OK
        images = _read(built / "images.json")
        assert images["map"] == "f"
        assert np.allclose(images["images"], images["points"])
        report = _read(built / "eval.json")
        assert report["kind"] == "evaluation"
        assert report["audit_passed"] is True
        assert report["distortion"]["ratio_min"] == pytest.approx(1.0)
        assert report["graph"]["single_valued"] is True
        assert report["eps_prime"]["points"] == 16
        assert report["flatness"]["worst"] == pytest.approx(0.0, abs=1e-9)
        assert (built / "images.csv").exists()

    def test_eval_queries(self, tmp_path, built, config):
        queries = tmp_path / "queries.json"
        queries.write_text(json.dumps({"points": [[0.1, 0.0], [0.2, 0.05]]}))
        args = ["eval", str(built / "ccbp.json"), "--config", str(config), "--queries", str(queries),
                "--skip-checks", "--out", str(tmp_path / "q")]
        assert main(args) == EXIT_OK
        images = _read(tmp_path / "q" / "images.json")
        assert images["source"] == [0, 1]
        assert np.allclose(images["images"], [[0.1, 0.0], [0.2, 0.0]])
        assert "distortion" not in _read(tmp_path / "q" / "eval.json")

    def test_eval_extension_with_sawtooth(self, tmp_path, built, config):
        out = tmp_path / "g"
        args = ["eval", str(built / "ccbp.json"), "--config", str(config), "--extend", "--skip-checks",
                "--cloud", str(built / "cloud.json"), "--out", str(out)]
        assert main(args) == EXIT_OK
        report = _read(out / "eval.json")
        assert report["isometry"]["orthogonality_residual"] < 1e-10
        assert report["sawtooth"]["passed"] is True
        assert _read(out / "images.json")["map"] == "g"

    def test_failing_audit_blocks_eval(self, tmp_path, tilted_ccbp):
        assert main(["eval", str(tilted_ccbp), "--out", str(tmp_path / "blocked")]) == EXIT_AUDIT
        assert not (tmp_path / "blocked" / "images.json").exists()

    def test_force_overrides_the_audit(self, tmp_path, tilted_ccbp, config):
        out = tmp_path / "forced"
        args = ["eval", str(tilted_ccbp), "--config", str(config), "--force", "--skip-checks", "--out", str(out)]
        assert main(args) == EXIT_OK
        assert _read(out / "eval.json")["audit_passed"] is False

    def test_extension_reports_grid_pitch_and_outside_queries(self, tmp_path, built, config):
        queries = tmp_path / "queries.json"
        queries.write_text(json.dumps({"points": [[0.1, 0.05], [3.0, 0.05]]}))
        out = tmp_path / "pitch"
        args = ["eval", str(built / "ccbp.json"), "--config", str(config), "--extend", "--skip-checks",
                "--queries", str(queries), "--out", str(out)]
        assert main(args) == EXIT_OK
        isometry = _read(out / "eval.json")["isometry"]
        assert isometry["pitch"] == 0.01
        assert isometry["max_pitch"] == pytest.approx(0.0025)
        assert isometry["pitch_ok"] is False
        assert isometry["outside_patch"] == 1


class TestCalibration:
    def test_first_run_records_thresholds(self, built, config):
        args = ["eval", str(built / "ccbp.json"), "--config", str(config), "--out", str(built)]
        assert main(args) == EXIT_OK
        assert _read(built / "eval.json")["flatness"]["calibrated"] is False
        recorded = _read(built / "calibration.json")["calibration"]
        assert recorded["flat_budget"] == 50.0
        assert recorded["sawtooth_threshold"] == 0.25
        assert "flatness_ratio" in recorded["measured"]

        assert main(args) == EXIT_OK
        assert _read(built / "eval.json")["flatness"]["calibrated"] is True

    def test_frozen_threshold_overrides_the_default(self, tmp_path, built, config):
        out = tmp_path / "frozen"
        write_document(
            out / "calibration.json",
            {"kind": "calibration", "calibration": {"flat_budget": 50.0, "sawtooth_threshold": 10.0}},
        )
        args = ["eval", str(built / "ccbp.json"), "--config", str(config), "--extend", "--skip-checks",
                "--cloud", str(built / "cloud.json"), "--out", str(out)]
        assert main(args) == EXIT_OK
        sawtooth = _read(out / "eval.json")["sawtooth"]
        assert sawtooth["threshold"] == 10.0
        assert sawtooth["calibrated"] is True
        assert sawtooth["passed"] is False

    def test_broken_calibration(self, tmp_path, built, config):
        out = tmp_path / "broken"
        write_document(out / "calibration.json", {"kind": "calibration", "calibration": {"flat_budget": "high"}})
        args = ["eval", str(built / "ccbp.json"), "--config", str(config), "--skip-checks", "--out", str(out)]
        assert main(args) == EXIT_SCHEMA


class TestStoppedBuild:
    def test_sawtooth_uses_the_retained_cloud(self, tmp_path, config, spec):
        run = tmp_path / "stopped"
        assert main(["gen", str(spec), "--out", str(run)]) == EXIT_OK
        args = ["build", str(run / "cloud.json"), "--config", str(config), "--stopping", "1.0", "--out", str(run)]
        assert main(args) == EXIT_OK
        assert _read(run / "ccbp.json")["provenance"]["inputs"]["stopping"] == 1.0

        args = ["eval", str(run / "ccbp.json"), "--config", str(config), "--extend", "--skip-checks",
                "--cloud", str(run / "cloud.json"), "--out", str(run)]
        assert main(args) == EXIT_OK
        sawtooth = _read(run / "eval.json")["sawtooth"]
        assert sawtooth["stopping"] == 1.0
        assert sawtooth["retained_samples"] == 301

    def test_threshold_that_keeps_nothing(self, tmp_path, built, config):
        args = ["eval", str(built / "ccbp.json"), "--config", str(config), "--extend", "--skip-checks",
                "--cloud", str(built / "cloud.json"), "--stopping", "-1", "--out", str(tmp_path / "none")]
        assert main(args) == EXIT_NUMERIC


# ── audit ──


class TestAudit:
    def test_passing_audit(self, tmp_path, built):
        assert main(["audit", str(built / "ccbp.json"), "--out", str(tmp_path / "a")]) == EXIT_OK
        assert _read(tmp_path / "a" / "audit.json")["audit"]["passed"] is True

    def test_failing_audit_still_writes_report(self, tmp_path, tilted_ccbp):
        assert main(["audit", str(tilted_ccbp), "--out", str(tmp_path / "a")]) == EXIT_AUDIT
        audit = _read(tmp_path / "a" / "audit.json")["audit"]
        assert audit["passed"] is False
        assert "same_level" in [name for name, c in audit["conditions"].items() if not c["passed"]]

    def test_family_audit(self, tmp_path, built, config):
        args = ["audit", str(built / "cloud.json"), "--family", "--family-points", "20",
                "--config", str(config), "--out", str(tmp_path / "f")]
        assert main(args) == EXIT_OK
        document = _read(tmp_path / "f" / "family_audit.json")
        assert document["audit"]["c_audit"] == 1.0


# ── report ──


class TestReport:
    def test_report_collects_the_run(self, built, config, mocker):
        pdf = mocker.patch("src.cli.main.generate_run_dossier_pdf")
        assert main(["eval", str(built / "ccbp.json"), "--config", str(config), "--out", str(built)]) == EXIT_OK
        assert main(["report", "--out", str(built), "--pdf"]) == EXIT_OK
        report = _read(built / "report.json")["report"]
        assert report["passed"] is True
        assert report["commands"] == ["build", "eval"]
        assert "# Reifenberg parameterization run report" in (built / "report.md").read_text()
        pdf.assert_called_once()
        assert pdf.call_args.args[1] == built / "report.pdf"

    def test_report_from_another_directory(self, tmp_path, built):
        out = tmp_path / "summary"
        assert main(["report", "--run", str(built), "--out", str(out)]) == EXIT_OK
        assert (out / "report.md").exists()
        assert (out / "conditions.csv").exists()


# ── errors and parsing ──


class TestErrors:
    def test_broken_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["gen", str(path), "--out", str(tmp_path)]) == EXIT_SCHEMA

    def test_unknown_generator(self, tmp_path):
        path = tmp_path / "fern.json"
        path.write_text(json.dumps({"kind": "fern"}))
        assert main(["gen", str(path), "--out", str(tmp_path)]) == EXIT_SCHEMA

    def test_unknown_config_key(self, tmp_path, spec):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"depht": 3}))
        assert main(["gen", str(spec), "--config", str(path), "--out", str(tmp_path)]) == EXIT_SCHEMA

    def test_missing_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_handler_receives_merged_config(self, tmp_path, spec, config, mocker):
        handler = mocker.patch("src.cli.main.cmd_gen", return_value=EXIT_OK)
        assert main(["gen", str(spec), "--config", str(config), "--seed", "9", "--out", str(tmp_path)]) == EXIT_OK
        _, run_config = handler.call_args.args
        assert run_config.seed == 9
        assert run_config.depth == 2


def test_spread_indices():
    assert _spread_indices(5, 10).tolist() == [0, 1, 2, 3, 4]
    assert _spread_indices(101, 3).tolist() == [0, 50, 100]
