"""
Batch front end.

    reifenberg gen SPEC            generator spec -> cloud.json
    reifenberg betas CLOUD         -> betas.json + betas.csv
    reifenberg build CLOUD         -> ccbp.json + audit.json
    reifenberg eval CCBP           -> images.json + eval.json (--extend for g)
    reifenberg audit CCBP|CLOUD    -> audit.json (--family: family_audit.json)
    reifenberg report              -> report.json + report.md (+ report.pdf)

Exit codes: 0 success, 2 schema error, 3 audit failure, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from src.beta.cloud import PointCloud
from src.beta.profiles import build_profile
from src.beta.statistics import stopping_predicate
from src.extend.extension import g_many
from src.extend.isometry import build_isometry_field, mapping_residual
from src.extend.sawtooth import (
    DEFAULT_MARGIN_THRESHOLD,
    SawTooth,
    limit_set_sample,
    sample_domain,
    sawtooth_audit,
)
from src.flow.checks import flatness_check, graph_checks
from src.flow.distortion import distortion
from src.flow.param_map import ParamMap, eps_prime_sum, sigma0_grid, surface_sample
from src.geom.primitives import AffinePlane, coordinate_plane
from src.nets.audit import audit_ccbp, audit_family
from src.nets.ccbp import Ccbp, fit_ccbp
from src.nets.family import tangent_family
from src.nets.multiscale import build_net, scale
from src.reporting.pdf.run_dossier import generate_run_dossier_pdf
from src.reporting.summary import collect_run, write_report
from src.sets.generators import generate, spec_from_dict
from src.shared.calibration import Calibration, load_calibration, record_calibration
from src.shared.errors import (
    EXIT_OK,
    AuditFailure,
    InsufficientSampleError,
    SchemaError,
    exit_code_for,
    format_error,
)
from src.shared.jsonio import export_rows_csv, provenance, read_document, require, require_matrix, write_document
from src.shared.logging_config import configure_logging
from src.shared.run_config import RunConfig, effective_threads, load_run_config

log = logging.getLogger(__name__)

DEFAULT_PROFILE_POINTS = 16
DEFAULT_FAMILY_POINTS = 200
EPS_PRIME_POINTS = 16


# ── Input documents ─────────────────────────────────────────

def _load_cloud(path: Path) -> tuple[PointCloud, dict]:
    document = read_document(path)
    raw = require(document, "cloud", "dict", str(path))
    return PointCloud.from_dict(raw, path=f"{path}.cloud"), raw


def _load_plane(path: Optional[Path], n: int, d: int) -> AffinePlane:
    if path is None:
        return coordinate_plane(n, d)
    document = read_document(path)
    raw = require(document, "plane", "dict", str(path))
    plane = AffinePlane(
        base=require_matrix(raw, "base", f"{path}.plane", ndim=1),
        frame=require_matrix(raw, "frame", f"{path}.plane"),
    )
    if plane.n != n or plane.d != d:
        raise SchemaError(f"plane is a {plane.d}-plane in R^{plane.n}, cloud needs d={d}, n={n}", path=f"{path}.plane")
    return plane


def _load_ccbp_document(path: Path) -> tuple[Ccbp, dict]:
    document = read_document(path)
    return Ccbp.from_dict(require(document, "ccbp", "dict", str(path)), path=f"{path}.ccbp"), document


def _load_ccbp(path: Path) -> Ccbp:
    return _load_ccbp_document(path)[0]


def _load_queries(path: Path) -> np.ndarray:
    return require_matrix(read_document(path), "points", str(path))


def _spread_indices(size: int, count: int) -> np.ndarray:
    if size <= count:
        return np.arange(size)
    return np.unique(np.linspace(0, size - 1, count).round().astype(int))


def _provenance(command: str, config: RunConfig, **inputs) -> dict:
    return provenance(command, config.to_dict(), inputs={k: v for k, v in inputs.items() if v is not None})


# ── Commands ────────────────────────────────────────────────

def cmd_gen(args, config: RunConfig) -> int:
    document = read_document(args.spec)
    spec = spec_from_dict({k: v for k, v in document.items() if k != "schema_version"}, path=str(args.spec))
    cloud = generate(spec)
    path = write_document(
        Path(args.out) / "cloud.json",
        {
            "kind": "cloud",
            "provenance": _provenance("gen", config, spec=Path(args.spec).name) | {"spec": spec.to_dict()},
            "cloud": cloud.to_dict(),
        },
    )
    log.info("Wrote %d samples to %s", cloud.size, path)
    return EXIT_OK


def cmd_betas(args, config: RunConfig) -> int:
    cloud, raw = _load_cloud(args.cloud)
    if "weights" not in raw:
        raise SchemaError(f"weights are required for beta_q with q = {config.q}", path=f"{args.cloud}.cloud.weights")
    if args.points:
        indices = [int(i) for i in args.points.split(",")]
        if any(not 0 <= i < cloud.size for i in indices):
            raise SchemaError(f"point indices must lie in [0, {cloud.size})", path="--points")
    else:
        indices = _spread_indices(cloud.size, DEFAULT_PROFILE_POINTS).tolist()
    profile = build_profile(cloud, indices, config.depth, config.q)
    out = Path(args.out)
    write_document(
        out / "betas.json",
        {"kind": "betas", "provenance": _provenance("betas", config, cloud=Path(args.cloud).name), "profile": profile.to_json()},
    )
    profile.to_csv(out / "betas.csv")
    log.info("Wrote beta profiles for %d points", len(indices))
    return EXIT_OK


def cmd_build(args, config: RunConfig) -> int:
    cloud, _ = _load_cloud(args.cloud)
    sigma0 = _load_plane(args.sigma0, cloud.n, cloud.d)
    keep = None
    if args.stopping is not None:
        keep = stopping_predicate(cloud, args.stopping, config.depth, config.q)
    net = build_net(cloud, config.depth, keep=keep)
    ccbp = fit_ccbp(cloud, net, sigma0, fit_mode=config.fit_mode, eps=config.eps,
                    fit_radius_factor=config.fit_radius_factor)
    audit = audit_ccbp(ccbp, c_audit=config.c_audit)
    out = Path(args.out)
    block = _provenance("build", config, cloud=Path(args.cloud).name,
                        sigma0=None if args.sigma0 is None else Path(args.sigma0).name, stopping=args.stopping)
    write_document(out / "ccbp.json", {"kind": "ccbp", "provenance": block, "ccbp": ccbp.to_dict()})
    write_document(out / "audit.json", {"kind": "audit", "provenance": block, "audit": audit.to_dict()})
    log.info("Built CCBP with level sizes %s", net.counts())
    return EXIT_OK


def _flatness_scales(pm: ParamMap, pitch: float, half_width: float) -> list[float]:
    return [scale(k) for k in range(1, pm.depth + 1) if scale(k) >= 4.0 * pitch and 1.2 * scale(k) < half_width]


def _graph_summary(pm: ParamMap, surface) -> dict:
    results = []
    for k in range(pm.depth + 1):
        results += graph_checks(pm, surface, k)
    return {
        "checked": len(results),
        "single_valued": all(r.single_valued for r in results),
        "max_lipschitz": max((r.lipschitz_estimate for r in results), default=0.0),
        "failures": [r.to_dict() for r in results if not r.single_valued],
    }


def _retained_cloud(cloud: PointCloud, document: dict, args, config: RunConfig) -> tuple[PointCloud, Optional[float]]:
    """The samples a J_1-stopped build kept (threshold from --stopping or the build provenance)."""
    build = document.get("provenance", {})
    threshold = args.stopping if args.stopping is not None else build.get("inputs", {}).get("stopping")
    if threshold is None:
        return cloud, None
    built_with = build.get("config", {})
    stop = stopping_predicate(cloud, float(threshold), int(built_with.get("depth", config.depth)),
                              float(built_with.get("q", config.q)))
    kept = np.flatnonzero(stop.mask)
    if not len(kept):
        raise InsufficientSampleError(f"J_1 <= {threshold} keeps no sample of the cloud")
    return cloud.subset(kept), float(threshold)


def cmd_eval(args, config: RunConfig) -> int:
    ccbp, ccbp_document = _load_ccbp_document(args.ccbp)
    audit = audit_ccbp(ccbp, c_audit=config.c_audit)
    if not audit.passed:
        if not config.force:
            raise AuditFailure(f"CCBP audit failed ({', '.join(audit.failing()) or 'structure'}).")
        log.warning("Evaluating a CCBP that failed its audit (--force)")
    threads = effective_threads(config)
    pm = ParamMap(ccbp, depth=min(config.depth, ccbp.depth), threads=threads)
    grid = sigma0_grid(pm.sigma0, config.grid_half_width, config.grid_pitch)
    queries = _load_queries(args.queries) if args.queries else grid.points
    report: dict = {"kind": "evaluation", "tail_bound": pm.tail_bound(), "audit_passed": audit.passed}
    block = _provenance("eval", config, ccbp=Path(args.ccbp).name,
                        queries=None if args.queries is None else Path(args.queries).name)
    out = Path(args.out)
    calibration = load_calibration(out)
    calibrated = calibration is not None
    flat_budget = calibration.flat_budget if calibrated else config.flat_budget
    sawtooth_threshold = calibration.sawtooth_threshold if calibrated else DEFAULT_MARGIN_THRESHOLD

    if args.extend:
        field = build_isometry_field(pm, grid)
        images = g_many(pm, field, queries, threads=threads)
        increments = field.increments()
        report["isometry"] = {
            "orthogonality_residual": field.orthogonality_residual(),
            "mapping_residual": mapping_residual(field, pm.sigma0.frame),
            "increments": increments,
            "max_increment": max(increments, default=0.0),
            "pitch": grid.pitch,
            "max_pitch": field.max_pitch,
            "pitch_ok": field.pitch_ok,
            "neighbour_jump": field.neighbour_jump(),
            "outside_patch": int(np.count_nonzero(field.outside_patch(queries))),
        }
        if args.cloud:
            cloud, _ = _load_cloud(args.cloud)
            retained, stopping = _retained_cloud(cloud, ccbp_document, args, config)
            st = SawTooth(config.sawtooth_a, limit_set_sample(pm), pm.sigma0)
            samples = sample_domain(st, config.n_pairs, config.seed, 0.5 * config.grid_half_width, 1.0)
            result = sawtooth_audit(pm, field, st, retained, samples, threshold=sawtooth_threshold,
                                    threads=threads, calibrated=calibrated)
            report["sawtooth"] = {**result.to_dict(), "stopping": stopping, "retained_samples": retained.size}
    else:
        images = pm.evaluate_many(queries, threads=threads)

    if not args.skip_checks:
        report["distortion"] = distortion(pm, n_pairs=config.n_pairs, seed=config.seed, threads=threads).to_dict()
        surface = surface_sample(pm, grid)
        scales = _flatness_scales(pm, config.grid_pitch, config.grid_half_width)
        if scales:
            report["flatness"] = flatness_check(
                pm, surface, scales, eps_in=audit.effective_eps or None, budget=flat_budget, calibrated=calibrated
            ).to_dict()
        report["graph"] = _graph_summary(pm, surface)
        sums = [eps_prime_sum(pm, z) for z in grid.points[_spread_indices(len(grid.points), EPS_PRIME_POINTS)]]
        report["eps_prime"] = {"max": max(sums), "mean": float(np.mean(sums)), "points": len(sums)}

    write_document(
        out / "images.json",
        {
            "kind": "images",
            "provenance": block,
            "map": "g" if args.extend else "f",
            "points": queries,
            "images": images,
            "source": np.arange(len(queries)),
        },
    )
    rows = [{"source": i, **{f"x{j}": v for j, v in enumerate(p)}} for i, p in enumerate(images.tolist())]
    export_rows_csv(rows, out / "images.csv", ["source"] + [f"x{j}" for j in range(pm.n)])
    write_document(out / "eval.json", {"provenance": block, **report})
    if not calibrated and ("flatness" in report or "sawtooth" in report):
        measured = {}
        if "flatness" in report:
            measured["flatness_ratio"] = report["flatness"]["ratio"]
        if "sawtooth" in report:
            measured["sawtooth_min_ratio"] = report["sawtooth"]["min_ratio"]
        record_calibration(out, Calibration(flat_budget, sawtooth_threshold, measured), block)
    log.info("Evaluated %s on %d points", "g" if args.extend else "f", len(queries))
    return EXIT_OK


def cmd_audit(args, config: RunConfig) -> int:
    out = Path(args.out)
    if args.family:
        cloud, _ = _load_cloud(args.input)
        sigma0 = _load_plane(args.sigma0, cloud.n, cloud.d)
        indices = _spread_indices(cloud.size, args.family_points)
        family = tangent_family(cloud, config.depth, indices)
        audit = audit_family(cloud, family, sigma0, eps=config.eps)
        name = "family_audit.json"
    else:
        audit = audit_ccbp(_load_ccbp(args.input), c_audit=config.c_audit)
        name = "audit.json"
    write_document(
        out / name,
        {"kind": "audit", "provenance": _provenance("audit", config, input=Path(args.input).name), "audit": audit.to_dict()},
    )
    if not audit.passed and not config.force:
        raise AuditFailure(f"{audit.kind} audit failed ({', '.join(audit.failing()) or 'structure'}).")
    return EXIT_OK


def cmd_report(args, config: RunConfig) -> int:
    run_dir = Path(args.run or args.out)
    summary = collect_run(run_dir)
    json_path, md_path, _ = write_report(summary, Path(args.out))
    if args.pdf:
        generate_run_dossier_pdf(summary, Path(args.out) / "report.pdf")
    log.info("Wrote %s and %s", json_path, md_path)
    return EXIT_OK


# ── Parser ──────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (falls back to REIFENBERG_THREADS)")
    common.add_argument("--seed", type=int, help="seed for pair and domain sampling")
    common.add_argument("--force", action="store_true", default=None, help="continue past a failing audit")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    common.add_argument("--depth", type=int, help="number of scales K")
    common.add_argument("--eps", type=float, help="coherence budget eps")
    common.add_argument("--c-audit", dest="c_audit", type=float, help="audit multiplier")
    common.add_argument("--fit-mode", dest="fit_mode", choices=["L2", "L1", "MINIMAX"])
    common.add_argument("--q", type=float, help="exponent of beta_q")

    parser = argparse.ArgumentParser(prog="reifenberg", description="Reifenberg parameterization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a test set")
    gen.add_argument("spec", type=Path)
    gen.set_defaults(handler=cmd_gen)

    betas = sub.add_parser("betas", parents=[common], help="beta / Jones profiles")
    betas.add_argument("cloud", type=Path)
    betas.add_argument("--points", help="comma-separated sample indices")
    betas.set_defaults(handler=cmd_betas)

    build = sub.add_parser("build", parents=[common], help="build and audit a CCBP")
    build.add_argument("cloud", type=Path)
    build.add_argument("--sigma0", type=Path, help="JSON document with a 'plane' object")
    build.add_argument("--stopping", type=float, help="keep only points with J_1 <= threshold")
    build.set_defaults(handler=cmd_build)

    ev = sub.add_parser("eval", parents=[common], help="evaluate f (or g with --extend)")
    ev.add_argument("ccbp", type=Path)
    ev.add_argument("--queries", type=Path, help="JSON document with 'points'")
    ev.add_argument("--extend", action="store_true")
    ev.add_argument("--cloud", type=Path, help="cloud for the saw-tooth audit (with --extend)")
    ev.add_argument("--stopping", type=float,
                    help="J_1 threshold selecting the retained cloud (defaults to the one used by build)")
    ev.add_argument("--skip-checks", dest="skip_checks", action="store_true")
    ev.set_defaults(handler=cmd_eval)

    audit = sub.add_parser("audit", parents=[common], help="audit a CCBP or a plane family")
    audit.add_argument("input", type=Path)
    audit.add_argument("--family", action="store_true", help="treat input as a cloud with tangent frames")
    audit.add_argument("--sigma0", type=Path)
    audit.add_argument("--family-points", dest="family_points", type=int, default=DEFAULT_FAMILY_POINTS)
    audit.set_defaults(handler=cmd_audit)

    report = sub.add_parser("report", parents=[common], help="consolidated run report")
    report.add_argument("--run", type=Path, help="run directory (defaults to --out)")
    report.add_argument("--pdf", action="store_true")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(logging.DEBUG if args.verbose else None)
    try:
        overrides = {
            key: getattr(args, key)
            for key in ("threads", "seed", "force", "depth", "eps", "c_audit", "fit_mode", "q")
        }
        config = load_run_config(args.config, overrides=overrides)
        return args.handler(args, config)
    except Exception as exc:
        log.error(format_error(exc))
        log.debug("Traceback", exc_info=True)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
