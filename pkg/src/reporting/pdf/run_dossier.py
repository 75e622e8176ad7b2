"""Run dossier PDF generation."""
from pathlib import Path
from xml.sax.saxutils import escape

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import mm
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from src.reporting.summary import RunSummary


def _safe(value: object) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}"
    return escape(str(value))


def _p(text: object, style):
    return Paragraph(_safe(text), style)


def _metrics(title: str, values: dict | None, keys: list[str], styles: dict) -> list:
    if not values:
        return []
    rows = [["Metric", "Value"]] + [[key, _safe(values.get(key))] for key in keys if key in values]
    return [
        Paragraph(_safe(title), styles["h2"]),
        Table(rows, colWidths=[70 * mm, 50 * mm], style=_table_style()),
    ]


def _audit(title: str, audit: dict | None, styles: dict) -> list:
    if not audit:
        return []
    rows = [["Condition", "Worst value", "Worst angle (rad)", "Level", "Checked", "Skipped", "Passed"]]
    for name, c in audit.get("conditions", {}).items():
        rows.append([
            name,
            _safe(c.get("value")),
            _safe(c.get("worst_angle")),
            _safe(c.get("level")),
            str(c.get("checked", 0)),
            str(c.get("skipped", 0)),
            _safe(c.get("passed")),
        ])
    table = Table(rows, colWidths=[45 * mm, 30 * mm, 35 * mm, 18 * mm, 22 * mm, 22 * mm, 20 * mm], repeatRows=1)
    table.setStyle(_table_style())
    note = (
        f"Threshold {_safe(audit.get('threshold'))}, effective eps {_safe(audit.get('effective_eps'))}, "
        f"passed: {_safe(audit.get('passed'))}; structural issues: {len(audit.get('structural') or [])}."
    )
    return [Paragraph(_safe(title), styles["h2"]), _p(note, styles["body"]), Spacer(1, 2 * mm), table]


def generate_run_dossier_pdf(summary: RunSummary, output_path: Path) -> Path:
    """Render a run summary as a landscape A4 PDF."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    doc = SimpleDocTemplate(
        str(output_path),
        pagesize=landscape(A4),
        leftMargin=14 * mm,
        rightMargin=14 * mm,
        topMargin=14 * mm,
        bottomMargin=14 * mm,
        invariant=1,
    )

    base = getSampleStyleSheet()
    styles = {
        "title": ParagraphStyle("DossierTitle", parent=base["Title"], fontSize=22, spaceAfter=8 * mm),
        "h2": ParagraphStyle("DossierH2", parent=base["Heading2"], fontSize=14, spaceBefore=5 * mm, spaceAfter=3 * mm),
        "body": ParagraphStyle("DossierBody", parent=base["BodyText"], fontSize=8, leading=10),
    }

    elements = [Paragraph("Reifenberg Parameterization Run Dossier", styles["title"])]
    provenance = [
        ["Library version", "Config hashes", "Commands", "Overall"],
        [
            _safe(summary.library_version),
            _p(", ".join(summary.config_hashes) or "n/a", styles["body"]),
            _p(", ".join(summary.commands) or "n/a", styles["body"]),
            "passed" if summary.passed else "FAILED",
        ],
    ]
    elements.append(Table(provenance, colWidths=[35 * mm, 120 * mm, 70 * mm, 25 * mm], style=_table_style()))
    elements.append(Spacer(1, 3 * mm))
    elements.append(_p(
        "Thresholds flagged as calibrated are regression values frozen from calibration runs, not proven constants.",
        styles["body"],
    ))

    elements += _audit("CCBP Audit", summary.audit, styles)
    elements += _audit("Plane Family Audit", summary.family_audit, styles)
    elements += _metrics("Distortion", summary.distortion,
                         ["n_pairs", "ratio_min", "ratio_max", "spread", "exponent", "exponent_upper", "exponent_lower"],
                         styles)
    elements += _metrics("Flatness", summary.flatness, ["worst", "eps_in", "ratio", "budget", "passed"], styles)
    elements += _metrics("Graph Checks", summary.graph, ["checked", "single_valued", "max_lipschitz"], styles)
    elements += _metrics("Isometry Field", summary.isometry,
                         ["orthogonality_residual", "mapping_residual", "max_increment"], styles)
    elements += _metrics("Saw-tooth Audit", summary.sawtooth,
                         ["n_members", "min_distance", "min_ratio", "threshold", "passed"], styles)

    doc.build(elements)
    return output_path


def _table_style(font_size: int = 8) -> TableStyle:
    return TableStyle(
        [
            ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor("#e5edf9")),
            ("TEXTCOLOR", (0, 0), (-1, 0), colors.HexColor("#1f2937")),
            ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
            ("FONTSIZE", (0, 0), (-1, -1), font_size),
            ("GRID", (0, 0), (-1, -1), 0.25, colors.HexColor("#cbd5e1")),
            ("VALIGN", (0, 0), (-1, -1), "TOP"),
            ("BOTTOMPADDING", (0, 0), (-1, -1), 4),
            ("TOPPADDING", (0, 0), (-1, -1), 4),
        ]
    )
