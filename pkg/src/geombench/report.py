"""Human-readable reports: markdown tables, an error-curve SVG, and a PCA
scatter of embeddings colored by program complexity.

All output is deterministic text; floats are formatted once, here.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .embeddings import read_table
from .errors import ConfigError


def _fmt(x, sig=4) -> str:
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        return f"{x:.{sig}g}"
    return str(x)


def _svg_header(w, h):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">\n'
        f'<rect width="{w}" height="{h}" fill="white"/>\n'
    )


def error_curve_svg(classes, width=560, height=360) -> str:
    """Line plot of per-class error rate, most regular class first."""
    margin = 56
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    n = len(classes)
    xs = [margin + plot_w * (i / max(1, n - 1)) for i in range(n)]
    rates = [c["error_rate"] for c in classes]
    top = max(0.05, max(rates) * 1.15)
    ys = [margin + plot_h * (1 - r / top) for r in rates]
    parts = [_svg_header(width, height)]
    parts.append(
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        y = margin + plot_h * (1 - frac)
        parts.append(
            f'<text x="{margin - 8}" y="{y + 4}" font-size="11" text-anchor="end">'
            f"{_fmt(frac * top, 2)}</text>"
        )
    points = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(xs, ys))
    parts.append(
        f'<polyline points="{points}" fill="none" stroke="#1f6fb2" stroke-width="2"/>'
    )
    for (x, y, c) in zip(xs, ys, classes):
        parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3.5" fill="#1f6fb2"/>')
        parts.append(
            f'<text x="{x:.1f}" y="{height - margin + 14}" font-size="9" '
            f'text-anchor="end" transform="rotate(-40 {x:.1f} {height - margin + 14})">'
            f'{c["class"]}</text>'
        )
    parts.append(
        f'<text x="{width / 2:.0f}" y="16" font-size="13" text-anchor="middle">'
        f"error rate by shape regularity (most regular left)</text>"
    )
    parts.append("</svg>\n")
    return "\n".join(parts)


def _viridis_like(t: float) -> str:
    # compact 5-stop ramp; t in [0, 1]
    stops = [
        (68, 1, 84),
        (59, 82, 139),
        (33, 145, 140),
        (94, 201, 98),
        (253, 231, 37),
    ]
    t = min(max(t, 0.0), 1.0) * (len(stops) - 1)
    i = min(int(t), len(stops) - 2)
    f = t - i
    rgb = tuple(round(a + (b - a) * f) for a, b in zip(stops[i], stops[i + 1]))
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def pca_scatter_svg(table_path, manifest_path, width=560, height=520) -> str:
    """2-component PCA of stimulus embeddings, colored by complexity."""
    table = read_table(table_path)
    records = [
        json.loads(line)
        for line in Path(manifest_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    ids = [r["id"] for r in records]
    mdl = np.array([r["mdl"] for r in records], dtype=float)
    X = table.matrix(ids).astype(np.float64)
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    pts = Xc @ vt[:2].T
    span = np.ptp(pts, axis=0)
    span[span == 0] = 1.0
    margin = 40
    norm = (pts - pts.min(axis=0)) / span
    lo, hi = mdl.min(), mdl.max()
    shade = (mdl - lo) / (hi - lo) if hi > lo else np.zeros_like(mdl)
    parts = [_svg_header(width, height)]
    parts.append(
        f'<text x="{width / 2:.0f}" y="16" font-size="13" text-anchor="middle">'
        f"embedding PCA colored by program complexity ({table.model_tag or 'model'})</text>"
    )
    for (x, y), s in zip(norm, shade):
        px = margin + x * (width - 2 * margin)
        py = height - margin - y * (height - 2 * margin)
        parts.append(
            f'<circle cx="{px:.1f}" cy="{py:.1f}" r="2.5" fill="{_viridis_like(float(s))}" '
            f'fill-opacity="0.8"/>'
        )
    parts.append(
        f'<text x="{margin}" y="{height - 8}" font-size="11">complexity {_fmt(lo)} '
        f"(violet) to {_fmt(hi)} (yellow)</text>"
    )
    parts.append("</svg>\n")
    return "\n".join(parts)


def _table_md(headers, rows) -> str:
    out = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    for row in rows:
        out.append("| " + " | ".join(_fmt(v) for v in row) + " |")
    return "\n".join(out)


def build_report(run_dir, out_path=None) -> str:
    """Collect analysis JSONs from a run directory into one markdown report."""
    run_dir = Path(run_dir)
    analyses = sorted(run_dir.glob("*.json"))
    analyses = [p for p in analyses if p.name not in ("run.json", "render.json")]
    if not analyses:
        raise ConfigError(f"no analysis JSON files in {run_dir}")
    sections = [f"# Analysis report\n\nharness version {__version__}\n"]
    glm_rows, mixed_rows = [], []
    for path in analyses:
        data = json.loads(path.read_text(encoding="utf-8"))
        kind = data.get("analysis")
        if kind == "glm":
            glm_rows.append(
                [data.get("rt", ""), "GLM", data.get("model", ""), data["metric"],
                 _fmt(data["predictor_p"], 3), _fmt(data["r2"], 3)]
            )
        elif kind == "mixed":
            mixed_rows.append(
                [data.get("rt", ""), "Mixed Effects", data.get("model", ""), data["metric"],
                 _fmt(data["predictor_p"], 3), _fmt(data["marginal_r2"], 3)]
            )
        elif kind == "decode":
            sections.append(
                f"## Decoding ({data.get('model', '')})\n\n"
                f"20-fold out-of-fold R^2 = {_fmt(data['r2'], 3)} "
                f"(n={data['n']}, dim={data['dim']})\n"
            )
        elif kind == "correlate":
            if data.get("degenerate"):
                body = f"degenerate metrics (n = {data['n']}): {data.get('warning', '')}"
            else:
                body = f"r = {_fmt(data['r'], 3)}, p = {_fmt(data['p'], 3)}, n = {data['n']}"
            sections.append(
                f"## Distance-complexity correlation ({data.get('model', '')})\n\n{body}\n"
            )
        elif kind == "slope":
            svg_name = path.stem + "_curve.svg"
            (run_dir / svg_name).write_text(
                error_curve_svg(data["classes"]), encoding="utf-8"
            )
            sections.append(
                f"## Regularity slope ({data.get('model', '')})\n\n"
                f"slope = {_fmt(data['slope'], 3)}, p = {_fmt(data['p'], 3)} "
                f"(x = {data['x_kind']})\n\n![error curve]({svg_name})\n"
            )
        elif kind == "human_correlation":
            rows = [
                [g, _fmt(v["r"], 3), _fmt(v["p"], 3), v["n"]]
                for g, v in sorted(data["groups"].items())
            ]
            sections.append(
                "## Correspondence with human/baboon error rates\n\n"
                + _table_md(["group", "r", "p", "n"], rows) + "\n"
            )
        elif kind == "geo_accuracy":
            sections.append(
                f"## Category judgment accuracy ({data.get('model', '')})\n\n"
                + _table_md(
                    ["Model", "Overall", "Close", "Far"],
                    [[data.get("model", ""), _fmt(data["overall"], 3),
                      _fmt(data["close"], 3), _fmt(data["far"], 3)]],
                ) + "\n"
            )
    if glm_rows or mixed_rows:
        sections.insert(
            1,
            "## Regression significance\n\n"
            + _table_md(
                ["Condition", "Regression", "Model", "Metric", "p-value", "R2"],
                glm_rows + mixed_rows,
            )
            + "\n",
        )
    text = "\n".join(sections)
    out_path = Path(out_path) if out_path else run_dir / "report.md"
    out_path.write_text(text, encoding="utf-8")
    return str(out_path)
