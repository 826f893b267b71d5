"""Plain SVG writers for the analysis outputs.

No plotting library: the markup is assembled directly so identical input
produces byte-identical files, which keeps the figures usable as golden
test artifacts.  Numbers are formatted with fixed precision for the same
reason.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

CELL = 18
MARGIN_LEFT = 64
MARGIN_TOP = 64
BAR_WIDTH = 48
BAR_GAP = 12
CHART_HEIGHT = 220


def _heat_color(value: float, lo: float, hi: float) -> str:
    """White at the low end to a deep blue at the high end."""
    if hi <= lo:
        frac = 0.0
    else:
        frac = (value - lo) / (hi - lo)
    red = round(255 - 205 * frac)
    green = round(255 - 155 * frac)
    return f"rgb({red},{green},255)"


def svg_heatmap(
    row_labels: list[str],
    col_labels: list[str],
    values: list[list[float | None]],
    title: str = "",
) -> str:
    """Grid heatmap with labeled axes; None cells are drawn hollow."""
    defined = [v for row in values for v in row if v is not None]
    lo = min(defined) if defined else 0.0
    hi = max(defined) if defined else 1.0
    width = MARGIN_LEFT + CELL * len(col_labels) + 8
    height = MARGIN_TOP + CELL * len(row_labels) + 8
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="monospace" font-size="10">'
    ]
    if title:
        parts.append(f'<text x="{MARGIN_LEFT}" y="16">{escape(title)}</text>')
    for j, label in enumerate(col_labels):
        x = MARGIN_LEFT + j * CELL + CELL // 2
        parts.append(
            f'<text x="{x}" y="{MARGIN_TOP - 6}" text-anchor="start" '
            f'transform="rotate(-60 {x} {MARGIN_TOP - 6})">{escape(label)}</text>'
        )
    for i, label in enumerate(row_labels):
        y = MARGIN_TOP + i * CELL + CELL - 5
        parts.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{y}" text-anchor="end">'
            f"{escape(label)}</text>"
        )
        for j, value in enumerate(values[i]):
            x = MARGIN_LEFT + j * CELL
            top = MARGIN_TOP + i * CELL
            if value is None:
                parts.append(
                    f'<rect x="{x}" y="{top}" width="{CELL}" height="{CELL}" '
                    'fill="none" stroke="#cccccc"/>'
                )
            else:
                parts.append(
                    f'<rect x="{x}" y="{top}" width="{CELL}" height="{CELL}" '
                    f'fill="{_heat_color(value, lo, hi)}" stroke="#ffffff">'
                    f"<title>{value:.2f}</title></rect>"
                )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_bar_chart(
    labels: list[str], counts: list[int | float], title: str = ""
) -> str:
    """Vertical bars with value captions, for bucket histograms."""
    if len(labels) != len(counts):
        raise ValueError(f"{len(labels)} labels for {len(counts)} bars")
    peak = max((float(c) for c in counts), default=0.0)
    width = MARGIN_LEFT + len(labels) * (BAR_WIDTH + BAR_GAP) + 8
    height = MARGIN_TOP + CHART_HEIGHT + 40
    baseline = MARGIN_TOP + CHART_HEIGHT
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" font-family="monospace" font-size="10">'
    ]
    if title:
        parts.append(f'<text x="{MARGIN_LEFT}" y="16">{escape(title)}</text>')
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{baseline}" x2="{width - 8}" '
        f'y2="{baseline}" stroke="#000000"/>'
    )
    for index, (label, count) in enumerate(zip(labels, counts)):
        x = MARGIN_LEFT + index * (BAR_WIDTH + BAR_GAP)
        bar = 0 if peak == 0 else round(CHART_HEIGHT * float(count) / peak)
        parts.append(
            f'<rect x="{x}" y="{baseline - bar}" width="{BAR_WIDTH}" '
            f'height="{bar}" fill="rgb(70,110,210)"/>'
        )
        parts.append(
            f'<text x="{x + BAR_WIDTH // 2}" y="{baseline - bar - 4}" '
            f'text-anchor="middle">{count:g}</text>'
        )
        parts.append(
            f'<text x="{x + BAR_WIDTH // 2}" y="{baseline + 14}" '
            f'text-anchor="middle">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
