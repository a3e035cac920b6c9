"""Text and SVG renderings of per-sentence attention weights."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

BAR_MAX_WIDTH = 480
ROW_HEIGHT = 26
LEFT_MARGIN = 12
CAPTION_LINES = 3


def attention_table(
    sentences: list[str],
    alpha: np.ndarray,
    question: str,
    predicted: str,
    gold: str,
) -> str:
    """One line per sentence with its attention weight to 4 decimals."""
    lines = [f"question: {question}", f"predicted: {predicted}", f"gold: {gold}", ""]
    for sent, w in zip(sentences, alpha):
        lines.append(f"{w:.4f}  {sent}")
    return "\n".join(lines)


def attention_svg(
    sentences: list[str],
    alpha: np.ndarray,
    question: str,
    predicted: str,
    gold: str,
) -> str:
    """Horizontal bar chart: one bar per sentence, width proportional to its
    attention weight, with a question/answer caption block."""
    k = len(sentences)
    height = (k + CAPTION_LINES + 1) * ROW_HEIGHT
    width = BAR_MAX_WIDTH + 320
    peak = max(float(np.max(alpha)), 1e-12)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="13">'
    ]
    for i, (sent, w) in enumerate(zip(sentences, alpha)):
        y = i * ROW_HEIGHT + 6
        bar = BAR_MAX_WIDTH * float(w) / peak
        parts.append(
            f'<rect x="{LEFT_MARGIN}" y="{y}" width="{bar:.1f}" height="{ROW_HEIGHT - 10}" '
            f'fill="#4878cf"/>'
        )
        parts.append(
            f'<text x="{LEFT_MARGIN + BAR_MAX_WIDTH + 8}" y="{y + 12}">'
            f"{float(w):.4f} {escape(sent)}</text>"
        )
    base = k * ROW_HEIGHT + 20
    for j, line in enumerate(
        (f"question: {question}", f"predicted: {predicted}", f"gold: {gold}")
    ):
        parts.append(f'<text x="{LEFT_MARGIN}" y="{base + j * ROW_HEIGHT}">{escape(line)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
