"""Dependency-free line charts as deterministic SVG."""

from __future__ import annotations

WIDTH, HEIGHT = 800, 600
MARGIN_LEFT, MARGIN_RIGHT = 80, 30
MARGIN_TOP, MARGIN_BOTTOM = 40, 60


def _fmt(x):
    return f"{x:.2f}"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def line_chart_svg(xs, ys, title="", x_label="", y_label=""):
    """One polyline on labeled axes in a fixed 800x600 viewport.

    Output bytes depend only on the input series, so identical data
    gives identical files.
    """
    if len(xs) != len(ys) or not xs:
        raise ValueError("line_chart_svg needs equal, non-empty x and y series")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x):
        return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return HEIGHT - MARGIN_BOTTOM - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]
    x0, y0 = MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN_RIGHT}" y2="{y0}" stroke="black"/>'
    )
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_TOP}" stroke="black"/>')
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{_fmt(px(tx))}" y="{y0 + 20}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(py(ty) + 4)}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{_fmt(ty)}</text>'
        )
    parts.append(
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif">{x_label}</text>'
    )
    parts.append(
        f'<text x="20" y="{HEIGHT // 2}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif" transform="rotate(-90 20 {HEIGHT // 2})">{y_label}</text>'
    )
    points = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{points}" fill="none" stroke="#c0392b" stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
