"""Self-contained SVG 1.1 line plots (no external assets, no fonts embedded)."""

__all__ = ["line_plot"]

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 40, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v):
    return f"{v:.6g}"


def _axis_range(values):
    lo, hi = min(values), max(values)
    if lo == hi:
        pad = 0.5 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    return lo, hi


def _ticks(lo, hi, count=5):
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def line_plot(path, series, title="", xlabel="", ylabel=""):
    """Write a line plot; `series` is a list of (label, xs, ys) triples.

    Returns the list of (x, y) pixel coordinates per series so callers can
    round-trip the geometry in tests.
    """
    series = [(label, list(xs), list(ys)) for label, xs, ys in series]
    if not series or any(len(xs) == 0 for _, xs, _ in series):
        raise ValueError("every series needs at least one point")
    x_lo, x_hi = _axis_range([x for _, xs, _ in series for x in xs])
    y_lo, y_hi = _axis_range([y for _, _, ys in series for y in ys])
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def to_px(x, y):
        px = MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w
        py = HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * plot_h
        return px, py

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]
    # axes
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN_R}" y2="{y0}" '
                 'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_T}" '
                 'stroke="black" stroke-width="1"/>')
    for tx in _ticks(x_lo, x_hi):
        px, _ = to_px(tx, y_lo)
        parts.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 5}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{y0 + 20}" text-anchor="middle" '
                     f'font-size="11" font-family="sans-serif">{_fmt(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        _, py = to_px(x_lo, ty)
        parts.append(f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 8}" y="{_fmt(py)}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif">{_fmt(ty)}</text>')
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
                 f'font-size="13" font-family="sans-serif">{xlabel}</text>')
    parts.append(f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" font-size="13" '
                 f'font-family="sans-serif" transform="rotate(-90 16 {HEIGHT / 2})">{ylabel}</text>')

    pixel_series = []
    for s_idx, (label, xs, ys) in enumerate(series):
        color = PALETTE[s_idx % len(PALETTE)]
        pts = [to_px(x, y) for x, y in zip(xs, ys)]
        pixel_series.append(pts)
        point_str = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{point_str}"/>')
        ly = MARGIN_T + 16 * s_idx
        parts.append(f'<line x1="{WIDTH - MARGIN_R - 120}" y1="{ly}" '
                     f'x2="{WIDTH - MARGIN_R - 100}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{WIDTH - MARGIN_R - 95}" y="{ly + 4}" font-size="11" '
                     f'font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
    return pixel_series
