"""Tiny dependency-free SVG 1.1 writer for the result plots."""

import math

WIDTH, HEIGHT = 560, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 55


def _nice_ticks(lo, hi, target=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 5, 10):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


class _Frame:
    def __init__(self, xlim, ylim, title, xlabel, ylabel):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
            f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>\n'
        ]
        self._axes(xlabel, ylabel)

    def px(self, x):
        return MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y):
        return HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)

    def _axes(self, xlabel, ylabel):
        x0p, x1p = MARGIN_L, WIDTH - MARGIN_R
        y0p, y1p = HEIGHT - MARGIN_B, MARGIN_T
        self.parts.append(
            f'<line x1="{x0p}" y1="{y0p}" x2="{x1p}" y2="{y0p}" stroke="black"/>\n'
            f'<line x1="{x0p}" y1="{y0p}" x2="{x0p}" y2="{y1p}" stroke="black"/>\n')
        for t in _nice_ticks(self.x0, self.x1):
            xp = self.px(t)
            self.parts.append(
                f'<line x1="{xp:.1f}" y1="{y0p}" x2="{xp:.1f}" y2="{y0p + 5}" stroke="black"/>\n'
                f'<text x="{xp:.1f}" y="{y0p + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{t:g}</text>\n')
        for t in _nice_ticks(self.y0, self.y1):
            yp = self.py(t)
            self.parts.append(
                f'<line x1="{x0p - 5}" y1="{yp:.1f}" x2="{x0p}" y2="{yp:.1f}" stroke="black"/>\n'
                f'<text x="{x0p - 8}" y="{yp + 4:.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{t:g}</text>\n')
        self.parts.append(
            f'<text x="{(x0p + x1p) / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{xlabel}</text>\n'
            f'<text x="18" y="{(y0p + y1p) / 2:.0f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13" '
            f'transform="rotate(-90 18 {(y0p + y1p) / 2:.0f})">{ylabel}</text>\n')

    def done(self):
        self.parts.append("</svg>\n")
        return "".join(self.parts)


def scatter_svg(points, title, xlabel, ylabel):
    """points: iterable of (x, y, stable flag). Stable = filled circle,
    unstable = cross."""
    points = list(points)
    xs = [p[0] for p in points] or [0, 1]
    ys = [p[1] for p in points] or [0, 1]
    pad_x = 0.05 * (max(xs) - min(xs) or 1)
    pad_y = 0.05 * (max(ys) - min(ys) or 1)
    f = _Frame((min(xs) - pad_x, max(xs) + pad_x),
               (min(ys) - pad_y, max(ys) + pad_y), title, xlabel, ylabel)
    for x, y, stable in points:
        xp, yp = f.px(x), f.py(y)
        if stable:
            f.parts.append(f'<circle cx="{xp:.1f}" cy="{yp:.1f}" r="5" fill="#2166ac"/>\n')
        else:
            f.parts.append(
                f'<line x1="{xp - 4:.1f}" y1="{yp - 4:.1f}" x2="{xp + 4:.1f}" '
                f'y2="{yp + 4:.1f}" stroke="#b2182b" stroke-width="2"/>\n'
                f'<line x1="{xp - 4:.1f}" y1="{yp + 4:.1f}" x2="{xp + 4:.1f}" '
                f'y2="{yp - 4:.1f}" stroke="#b2182b" stroke-width="2"/>\n')
    return f.done()


def line_svg(xs, ys, title, xlabel, ylabel):
    xs, ys = list(xs), list(ys)
    pad_x = 0.05 * (max(xs) - min(xs) or 1)
    ylo, yhi = min(0.0, min(ys)), max(ys)
    pad_y = 0.08 * (yhi - ylo or 1)
    f = _Frame((min(xs) - pad_x, max(xs) + pad_x), (ylo, yhi + pad_y),
               title, xlabel, ylabel)
    pts = " ".join(f"{f.px(x):.1f},{f.py(y):.1f}" for x, y in zip(xs, ys))
    f.parts.append(f'<polyline points="{pts}" fill="none" stroke="#2166ac" '
                   f'stroke-width="2"/>\n')
    for x, y in zip(xs, ys):
        f.parts.append(f'<circle cx="{f.px(x):.1f}" cy="{f.py(y):.1f}" r="4" '
                       f'fill="#2166ac"/>\n')
    return f.done()
