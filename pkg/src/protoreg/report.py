"""Static SVG and CSV renderings of fitted models.

Every number is written with a fixed format, the canvas is an 800x600
viewBox and colors come from a fixed palette, so rendering the same model
twice gives byte-identical files.
"""

import csv
import io
from xml.sax.saxutils import escape

import numpy as np

from .exceptions import InvalidArgumentError

WIDTH, HEIGHT = 800, 600
MARGIN = 60
GRID_POINTS = 200
PALETTE = {
    "background": "#ffffff",
    "axis": "#444444",
    "data": "#4c72b0",
    "prototype": "#c44e52",
    "segment": "#b0b0b0",
    "curve": "#55a868",
    "classes": ("#4c72b0", "#dd8452", "#55a868", "#8172b3", "#937860", "#da8bc3"),
}

SUPPORTED = ("2D vector data with prototypes", "1D -> 1D regression",
             "3-class one-hot response (ternary plot)")


def _f(v):
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, title):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
            f'width="{WIDTH}" height="{HEIGHT}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="{PALETTE["background"]}"/>',
            f'<text x="{WIDTH // 2}" y="30" text-anchor="middle" font-family="sans-serif" '
            f'font-size="16" fill="{PALETTE["axis"]}">{escape(title)}</text>',
        ]

    def add(self, s):
        self.parts.append(s)

    def line(self, p, q, color, cls, width=1.0):
        self.add(f'<line class="{cls}" x1="{_f(p[0])}" y1="{_f(p[1])}" x2="{_f(q[0])}" '
                 f'y2="{_f(q[1])}" stroke="{color}" stroke-width="{_f(width)}"/>')

    def dot(self, p, color, cls="data", r=3.0):
        self.add(f'<circle class="{cls}" cx="{_f(p[0])}" cy="{_f(p[1])}" r="{_f(r)}" '
                 f'fill="{color}" fill-opacity="0.7"/>')

    def plus(self, p, color, size=8.0):
        x, y = p
        self.add(f'<path class="prototype" d="M{_f(x - size)} {_f(y)}H{_f(x + size)}'
                 f'M{_f(x)} {_f(y - size)}V{_f(y + size)}" stroke="{color}" stroke-width="3"/>')

    def polyline(self, pts, color, cls="curve"):
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.add(f'<polyline class="{cls}" points="{coords}" fill="none" stroke="{color}" '
                 f'stroke-width="2"/>')

    def text(self, p, s, anchor="middle", size=12):
        self.add(f'<text x="{_f(p[0])}" y="{_f(p[1])}" text-anchor="{anchor}" font-family="sans-serif" '
                 f'font-size="{size}" fill="{PALETTE["axis"]}">{escape(s)}</text>')

    def render(self):
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class _Frame:
    """Affine map from data bounds to the plotting area (y axis pointing up)."""

    def __init__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        self.x0, self.x1 = self._pad(xs.min(), xs.max())
        self.y0, self.y1 = self._pad(ys.min(), ys.max())

    @staticmethod
    def _pad(lo, hi):
        span = hi - lo
        if span <= 0:
            span = max(abs(lo), 1.0)
        return lo - 0.05 * span, hi + 0.05 * span

    def __call__(self, x, y):
        px = MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2 * MARGIN)
        py = HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2 * MARGIN)
        return px, py

    def axes(self, canvas, xlabel, ylabel):
        lo, hi = self(self.x0, self.y0), self(self.x1, self.y1)
        canvas.line(lo, (hi[0], lo[1]), PALETTE["axis"], "axis")
        canvas.line(lo, (lo[0], hi[1]), PALETTE["axis"], "axis")
        for t in np.linspace(self.x0, self.x1, 5):
            p = self(t, self.y0)
            canvas.text((p[0], p[1] + 18), f"{t:.3g}")
        for t in np.linspace(self.y0, self.y1, 5):
            p = self(self.x0, t)
            canvas.text((p[0] - 8, p[1] + 4), f"{t:.3g}", anchor="end")
        canvas.text(((lo[0] + hi[0]) / 2, HEIGHT - 15), xlabel)
        canvas.text((18, (lo[1] + hi[1]) / 2), ylabel)


def prototypes_svg(X, U, A=None, title="Prototypes"):
    """Scatter of 2D data ``X`` (n x 2) with prototypes ``U`` (k x 2) marked.

    With reconstruction weights ``A`` (k x n) a segment joins every point to
    its reconstruction ``U' a_i``.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2 or U.ndim != 2 or U.shape[1] != 2:
        raise InvalidArgumentError(f"unsupported dimensionality; supported: {', '.join(SUPPORTED)}")
    canvas = _Canvas(title)
    frame = _Frame(np.r_[X[:, 0], U[:, 0]], np.r_[X[:, 1], U[:, 1]])
    frame.axes(canvas, "x1", "x2")
    if A is not None:
        R = np.asarray(A, dtype=float).T @ U
        for x, r in zip(X, R):
            canvas.line(frame(*x), frame(*r), PALETTE["segment"], "reconstruction", 0.8)
    for x in X:
        canvas.dot(frame(*x), PALETTE["data"])
    for u in U:
        canvas.plus(frame(*u), PALETTE["prototype"])
    return canvas.render()


def regression_svg(x, y, grid, fitted, proto_x=None, proto_y=None, title="Prototypal regression"):
    """1D data, the fitted curve over ``grid`` and (optionally) prototype pairs."""
    x, y = np.ravel(x).astype(float), np.ravel(y).astype(float)
    grid, fitted = np.ravel(grid).astype(float), np.ravel(fitted).astype(float)
    canvas = _Canvas(title)
    xs, ys = [x, grid], [y, fitted]
    if proto_x is not None:
        xs.append(np.ravel(proto_x))
        ys.append(np.ravel(proto_y))
    frame = _Frame(np.concatenate(xs), np.concatenate(ys))
    frame.axes(canvas, "x", "y")
    for a, b in zip(x, y):
        canvas.dot(frame(a, b), PALETTE["data"])
    canvas.polyline([frame(a, b) for a, b in zip(grid, fitted)], PALETTE["curve"])
    if proto_x is not None:
        for a, b in zip(np.ravel(proto_x), np.ravel(proto_y)):
            canvas.plus(frame(a, b), PALETTE["prototype"])
    return canvas.render()


_CORNERS = np.array([[MARGIN + 40, HEIGHT - MARGIN],
                     [WIDTH - MARGIN - 40, HEIGHT - MARGIN],
                     [WIDTH / 2, MARGIN + 20]])


def ternary_svg(P, labels=None, class_names=("class 0", "class 1", "class 2"), title="Class probabilities"):
    """Ternary plot of 3-class probability rows ``P`` (m x 3), colored by ``labels``."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3:
        raise InvalidArgumentError(f"unsupported dimensionality; supported: {', '.join(SUPPORTED)}")
    canvas = _Canvas(title)
    c = _CORNERS
    for i in range(3):
        canvas.line(c[i], c[(i + 1) % 3], PALETTE["axis"], "axis")
    offsets = [(-10, 20), (10, 20), (0, -10)]
    for i, name in enumerate(class_names):
        canvas.text((c[i][0] + offsets[i][0], c[i][1] + offsets[i][1]), str(name))
    pts = np.clip(P, 0.0, None)
    pts = pts / np.maximum(pts.sum(axis=1, keepdims=True), 1e-300)
    labels = np.zeros(len(P), dtype=int) if labels is None else np.asarray(labels, dtype=int)
    colors = PALETTE["classes"]
    for p, lab in zip(pts @ c, labels):
        canvas.dot(p, colors[lab % len(colors)])
    return canvas.render()


def rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def prototypes_csv(U, A=None):
    """One row per prototype: its coordinates and (with ``A``) total reconstruction weight."""
    U = np.asarray(U, dtype=float)
    header = ["prototype"] + [f"x{c + 1}" for c in range(U.shape[1])]
    rows = [[j] + list(u) for j, u in enumerate(U)]
    if A is not None:
        mass = np.asarray(A, dtype=float).sum(axis=1)
        header.append("weight")
        rows = [r + [float(m)] for r, m in zip(rows, mass)]
    return rows_to_csv(header, rows)


def curve_csv(grid, fitted):
    return rows_to_csv(["x", "fitted"], zip(np.ravel(grid), np.ravel(fitted)))


def probabilities_csv(P, labels=None):
    P = np.asarray(P, dtype=float)
    header = [f"p{c}" for c in range(P.shape[1])] + (["label"] if labels is not None else [])
    rows = [list(p) + ([int(l)] if labels is not None else []) for p, l in
            zip(P, labels if labels is not None else [None] * len(P))]
    return rows_to_csv(header, rows)
