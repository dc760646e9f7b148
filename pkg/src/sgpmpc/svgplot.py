"""Minimal native SVG emission for experiment figures (no plotting deps)."""

import numpy as np


class SvgCanvas:
    """Fixed-size canvas mapping world coordinates to screen (y flipped)."""

    def __init__(self, xlim, ylim, width=900, height=520, margin=40):
        self.xlim = xlim
        self.ylim = ylim
        self.width = width
        self.height = height
        self.margin = margin
        self._parts = []
        span_x = max(xlim[1] - xlim[0], 1e-12)
        span_y = max(ylim[1] - ylim[0], 1e-12)
        self._sx = (width - 2 * margin) / span_x
        self._sy = (height - 2 * margin) / span_y

    def _pt(self, p):
        x = self.margin + (p[0] - self.xlim[0]) * self._sx
        y = self.height - self.margin - (p[1] - self.ylim[0]) * self._sy
        return f"{x:.2f},{y:.2f}"

    def polyline(self, points, stroke="black", width=1.5, opacity=1.0, dash=None):
        pts = " ".join(self._pt(p) for p in np.atleast_2d(points))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self._parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}" opacity="{opacity}"{dash_attr}/>'
        )

    def polygon(self, points, fill="none", stroke="black", width=1.0, opacity=1.0):
        pts = " ".join(self._pt(p) for p in np.atleast_2d(points))
        self._parts.append(
            f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" '
            f'stroke-width="{width}" fill-opacity="{opacity}"/>'
        )

    def circle(self, center, radius_px=2.0, fill="black", opacity=1.0):
        x, y = self._pt(center).split(",")
        self._parts.append(
            f'<circle cx="{x}" cy="{y}" r="{radius_px}" fill="{fill}" '
            f'opacity="{opacity}"/>'
        )

    def text(self, pos, label, size=12, fill="black"):
        x, y = self._pt(pos).split(",")
        self._parts.append(
            f'<text x="{x}" y="{y}" font-size="{size}" fill="{fill}">{label}</text>'
        )

    def write(self, path):
        body = "\n".join(self._parts)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
            )


def bounds_of(arrays, pad=0.08):
    """World bounds covering all (n, 2) arrays with fractional padding."""
    pts = np.vstack([np.atleast_2d(a) for a in arrays if len(a)])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    lo = lo - pad * span
    hi = hi + pad * span
    return (lo[0], hi[0]), (lo[1], hi[1])
