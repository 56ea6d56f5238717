"""SVG rendering of EM runs: point cloud plus per-pass 1-sigma ellipses."""

from xml.sax.saxutils import quoteattr

import numpy as np

from .gauss import sigma_ellipse

WIDTH, HEIGHT, MARGIN = 800, 600, 0.05
COLOURS = ("black", "blue", "red", "magenta", "cyan")


def _transform(lo, hi):
    span = np.where(hi > lo, hi - lo, 1.0)
    x0, y0 = MARGIN * WIDTH, MARGIN * HEIGHT
    w, h = (1 - 2 * MARGIN) * WIDTH, (1 - 2 * MARGIN) * HEIGHT

    def to_px(p):
        p = np.atleast_2d(p)
        u = x0 + (p[:, 0] - lo[0]) / span[0] * w
        v = y0 + h - (p[:, 1] - lo[1]) / span[1] * h  # SVG y grows downward
        return np.stack([u, v], axis=1)

    return to_px


def em_svg(X, trace, n_points=64):
    """SVG text with one ellipse path per component for passes 1..P.

    Opacity rises with the pass index so the converged ellipses stand out.
    """
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    to_px = _transform(lo, hi)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        '<g id="points" fill="#999999" fill-opacity="0.5">',
    ]
    out += [f'<circle cx="{u:.2f}" cy="{v:.2f}" r="1"/>' for u, v in to_px(X)]
    out.append("</g>")
    passes = trace.passes[1:]
    last = max(len(passes), 1)
    out.append('<g id="ellipses" fill="none" stroke-width="1.5">')
    for step in passes:
        opacity = 0.15 + 0.85 * step.index / last
        for k, comp in enumerate(step.params.components):
            pts = to_px(sigma_ellipse(comp, n_points))
            d = "M " + " L ".join(f"{u:.2f} {v:.2f}" for u, v in pts) + " Z"
            colour = COLOURS[k % len(COLOURS)]
            out.append(
                f'<path class="ellipse" data-pass="{step.index}" data-component="{k + 1}" '
                f'stroke={quoteattr(colour)} stroke-opacity="{opacity:.3f}" d="{d}"/>'
            )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
