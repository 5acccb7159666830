"""Static SVG rendering of zero paths in one cell."""
import logging

import numpy as np
from lxml import etree

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
TICKS = 5


def _el(parent, tag, **attrs):
    node = etree.SubElement(parent, f"{{{SVG_NS}}}{tag}")
    for key, value in attrs.items():
        node.set(key.replace("_", "-"), str(value))
    return node


def _segments(points, side):
    """Split a cell-reduced path wherever it wraps across the cell boundary."""
    if points.size == 0:
        return []
    breaks = np.flatnonzero(np.abs(np.diff(points)) > side / 2) + 1
    return [seg for seg in np.split(points, breaks) if seg.size]


def build_svg(bundle, size=600, margin=50):
    """SVG element tree: dotted cell boundary, axis ticks, one polyline per path."""
    cell = bundle.cell
    side = cell.side
    x0, y0 = cell.origin.real, cell.origin.imag
    total = size + 2 * margin

    def px(z):
        return (margin + (z.real - x0) / side * size,
                margin + (1.0 - (z.imag - y0) / side) * size)

    root = etree.Element(f"{{{SVG_NS}}}svg", nsmap={None: SVG_NS})
    root.set("width", str(total))
    root.set("height", str(total))
    root.set("viewBox", f"0 0 {total} {total}")

    _el(root, "rect", x=margin, y=margin, width=size, height=size,
        fill="none", stroke="black", stroke_dasharray="2,4")

    axes = _el(root, "g", font_size=11, font_family="sans-serif")
    for k in range(TICKS + 1):
        offset = k * size / TICKS
        value = k * side / TICKS
        _el(axes, "line", x1=margin + offset, y1=margin + size, x2=margin + offset, y2=margin + size + 6, stroke="black")
        label = _el(axes, "text", x=margin + offset, y=margin + size + 20, text_anchor="middle")
        label.text = f"{x0 + value:.2f}"
        _el(axes, "line", x1=margin - 6, y1=margin + size - offset, x2=margin, y2=margin + size - offset, stroke="black")
        label = _el(axes, "text", x=margin - 9, y=margin + size - offset + 4, text_anchor="end")
        label.text = f"{y0 + value:.2f}"

    reduced = np.atleast_2d(bundle.reduced)
    for n in range(bundle.d):
        color = PALETTE[n % len(PALETTE)]
        group = _el(root, "g", id=f"path-{n}", stroke=color, fill="none", stroke_width=1.5)
        for seg in _segments(reduced[:, n], side):
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(px, seg))
            _el(group, "polyline", points=coords)
        sx, sy = px(reduced[0, n])
        _el(group, "circle", cx=f"{sx:.2f}", cy=f"{sy:.2f}", r=4, fill=color)
        ex, ey = px(reduced[-1, n])
        _el(group, "rect", x=f"{ex - 4:.2f}", y=f"{ey - 4:.2f}", width=8, height=8, fill="none")
    return root


def render_svg(bundle, path, size=600):
    root = build_svg(bundle, size=size)
    etree.ElementTree(root).write(str(path), pretty_print=True, xml_declaration=True, encoding="utf-8")
    logger.info("Wrote %s", path)
    return path
