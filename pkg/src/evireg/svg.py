"""Minimal deterministic SVG charts: lines, scatter points and shaded bands.

Output depends only on the inputs, so artifacts can be compared byte for byte.
"""

from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f")


def _fmt(v):
    return "%.2f" % v


def _escape(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


class Chart:
    """Accumulates primitives in data coordinates and renders once.

    Values outside ``ylim`` are clipped to the frame.
    """

    def __init__(self, title="", xlabel="", ylabel="", width=640, height=420, xlim=None, ylim=None):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.width, self.height = width, height
        self.xlim, self.ylim = xlim, ylim
        self._items = []
        self._legend = []

    def _next_color(self, color):
        return color or PALETTE[len(self._items) % len(PALETTE)]

    def line(self, x, y, color=None, label=None, width=1.5, dashed=False):
        color = self._next_color(color)
        self._items.append(("line", np.asarray(x, float), np.asarray(y, float), color, width, dashed))
        self._add_legend(label, color)
        return self

    def scatter(self, x, y, color=None, label=None, radius=2.0):
        color = self._next_color(color)
        self._items.append(("scatter", np.asarray(x, float), np.asarray(y, float), color, radius))
        self._add_legend(label, color)
        return self

    def band(self, x, lo, hi, color=None, label=None, opacity=0.25):
        color = self._next_color(color)
        self._items.append(("band", np.asarray(x, float), np.asarray(lo, float), np.asarray(hi, float), color, opacity))
        self._add_legend(label, color)
        return self

    def _add_legend(self, label, color):
        if label:
            self._legend.append((label, color))

    def _limits(self):
        xs, ys = [], []
        for item in self._items:
            xs.append(item[1])
            ys.extend(item[2:4] if item[0] == "band" else item[2:3])
        x_all = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        y_all = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        y_all = y_all[np.isfinite(y_all)]
        xlim = self.xlim or (float(np.min(x_all)), float(np.max(x_all)))
        if self.ylim:
            ylim = self.ylim
        elif y_all.size:
            ylim = (float(np.min(y_all)), float(np.max(y_all)))
        else:
            ylim = (0.0, 1.0)
        if xlim[1] == xlim[0]:
            xlim = (xlim[0] - 0.5, xlim[1] + 0.5)
        if ylim[1] == ylim[0]:
            ylim = (ylim[0] - 0.5, ylim[1] + 0.5)
        return xlim, ylim

    def render(self):
        left, right, top, bottom = 60, 20, 30, 45
        pw, ph = self.width - left - right, self.height - top - bottom
        (x0, x1), (y0, y1) = self._limits()

        def px(x):
            return left + (np.asarray(x) - x0) / (x1 - x0) * pw

        def py(y):
            y = np.clip(np.asarray(y, float), y0, y1)
            return top + (y1 - y) / (y1 - y0) * ph

        out = [
            '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" viewBox="0 0 %d %d">'
            % (self.width, self.height, self.width, self.height),
            '<rect width="100%" height="100%" fill="white"/>',
            '<rect x="%d" y="%d" width="%d" height="%d" fill="none" stroke="black"/>' % (left, top, pw, ph),
        ]
        for t in np.linspace(0, 1, 5):
            xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
            out.append('<text x="%s" y="%d" font-size="10" text-anchor="middle">%.3g</text>'
                       % (_fmt(px(xv)), top + ph + 14, xv))
            out.append('<text x="%d" y="%s" font-size="10" text-anchor="end">%.3g</text>'
                       % (left - 4, _fmt(py(yv) + 3), yv))
        for item in self._items:
            kind = item[0]
            if kind == "band":
                _, x, lo, hi, color, opacity = item
                keep = np.isfinite(lo) & np.isfinite(hi)
                pts = list(zip(px(x[keep]), py(hi[keep]))) + list(zip(px(x[keep][::-1]), py(lo[keep][::-1])))
                if pts:
                    out.append('<polygon points="%s" fill="%s" fill-opacity="%.2f" stroke="none"/>'
                               % (" ".join("%s,%s" % (_fmt(a), _fmt(b)) for a, b in pts),
                                  color, opacity))
            elif kind == "line":
                _, x, y, color, width, dashed = item
                keep = np.isfinite(y)
                pts = " ".join("%s,%s" % (_fmt(a), _fmt(b)) for a, b in zip(px(x[keep]), py(y[keep])))
                dash = ' stroke-dasharray="5,3"' if dashed else ""
                out.append('<polyline points="%s" fill="none" stroke="%s" stroke-width="%.1f"%s/>'
                           % (pts, color, width, dash))
            else:
                _, x, y, color, radius = item
                keep = np.isfinite(y)
                for a, b in zip(px(x[keep]), py(y[keep])):
                    out.append('<circle cx="%s" cy="%s" r="%.1f" fill="%s"/>'
                               % (_fmt(a), _fmt(b), radius, color))
        for j, (label, color) in enumerate(self._legend):
            yy = top + 14 + 14 * j
            out.append('<rect x="%d" y="%d" width="10" height="10" fill="%s"/>'
                       % (left + 8, yy - 9, color))
            out.append('<text x="%d" y="%d" font-size="11">%s</text>' % (left + 22, yy, _escape(label)))
        out.append('<text x="%d" y="18" font-size="13" text-anchor="middle">%s</text>'
                   % (self.width // 2, _escape(self.title)))
        out.append('<text x="%d" y="%d" font-size="11" text-anchor="middle">%s</text>'
                   % (left + pw // 2, self.height - 8, _escape(self.xlabel)))
        out.append('<text x="14" y="%d" font-size="11" text-anchor="middle" transform="rotate(-90 14 %d)">%s</text>'
                   % (top + ph // 2, top + ph // 2, _escape(self.ylabel)))
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        path = Path(path)
        path.write_text(self.render())
        return path
