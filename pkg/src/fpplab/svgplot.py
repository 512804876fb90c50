"""Minimal SVG line/scatter charts.  No plotting library at runtime."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=50)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"]


@dataclass
class Series:
    label: str
    xs: list[float]
    ys: list[float]
    kind: str = "line"  # line | points
    css_class: str = "series"
    attrs: dict[str, str] = field(default_factory=dict)


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    logx: bool = False
    logy: bool = False
    series: list[Series] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, s: Series) -> None:
        self.series.append(s)

    def _tx(self, v: float, log: bool) -> float:
        return math.log10(v) if log else v

    def render(self) -> str:
        pts = [(self._tx(x, self.logx), self._tx(y, self.logy))
               for s in self.series for x, y in zip(s.xs, s.ys)
               if math.isfinite(x) and math.isfinite(y)
               and (x > 0 or not self.logx) and (y > 0 or not self.logy)]
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
               f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
               f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
               f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">'
               f'{escape(self.title)}</text>']
        x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
        if pts:
            lo_x, hi_x = min(p[0] for p in pts), max(p[0] for p in pts)
            lo_y, hi_y = min(p[1] for p in pts), max(p[1] for p in pts)
            if hi_x == lo_x:
                lo_x, hi_x = lo_x - 1, hi_x + 1
            if hi_y == lo_y:
                lo_y, hi_y = lo_y - 1, hi_y + 1
            pad = 0.05 * (hi_y - lo_y)
            lo_y, hi_y = lo_y - pad, hi_y + pad

            def px(x: float) -> float:
                return x0 + (self._tx(x, self.logx) - lo_x) / (hi_x - lo_x) * (x1 - x0)

            def py(y: float) -> float:
                return y0 - (self._tx(y, self.logy) - lo_y) / (hi_y - lo_y) * (y0 - y1)

            out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
                       f'fill="none" stroke="#999"/>')
            for i in range(5):
                fx = lo_x + (hi_x - lo_x) * i / 4
                fy = lo_y + (hi_y - lo_y) * i / 4
                vx = 10**fx if self.logx else fx
                vy = 10**fy if self.logy else fy
                gx = x0 + (x1 - x0) * i / 4
                gy = y0 - (y0 - y1) * i / 4
                out.append(f'<text x="{gx:.1f}" y="{y0 + 16}" text-anchor="middle">{vx:.3g}</text>')
                out.append(f'<text x="{x0 - 6}" y="{gy + 4:.1f}" text-anchor="end">{vy:.3g}</text>')
            for k, s in enumerate(self.series):
                color = COLORS[k % len(COLORS)]
                good = [(x, y) for x, y in zip(s.xs, s.ys)
                        if math.isfinite(x) and math.isfinite(y)
                        and (x > 0 or not self.logx) and (y > 0 or not self.logy)]
                extra = "".join(f' {escape(a)}="{escape(v)}"' for a, v in s.attrs.items())
                if s.kind == "line":
                    coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in good)
                    out.append(f'<polyline class="{s.css_class}"{extra} points="{coords}" '
                               f'fill="none" stroke="{color}" stroke-width="1.5"/>')
                else:
                    for x, y in good:
                        out.append(f'<circle class="{s.css_class}"{extra} cx="{px(x):.2f}" '
                                   f'cy="{py(y):.2f}" r="3.5" fill="{color}"/>')
                out.append(f'<text x="{x1 - 8}" y="{y1 + 16 + 15 * k}" text-anchor="end" '
                           f'fill="{color}">{escape(s.label)}</text>')
        for k, note in enumerate(self.notes):
            out.append(f'<text class="note" x="{x0 + 8}" y="{y1 + 18 + 16 * k}">'
                       f'{escape(note)}</text>')
        out.append(f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 12}" text-anchor="middle">'
                   f'{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{(y0 + y1) / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {(y0 + y1) / 2})">{escape(self.ylabel)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
