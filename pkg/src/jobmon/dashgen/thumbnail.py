"""
Sparkline thumbnails for the admin overview.

A thumbnail is a format-agnostic set of traces, one per job node, exported to
SVG or PNG.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import svgwrite
from PIL import Image, ImageDraw

PALETTE: List[Tuple[int, int, int]] = [
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
]


@dataclass
class Trace:
    points: List[Tuple[float, float]]
    color: Tuple[int, int, int]
    width: float = 1.0


@dataclass
class Sparkline:
    width: int = 160
    height: int = 48
    background_color: Tuple[int, int, int] = (255, 255, 255)
    status_color: Tuple[int, int, int] = (128, 128, 128)
    traces: List[Trace] = field(default_factory=list)

    @classmethod
    def from_series(
        cls,
        series: Dict[str, Tuple[np.ndarray, np.ndarray]],
        width: int = 160,
        height: int = 48,
        status_color: Tuple[int, int, int] = (128, 128, 128),
        margin: float = 3.0,
    ) -> "Sparkline":
        """
        Scale every node's (timestamps, values) into one shared box so nodes
        compare visually.
        """
        sparkline = cls(width=width, height=height, status_color=status_color)
        filled = {h: tv for h, tv in series.items() if len(tv[0])}
        if not filled:
            return sparkline

        t_all = np.concatenate([tv[0] for tv in filled.values()])
        v_all = np.concatenate([tv[1] for tv in filled.values()])
        t_min, t_span = t_all.min(), max(int(t_all.max() - t_all.min()), 1)
        v_min, v_span = v_all.min(), float(v_all.max() - v_all.min()) or 1.0
        inner_w, inner_h = width - 2 * margin, height - 2 * margin - 2

        for i, host in enumerate(sorted(filled)):
            timestamps, values = filled[host]
            xs = margin + (timestamps - t_min) / t_span * inner_w
            ys = margin + inner_h - (values - v_min) / v_span * inner_h
            points = [(round(float(x), 2), round(float(y), 2)) for x, y in zip(xs, ys)]
            sparkline.traces.append(Trace(points, PALETTE[i % len(PALETTE)]))
        return sparkline

    def to_svg(self, filename: Union[str, Path]) -> None:
        dwg = svgwrite.Drawing(str(filename), size=(self.width, self.height))
        dwg.add(dwg.rect(insert=(0, 0), size=(self.width, self.height),
                         fill=_rgb(self.background_color)))
        # status bar along the bottom edge
        dwg.add(dwg.rect(insert=(0, self.height - 2), size=(self.width, 2),
                         fill=_rgb(self.status_color)))
        for trace in self.traces:
            if len(trace.points) < 2:
                continue
            dwg.add(dwg.polyline(
                points=trace.points,
                fill="none",
                stroke=_rgb(trace.color),
                stroke_width=trace.width,
                stroke_linecap="round",
                stroke_linejoin="round",
            ))
        dwg.save()

    def to_png(self, filename: Union[str, Path]) -> None:
        img = Image.new("RGB", (self.width, self.height), self.background_color)
        draw = ImageDraw.Draw(img)
        draw.rectangle([(0, self.height - 2), (self.width, self.height)], fill=self.status_color)
        for trace in self.traces:
            if len(trace.points) < 2:
                continue
            draw.line(trace.points, fill=trace.color, width=max(int(trace.width), 1))
        img.save(str(filename), "PNG")


def _rgb(color: Sequence[int]) -> str:
    return f"rgb({color[0]},{color[1]},{color[2]})"


def hex_to_rgb(value: str) -> Tuple[int, int, int]:
    value = value.lstrip("#")
    return int(value[0:2], 16), int(value[2:4], 16), int(value[4:6], 16)
