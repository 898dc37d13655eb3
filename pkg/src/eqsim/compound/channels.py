"""Destination channel derivation from display and view declarations.

Applying a layout to a canvas creates one destination channel per
non-empty view x segment intersection.  Frusta follow the display
geometry: a canvas wall yields planar sub-frusta for the intersections,
a segment wall overrides the canvas wall.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import Canvas, Layout, Segment, View, Viewport, Wall


@dataclass
class DestinationChannel:
    view: View
    segment: Segment
    viewport: Viewport  # intersection, in canvas coordinates
    frustum: Optional[Wall] = None

    @property
    def name(self) -> str:
        return f"{self.view.name or 'view'}.{self.segment.name or self.segment.channel}"


def _relative_to(inner: Viewport, outer: Viewport) -> Viewport:
    """Express `inner` (subset of `outer`) in outer-relative coordinates."""
    return Viewport(
        (inner.x - outer.x) / outer.w,
        (inner.y - outer.y) / outer.h,
        inner.w / outer.w,
        inner.h / outer.h,
    )


def derive_channels(canvas: Canvas, layout: Layout) -> list[DestinationChannel]:
    channels = []
    for view in layout.views:
        for segment in canvas.segments:
            intersection = view.viewport.intersect(segment.viewport)
            if intersection is None:
                continue
            frustum = None
            if segment.wall is not None:
                # restriction of the segment's own wall to the covered part
                frustum = segment.wall.sub_frustum(_relative_to(intersection, segment.viewport))
            elif canvas.wall is not None:
                frustum = canvas.wall.sub_frustum(intersection)
            channels.append(DestinationChannel(view, segment, intersection, frustum))
    return channels
