"""Synthetic-image compositing for every decomposition mode.

Images are integer id rasters with a float depth plane, as produced by
the workload simulator.  Spatial splits paste, database splits merge by
per-pixel depth, pixel splits interleave by ownership and sample splits
average.  Inputs contribute only their region-of-interest rectangle, and
the transfer accounting reflects exactly those bytes (zero for frames
flagged as node-local transfers).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import FULL_RANGE, PixelRect, RenderTask

BACKGROUND = 0
BYTES_PER_PIXEL = 12  # 4 bytes id + 8 bytes depth


class CompositeError(ValueError):
    pass


@dataclass
class Image:
    """A rendered rectangle: object ids and depth, positioned in the frame."""

    rect: PixelRect
    values: np.ndarray  # int32 (h, w)
    depth: np.ndarray   # float64 (h, w)
    roi: Optional[PixelRect] = None  # absolute coordinates, subset of rect

    @classmethod
    def blank(cls, rect: PixelRect) -> "Image":
        return cls(
            rect,
            np.full((rect.h, rect.w), BACKGROUND, dtype=np.int32),
            np.full((rect.h, rect.w), np.inf),
        )

    def compute_roi(self) -> Optional[PixelRect]:
        """Bounding box of non-background pixels, in absolute coordinates."""
        ys, xs = np.nonzero(self.values != BACKGROUND)
        if len(xs) == 0:
            self.roi = None
            return None
        self.roi = PixelRect(
            self.rect.x + int(xs.min()),
            self.rect.y + int(ys.min()),
            int(xs.max() - xs.min()) + 1,
            int(ys.max() - ys.min()) + 1,
        )
        return self.roi


@dataclass
class CompositeStats:
    inputs: int = 0
    bytes_transferred: int = 0
    roi_pixels: int = 0


def _slices(outer: PixelRect, inner: PixelRect) -> tuple[slice, slice]:
    return (
        slice(inner.y - outer.y, inner.y - outer.y + inner.h),
        slice(inner.x - outer.x, inner.x - outer.x + inner.w),
    )


def composite(
    inputs: list[tuple[Image, RenderTask]],
    resolution: tuple[int, int],
    stats: Optional[CompositeStats] = None,
) -> Image:
    """Assemble per-task renderings into the destination frame."""
    width, height = resolution
    frame_rect = PixelRect(0, 0, width, height)
    out = Image.blank(frame_rect)
    covered = np.zeros((height, width), dtype=bool)

    subpixel_sum: Optional[np.ndarray] = None
    subpixel_count: Optional[np.ndarray] = None
    subpixel_depth: Optional[np.ndarray] = None

    for image, task in inputs:
        if stats is not None:
            stats.inputs += 1
        roi = image.roi if image.roi is not None else image.compute_roi()
        if roi is None:
            continue  # nothing rendered; nothing transferred
        if stats is not None:
            stats.roi_pixels += roi.area
            if not task.local_transfer:
                stats.bytes_transferred += roi.area * BYTES_PER_PIXEL
        src = _slices(image.rect, roi)
        dst = _slices(frame_rect, roi)
        values = image.values[src]
        depth = image.depth[src]

        if not task.subpixel.identity:
            if subpixel_sum is None:
                subpixel_sum = np.zeros((height, width), dtype=np.int64)
                subpixel_count = np.zeros((height, width), dtype=np.int64)
                subpixel_depth = np.full((height, width), np.inf)
            subpixel_sum[dst] += values
            subpixel_count[dst] += 1
            subpixel_depth[dst] = np.minimum(subpixel_depth[dst], depth)
        elif not task.pixel.identity:
            ys, xs = np.mgrid[roi.y : roi.y + roi.h, roi.x : roi.x + roi.w]
            owned = (xs % task.pixel.x_count == task.pixel.x_offset) & (
                ys % task.pixel.y_count == task.pixel.y_offset
            )
            region_vals = out.values[dst]
            region_depth = out.depth[dst]
            region_vals[owned] = values[owned]
            region_depth[owned] = depth[owned]
        elif task.range_ != FULL_RANGE:
            # database range: merge by depth within the rectangle
            region_vals = out.values[dst]
            region_depth = out.depth[dst]
            closer = depth < region_depth
            region_vals[closer] = values[closer]
            region_depth[closer] = depth[closer]
        else:
            # spatial split: pasted rectangles must not overlap
            task_dst = _slices(frame_rect, task.viewport)
            if covered[task_dst].any():
                raise CompositeError(
                    f"overlapping spatial inputs at {task.viewport} (invalid decomposition)"
                )
            covered[task_dst] = True
            out.values[dst] = values
            out.depth[dst] = depth

    if subpixel_sum is not None:
        sampled = subpixel_count > 0
        # non-integral averages floor; id rasters from equal samples stay exact
        averaged = subpixel_sum[sampled] // subpixel_count[sampled]
        out.values[sampled] = averaged.astype(np.int32)
        out.depth[sampled] = subpixel_depth[sampled]

    return out
