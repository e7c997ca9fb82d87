"""Six-level anchor pyramid generation.

Each pyramid level places two anchors per feature cell: side lengths of
2x and 2*sqrt(2)x the level stride, all with a single tall aspect ratio.
With strides 4..128 the anchors span geometric-mean sides from 8 px up to
2*sqrt(2)*128 ~ 362 px.
"""

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_STRIDES = (4, 8, 16, 32, 64, 128)
DEFAULT_SCALE_FACTORS = (2.0, 2.0 * math.sqrt(2.0))
DEFAULT_ASPECT_RATIO = 1.25  # height / width; faces run taller than wide

# Low levels feed the first-step negative filter; high levels get
# first-step box refinement. Index split is fixed for the 6-level pyramid.
FILTER_LEVELS = (0, 1, 2)
REFINE_LEVELS = (3, 4, 5)


@dataclass(frozen=True)
class PyramidLevel:
    """Geometry of one pyramid level for a given input resolution."""

    level_id: str
    stride: int
    scales: tuple  # anchor side lengths (geometric-mean), ascending
    aspect_ratio: float
    grid_w: int
    grid_h: int


@dataclass
class AnchorSet:
    """Flat anchor list with per-anchor level and cell bookkeeping.

    Anchors are ordered level-major, then row-major within a level, with
    the scale slot varying fastest. `cell_of` rows are (row, col, slot).
    """

    boxes: np.ndarray  # (N, 4) corner form
    level_of: np.ndarray  # (N,) level index 0..5
    cell_of: np.ndarray  # (N, 3) int
    levels: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.boxes)

    def filter_mask(self):
        """Anchors on the first-step classification (filter) levels."""
        return np.isin(self.level_of, FILTER_LEVELS)

    def refine_mask(self):
        """Anchors on the first-step regression (refinement) levels."""
        return np.isin(self.level_of, REFINE_LEVELS)


def build_pyramid(input_w, input_h, strides=DEFAULT_STRIDES,
                  scale_factors=DEFAULT_SCALE_FACTORS,
                  aspect_ratio=DEFAULT_ASPECT_RATIO):
    """Level specs for an input resolution; grid dims round up.

    Ceiling keeps every input pixel covered by a feature cell when the
    input is not a multiple of the stride.
    """
    if input_w <= 0 or input_h <= 0:
        raise ValueError("input dimensions must be positive")
    levels = []
    for i, stride in enumerate(strides):
        levels.append(PyramidLevel(
            level_id=f"P{i + 2}",
            stride=stride,
            scales=tuple(f * stride for f in scale_factors),
            aspect_ratio=aspect_ratio,
            grid_w=math.ceil(input_w / stride),
            grid_h=math.ceil(input_h / stride),
        ))
    return levels


def generate_anchors(levels):
    """Tile anchors over every level's grid.

    The anchor at cell (r, c) with side s is centered at
    ((c + 0.5) * stride, (r + 0.5) * stride) and sized area-preservingly
    for the aspect ratio: w = s / sqrt(ratio), h = s * sqrt(ratio).
    Anchors are not clipped; matching wants the raw geometry.
    """
    all_boxes, all_level, all_cell = [], [], []
    for li, lv in enumerate(levels):
        n_scales = len(lv.scales)
        root = math.sqrt(lv.aspect_ratio)
        w = np.asarray(lv.scales, dtype=np.float64) / root
        h = np.asarray(lv.scales, dtype=np.float64) * root

        cx = (np.arange(lv.grid_w, dtype=np.float64) + 0.5) * lv.stride
        cy = (np.arange(lv.grid_h, dtype=np.float64) + 0.5) * lv.stride
        # (grid_h, grid_w, n_scales) broadcast, slot fastest in the flat order
        cxg = cx[None, :, None]
        cyg = cy[:, None, None]
        boxes = np.stack(
            np.broadcast_arrays(
                cxg - 0.5 * w, cyg - 0.5 * h, cxg + 0.5 * w, cyg + 0.5 * h),
            axis=-1,
        ).reshape(-1, 4)

        rows, cols, slots = np.meshgrid(
            np.arange(lv.grid_h), np.arange(lv.grid_w), np.arange(n_scales),
            indexing="ij")
        cell = np.stack([rows, cols, slots], axis=-1).reshape(-1, 3)

        all_boxes.append(boxes)
        all_cell.append(cell)
        all_level.append(np.full(len(boxes), li, dtype=np.int32))

    return AnchorSet(
        boxes=np.concatenate(all_boxes, axis=0),
        level_of=np.concatenate(all_level, axis=0),
        cell_of=np.concatenate(all_cell, axis=0).astype(np.int32),
        levels=tuple(levels),
    )


def scale_of(boxes):
    """Geometric-mean side length sqrt(w * h); errors on non-positive sides."""
    boxes = np.asarray(boxes, dtype=np.float64)
    w = boxes[..., 2] - boxes[..., 0]
    h = boxes[..., 3] - boxes[..., 1]
    if np.any(w <= 0.0) or np.any(h <= 0.0):
        raise ValueError("scale_of requires positive box width and height")
    return np.sqrt(w * h)
