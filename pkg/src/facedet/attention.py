"""Binary attention supervision masks at feature-map resolution.

A face contributes to a level's mask only if the second-step assignment
gave it at least one positive anchor on that level; the mask then marks
every feature cell whose center lies inside the face box.
"""

import numpy as np

from .anchors import AnchorSet
from .assign import POSITIVE, AssignmentResult


def gt_level_assignments(anchors: AnchorSet, second_assign: AssignmentResult,
                         n_gts):
    """Which faces belong to which level: (n_levels, n_gts) bool.

    Entry (l, j) is True iff face j has a positive second-step anchor on
    level l.
    """
    out = np.zeros((len(anchors.levels), n_gts), dtype=bool)
    pos = second_assign.labels == POSITIVE
    levels = anchors.level_of[pos]
    gts = second_assign.matched_gt[pos]
    out[levels, gts] = True
    return out


def rasterize_masks(gt_boxes, level_gts, levels):
    """Fill per-level binary grids from the faces assigned to each level.

    Args:
        gt_boxes: (M, 4) face boxes in input-image coordinates.
        level_gts: (n_levels, M) bool from :func:`gt_level_assignments`.
        levels: pyramid level specs.

    Cell (r, c) on a level with stride S is set iff its center
    ((c + 0.5) * S, (r + 0.5) * S) lies inside (boundary included) any
    face assigned to that level. Returns one uint8 grid per level.
    """
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    level_gts = np.asarray(level_gts, dtype=bool)
    if level_gts.shape != (len(levels), len(gt_boxes)):
        raise ValueError(
            f"level assignment shape {level_gts.shape}, expected "
            f"{(len(levels), len(gt_boxes))}")
    masks = []
    for li, lv in enumerate(levels):
        grid = np.zeros((lv.grid_h, lv.grid_w), dtype=np.uint8)
        boxes = gt_boxes[level_gts[li]]
        if len(boxes):
            cx = (np.arange(lv.grid_w) + 0.5) * lv.stride
            cy = (np.arange(lv.grid_h) + 0.5) * lv.stride
            in_x = (cx[None, :] >= boxes[:, 0, None]) & (cx[None, :] <= boxes[:, 2, None])
            in_y = (cy[None, :] >= boxes[:, 1, None]) & (cy[None, :] <= boxes[:, 3, None])
            grid = np.any(in_y[:, :, None] & in_x[:, None, :], axis=0).astype(np.uint8)
        masks.append(grid)
    return masks


def masks_for_image(anchors: AnchorSet, second_assign: AssignmentResult,
                    gt_boxes):
    """Convenience wrapper: level assignment plus rasterization."""
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    level_gts = gt_level_assignments(anchors, second_assign, len(gt_boxes))
    return rasterize_masks(gt_boxes, level_gts, anchors.levels)
