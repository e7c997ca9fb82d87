"""Axis-aligned box arithmetic in continuous pixel coordinates.

Boxes are `(x_min, y_min, x_max, y_max)` corner-form arrays; widths and
heights are plain differences (no +1 pixel convention). All functions
broadcast over leading dimensions and treat the last axis as the box.
"""

import numpy as np

__all__ = [
    "area",
    "clip_boxes",
    "decode",
    "encode",
    "iou",
    "iou_matrix",
]


def _as_boxes(b):
    b = np.asarray(b, dtype=np.float64)
    if b.shape[-1] != 4:
        raise ValueError(f"expected boxes with last axis 4, got shape {b.shape}")
    return b


def area(boxes):
    """Box area; zero-width or zero-height boxes have area 0."""
    boxes = _as_boxes(boxes)
    return (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])


def iou(a, b):
    """Intersection-over-union of two boxes.

    Degenerate (zero-area) inputs yield 0 rather than NaN; real-world
    annotation files contain such boxes and they must not poison a batch.
    """
    a = _as_boxes(a)
    b = _as_boxes(b)
    ix = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    iy = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
    union = area(a) + area(b) - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0.0, inter / union, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def iou_matrix(anchors, gts):
    """Pairwise IoU: entry (i, j) is iou(anchors[i], gts[j]).

    Either argument may be empty; the result then has a zero dimension.
    """
    anchors = _as_boxes(np.asarray(anchors, dtype=np.float64).reshape(-1, 4))
    gts = _as_boxes(np.asarray(gts, dtype=np.float64).reshape(-1, 4))
    return iou(anchors[:, None, :], gts[None, :, :]).reshape(len(anchors), len(gts))


def _centers_sizes(boxes):
    w = boxes[..., 2] - boxes[..., 0]
    h = boxes[..., 3] - boxes[..., 1]
    cx = boxes[..., 0] + 0.5 * w
    cy = boxes[..., 1] + 0.5 * h
    return cx, cy, w, h


def encode(anchors, targets):
    """Offsets from anchor to target: normalized center shift, log size ratio.

    dx = (cx_t - cx_a) / w_a, dy = (cy_t - cy_a) / h_a,
    dw = log(w_t / w_a),      dh = log(h_t / h_a).

    Unit variances throughout (no extra scaling of the four components).
    Raises ValueError for non-positive anchor or target sizes: a degenerate
    target means a broken ground-truth box and must surface immediately.
    """
    anchors = _as_boxes(anchors)
    targets = _as_boxes(targets)
    acx, acy, aw, ah = _centers_sizes(anchors)
    tcx, tcy, tw, th = _centers_sizes(targets)
    if np.any(aw <= 0.0) or np.any(ah <= 0.0):
        raise ValueError("encode requires anchors with positive width and height")
    if np.any(tw <= 0.0) or np.any(th <= 0.0):
        raise ValueError("encode requires targets with positive width and height")
    dx = (tcx - acx) / aw
    dy = (tcy - acy) / ah
    dw = np.log(tw / aw)
    dh = np.log(th / ah)
    return np.stack([dx, dy, dw, dh], axis=-1)


def decode(anchors, deltas):
    """Exact inverse of :func:`encode`; output may extend past the image."""
    anchors = _as_boxes(anchors)
    deltas = np.asarray(deltas, dtype=np.float64)
    acx, acy, aw, ah = _centers_sizes(anchors)
    cx = deltas[..., 0] * aw + acx
    cy = deltas[..., 1] * ah + acy
    w = np.exp(deltas[..., 2]) * aw
    h = np.exp(deltas[..., 3]) * ah
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=-1)


def clip_boxes(boxes, width, height):
    """Clip boxes to the image rectangle [0, width] x [0, height]."""
    boxes = _as_boxes(boxes).copy()
    boxes[..., 0::2] = np.clip(boxes[..., 0::2], 0.0, float(width))
    boxes[..., 1::2] = np.clip(boxes[..., 1::2], 0.0, float(height))
    return boxes
