"""Scale-retargeting crop augmentation.

One face is picked per draw and the whole image is rescaled so that the
face's size lands near a randomly chosen rung of the anchor scale ladder,
biased toward smaller rungs; a fixed-size crop containing the face is then
taken. Only geometry is handled here: the plan carries the resize scale
and crop window, and annotation boxes are transformed accordingly. Pixel
resampling belongs to whatever image backend executes the plan.
"""

from dataclasses import dataclass

import numpy as np

# Primary anchor side per pyramid level (2x stride for strides 4..128);
# index 0..5 is what the target-rung draw ranges over.
SCALE_LADDER = (8.0, 16.0, 32.0, 64.0, 128.0, 256.0)

CROP_SIZE = 640


@dataclass(frozen=True)
class SamplePlan:
    face_index: int
    face_scale: float
    anchor_index: int  # ladder rung nearest the face's original scale
    target_index: int  # ladder rung the face is retargeted toward
    resize_scale: float
    crop_origin: tuple  # (x, y) in resized-image pixels; may be negative
    crop_size: int


@dataclass(frozen=True)
class CropResult:
    boxes: np.ndarray  # (K, 4) surviving boxes in crop coordinates
    kept_indices: np.ndarray  # (K,) indices into the input boxes
    crop_box: tuple  # (x0, y0, x1, y1) in resized-image coordinates
    resized_size: tuple  # (w, h) of the resized image, continuous


def face_scale(box):
    """Geometric-mean side sqrt(w * h) of a face box."""
    box = np.asarray(box, dtype=np.float64)
    w = box[2] - box[0]
    h = box[3] - box[1]
    if w <= 0.0 or h <= 0.0:
        raise ValueError(f"face box has non-positive size: {box.tolist()}")
    return float(np.sqrt(w * h))


def nearest_scale_index(scale, ladder=SCALE_LADDER):
    """Index of the ladder rung closest to `scale`; ties take the smaller."""
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    return int(np.argmin(np.abs(np.asarray(ladder) - scale)))


def draw_plan(face_boxes, image_size, rng, crop_size=CROP_SIZE,
              ladder=SCALE_LADDER):
    """Draw one augmentation plan.

    Args:
        face_boxes: (M, 4) faces in the source image, M >= 1.
        image_size: (width, height) of the source image.
        rng: numpy Generator; the only source of randomness, so a fixed
            seed replays the identical plan.
        crop_size: output crop side length.
        ladder: anchor scale ladder the retargeting draws from.

    The face is chosen uniformly. With `i` the nearest rung to its scale,
    the target rung is uniform over {0, ..., min(last, i + 1)} and the
    resize scale is uniform over [rung/2, rung*2] divided by the face
    scale. The crop origin is uniform over all positions that keep the
    resized face fully inside the crop and the crop inside the resized
    image (when the image is large enough; smaller images make the crop
    overhang, callers pad). If the resized face itself exceeds the crop
    in some axis, that axis falls back to centering the face.
    """
    face_boxes = np.asarray(face_boxes, dtype=np.float64).reshape(-1, 4)
    if len(face_boxes) == 0:
        raise ValueError("draw_plan needs at least one face")
    w, h = float(image_size[0]), float(image_size[1])

    face_index = int(rng.integers(len(face_boxes)))
    s_face = face_scale(face_boxes[face_index])
    i_anchor = nearest_scale_index(s_face, ladder)
    i_target = int(rng.integers(min(len(ladder) - 1, i_anchor + 1) + 1))
    rung = ladder[i_target]
    resize_scale = rng.uniform(0.5 * rung, 2.0 * rung) / s_face

    fb = face_boxes[face_index] * resize_scale
    ox = _draw_origin(fb[0], fb[2], w * resize_scale, crop_size, rng)
    oy = _draw_origin(fb[1], fb[3], h * resize_scale, crop_size, rng)

    return SamplePlan(
        face_index=face_index,
        face_scale=s_face,
        anchor_index=i_anchor,
        target_index=i_target,
        resize_scale=float(resize_scale),
        crop_origin=(ox, oy),
        crop_size=int(crop_size),
    )


def _draw_origin(lo_edge, hi_edge, image_extent, crop, rng):
    lo = max(hi_edge - crop, min(0.0, image_extent - crop))
    hi = min(lo_edge, max(0.0, image_extent - crop))
    if lo > hi:
        # Face wider than the crop (or outside the image): center it.
        return float(0.5 * (lo_edge + hi_edge) - 0.5 * crop)
    return float(rng.uniform(lo, hi))


def apply_plan(image_size, boxes, plan):
    """Transform annotation boxes through a plan's resize and crop.

    Boxes are scaled, shifted into crop coordinates, kept iff their center
    lies inside the crop window (half-open [0, crop) on each axis), and
    clipped to the crop. The plan's selected face is always kept.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    ox, oy = plan.crop_origin
    shifted = boxes * plan.resize_scale - np.array([ox, oy, ox, oy])

    cx = 0.5 * (shifted[:, 0] + shifted[:, 2])
    cy = 0.5 * (shifted[:, 1] + shifted[:, 3])
    keep = ((cx >= 0.0) & (cx < plan.crop_size)
            & (cy >= 0.0) & (cy < plan.crop_size))
    kept = np.where(keep)[0]

    out = np.clip(shifted[kept], 0.0, float(plan.crop_size))
    w, hgt = float(image_size[0]), float(image_size[1])
    return CropResult(
        boxes=out,
        kept_indices=kept,
        crop_box=(ox, oy, ox + plan.crop_size, oy + plan.crop_size),
        resized_size=(w * plan.resize_scale, hgt * plan.resize_scale),
    )
