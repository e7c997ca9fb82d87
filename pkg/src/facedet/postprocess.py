"""Inference pipeline: filter, cascade refine, decode, suppress.

Detections travel as (K, 5) float arrays [x1, y1, x2, y2, score], sorted
by descending score with ties broken by lower anchor index, so identical
maps always produce byte-identical results.
"""

import numpy as np
from scipy.special import expit, logit

from .anchors import AnchorSet
from .assign import second_step_boxes
from .boxes import clip_boxes, decode, iou_matrix
from .maps import ScoreMaps

DEFAULT_FILTER_THRESHOLD = 0.01
DEFAULT_MIN_SCORE = 0.01
DEFAULT_NMS_IOU = 0.5
DEFAULT_MAX_KEEP = 750


def first_step_filter(anchors: AnchorSet, first_cls,
                      threshold=DEFAULT_FILTER_THRESHOLD):
    """Survivor mask: drop filter-level anchors the first step calls background.

    An anchor on a filter level survives iff sigmoid(logit) > threshold;
    anchors on other levels always pass. Compared in logit space so that
    threshold 0 keeps everything even when the probability underflows.
    """
    first_cls = np.asarray(first_cls, dtype=np.float64)
    mask = anchors.filter_mask()
    if first_cls.shape != (int(mask.sum()),):
        raise ValueError(
            f"first-step logits shape {first_cls.shape} does not match the "
            f"{int(mask.sum())} filter-level anchors")
    survivors = np.ones(len(anchors), dtype=bool)
    survivors[mask] = first_cls > logit(threshold)
    return survivors


def refine_boxes(anchors: AnchorSet, first_reg):
    """Apply first-step deltas on the refinement levels.

    Returns a full (N, 4) box array: decoded boxes on the refinement
    levels, untouched anchors elsewhere.
    """
    first_reg = np.asarray(first_reg, dtype=np.float64)
    mask = anchors.refine_mask()
    if first_reg.shape != (int(mask.sum()), 4):
        raise ValueError(
            f"first-step deltas shape {first_reg.shape} does not match the "
            f"{int(mask.sum())} refinement-level anchors")
    refined = decode(anchors.boxes[mask], first_reg)
    return second_step_boxes(anchors, refined)


def decode_detections(maps: ScoreMaps, anchors: AnchorSet, image_size,
                      filter_threshold=DEFAULT_FILTER_THRESHOLD,
                      min_score=DEFAULT_MIN_SCORE):
    """Turn prediction maps into scored boxes (pre-NMS).

    Scores are the sigmoid of the max-in-out face logit of the second
    step. Second-step deltas decode against the first-step-refined boxes
    on the refinement levels and the raw anchors elsewhere. Anchors
    removed by the first-step filter or scoring below `min_score` are
    dropped; boxes are clipped to the image.
    """
    maps.validate(anchors)
    base = refine_boxes(anchors, maps.first_reg)
    face_logit = (np.max(maps.second_pos, axis=1)
                  - np.max(maps.second_neg, axis=1))
    keep = first_step_filter(anchors, maps.first_cls, filter_threshold)
    keep &= face_logit >= logit(min_score)
    if not np.any(keep):
        return np.zeros((0, 5), dtype=np.float64)

    scores = expit(face_logit[keep])
    boxes = clip_boxes(decode(base[keep], maps.second_reg[keep]),
                       image_size[0], image_size[1])
    order = np.argsort(-scores, kind="stable")
    return np.column_stack([boxes[order], scores[order]])


def nms(dets, iou_threshold=DEFAULT_NMS_IOU, max_keep=DEFAULT_MAX_KEEP):
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-scoring box (ties: lower input index)
    and discards every remaining box whose IoU with it exceeds the
    threshold, stopping after `max_keep` survivors. Output rows are
    sorted by descending score.
    """
    dets = np.asarray(dets, dtype=np.float64).reshape(-1, 5)
    if len(dets) == 0:
        return dets.copy()
    order = np.argsort(-dets[:, 4], kind="stable")
    boxes = dets[order, :4]
    keep = []
    alive = np.ones(len(dets), dtype=bool)
    for i in range(len(dets)):
        if not alive[i]:
            continue
        keep.append(order[i])
        if len(keep) >= max_keep:
            break
        tail = np.nonzero(alive[i + 1:])[0] + i + 1
        if len(tail) == 0:
            break
        overlaps = iou_matrix(boxes[i:i + 1], boxes[tail]).ravel()
        alive[tail[overlaps > iou_threshold]] = False
    return dets[np.asarray(keep, dtype=np.int64)]
