"""Anchor-to-face assignment with per-step IoU thresholds.

Both steps share one rule set: an anchor is positive at or above the
positive IoU threshold, negative below the negative threshold, and
ignored in between. On top of that, every face claims its single
highest-IoU anchor even when that IoU is under the positive threshold,
so faces whose scale falls between anchor scales still receive a match.
"""

from dataclasses import dataclass

import numpy as np

from .anchors import AnchorSet
from .boxes import encode, iou_matrix

POSITIVE = 1
NEGATIVE = 0
IGNORED = -1

FIRST_STEP_NEGATIVE_IOU = 0.3
FIRST_STEP_POSITIVE_IOU = 0.7
SECOND_STEP_NEGATIVE_IOU = 0.35
SECOND_STEP_POSITIVE_IOU = 0.35


@dataclass(frozen=True)
class MatchThresholds:
    negative_iou: float
    positive_iou: float

    def __post_init__(self):
        if not 0.0 <= self.negative_iou <= self.positive_iou <= 1.0:
            raise ValueError(
                f"need 0 <= negative_iou <= positive_iou <= 1, got "
                f"({self.negative_iou}, {self.positive_iou})")

    @classmethod
    def first_step(cls):
        return cls(FIRST_STEP_NEGATIVE_IOU, FIRST_STEP_POSITIVE_IOU)

    @classmethod
    def second_step(cls):
        # Equal thresholds: the second step has no ignore band.
        return cls(SECOND_STEP_NEGATIVE_IOU, SECOND_STEP_POSITIVE_IOU)


@dataclass
class AssignmentResult:
    """Per-anchor labels, matched face indices and regression targets.

    `labels` holds POSITIVE/NEGATIVE/IGNORED. `matched_gt` is the face
    index for positives and -1 otherwise. `reg_targets` rows are
    meaningful only where the anchor is positive (zero elsewhere).
    """

    labels: np.ndarray  # (N,) int8
    matched_gt: np.ndarray  # (N,) int64
    reg_targets: np.ndarray  # (N, 4) float64
    max_iou: np.ndarray  # (N,) float64

    def positive_mask(self):
        return self.labels == POSITIVE

    def counts(self):
        return {
            "positive": int(np.sum(self.labels == POSITIVE)),
            "negative": int(np.sum(self.labels == NEGATIVE)),
            "ignored": int(np.sum(self.labels == IGNORED)),
        }


def assign(anchor_boxes, gt_boxes, thresholds):
    """Label anchors against ground-truth boxes.

    Args:
        anchor_boxes: (N, 4) boxes the step regresses from; raw anchors in
            the first step, possibly refined boxes in the second.
        gt_boxes: (M, 4) valid faces only (invalid-flagged faces are the
            caller's job to drop). May be empty: everything goes negative.
        thresholds: MatchThresholds for this step.

    An anchor overlapping several faces takes the one of maximal IoU
    (ties: lowest face index). Afterwards each face is force-matched to
    its highest-IoU anchor (ties: lowest anchor index) provided that IoU
    is positive; a force claim overrides the threshold label. When two
    faces claim the same anchor, the higher-IoU claimant wins (ties:
    lowest face index).
    """
    anchor_boxes = np.asarray(anchor_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    n, m = len(anchor_boxes), len(gt_boxes)

    labels = np.full(n, NEGATIVE, dtype=np.int8)
    matched = np.full(n, -1, dtype=np.int64)
    max_iou = np.zeros(n, dtype=np.float64)
    targets = np.zeros((n, 4), dtype=np.float64)
    if n == 0 or m == 0:
        return AssignmentResult(labels, matched, targets, max_iou)

    overlaps = iou_matrix(anchor_boxes, gt_boxes)
    best_gt = np.argmax(overlaps, axis=1)
    max_iou = overlaps[np.arange(n), best_gt]

    labels[max_iou >= thresholds.positive_iou] = POSITIVE
    band = (max_iou >= thresholds.negative_iou) & (max_iou < thresholds.positive_iou)
    labels[band] = IGNORED
    matched[labels == POSITIVE] = best_gt[labels == POSITIVE]

    # Force-match: each face claims its best anchor (ties: lowest anchor
    # index, the argmin/argmax convention). A claim overrides the threshold
    # label; contested anchors go to the claimant of maximal IoU (ties:
    # lowest face index).
    best_anchor = np.argmax(overlaps, axis=0)
    claims = {}
    for j in range(m):
        a = int(best_anchor[j])
        if overlaps[a, j] <= 0.0:
            continue
        cur = claims.get(a)
        if cur is None or overlaps[a, j] > overlaps[a, cur]:
            claims[a] = j
    for a, j in claims.items():
        labels[a] = POSITIVE
        matched[a] = j

    pos = labels == POSITIVE
    if np.any(pos):
        targets[pos] = encode(anchor_boxes[pos], gt_boxes[matched[pos]])
    return AssignmentResult(labels, matched, targets, max_iou)


def second_step_boxes(anchors: AnchorSet, refined):
    """Per-anchor boxes the second assignment runs against.

    `refined` holds one box per anchor on the refinement levels, in anchor
    order; other levels keep their original geometry. A count mismatch
    means the refinement was produced for a different anchor set.
    """
    refined = np.asarray(refined, dtype=np.float64)
    mask = anchors.refine_mask()
    expect = (int(mask.sum()), 4)
    if refined.shape != expect:
        raise ValueError(
            f"refinement shape {refined.shape} does not match the "
            f"{expect[0]} refinement-level anchors of this set")
    out = anchors.boxes.copy()
    out[mask] = refined
    return out
