"""Loss kernels with analytic gradients.

Training couples three terms: a two-step focal classification loss (first
step on the low filter levels, second step on every anchor that survives
filtering), a two-step smooth-L1 regression loss (first step on the high
refinement levels, second step on surviving positives), and a per-level
attention loss on binary face masks. All kernels return both the value
and the exact derivative with respect to each participating logit/delta,
so correctness can be checked against finite differences.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .anchors import AnchorSet
from .assign import IGNORED, POSITIVE, AssignmentResult
from .maps import ScoreMaps

DEFAULT_FOCAL_ALPHA = 0.25
DEFAULT_FOCAL_GAMMA = 2.0


@dataclass
class MapGrads:
    """Gradient buffers mirroring the ScoreMaps layout."""

    first_cls: np.ndarray
    first_reg: np.ndarray
    second_pos: np.ndarray
    second_neg: np.ndarray
    second_reg: np.ndarray
    attention: list = field(default_factory=list)

    @classmethod
    def zeros_like(cls, maps: ScoreMaps):
        return cls(
            first_cls=np.zeros_like(maps.first_cls),
            first_reg=np.zeros_like(maps.first_reg),
            second_pos=np.zeros_like(maps.second_pos),
            second_neg=np.zeros_like(maps.second_neg),
            second_reg=np.zeros_like(maps.second_reg),
            attention=[np.zeros_like(g, dtype=np.float64)
                       for g in maps.attention],
        )

    def add(self, other):
        self.first_cls += other.first_cls
        self.first_reg += other.first_reg
        self.second_pos += other.second_pos
        self.second_neg += other.second_neg
        self.second_reg += other.second_reg
        for mine, theirs in zip(self.attention, other.attention):
            mine += theirs
        return self


@dataclass
class LossBreakdown:
    cls: float
    reg: float
    att: float
    total: float
    grads: MapGrads


def sigmoid_focal_loss(logits, labels, alpha=DEFAULT_FOCAL_ALPHA,
                       gamma=DEFAULT_FOCAL_GAMMA):
    """Binary focal loss on logits, elementwise.

    With p = sigmoid(x) and p_t the probability of the true class,
    loss = -alpha_t * (1 - p_t)**gamma * log(p_t). Stable for |x| up to
    a few hundred: log p is computed as -log(1 + exp(-x)), never through
    p itself.

    Returns (loss, d loss / d logit), same shape as the inputs.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if gamma < 0.0:
        raise ValueError("gamma must be >= 0")
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    p = expit(x)
    log_p = -np.logaddexp(0.0, -x)
    log_q = -np.logaddexp(0.0, x)  # log(1 - p)
    pos = y == 1
    loss = np.where(pos,
                    -alpha * (1.0 - p) ** gamma * log_p,
                    -(1.0 - alpha) * p ** gamma * log_q)
    grad = np.where(pos,
                    alpha * (1.0 - p) ** gamma * (gamma * p * log_p - (1.0 - p)),
                    (1.0 - alpha) * p ** gamma * (p - gamma * (1.0 - p) * log_q))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def smooth_l1(pred, target):
    """Elementwise smooth L1: 0.5*d**2 inside |d| < 1, |d| - 0.5 outside.

    Returns (loss, d loss / d pred).
    """
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    ad = np.abs(d)
    inside = ad < 1.0
    loss = np.where(inside, 0.5 * d * d, ad - 0.5)
    grad = np.where(inside, d, np.sign(d))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def max_in_out_reduce(pos_logits, neg_logits):
    """Collapse grouped scores: max of each group, and their difference.

    The difference is the face logit fed to the binary focal loss; the
    subgradient flows only through the argmax entry of each group (first
    index on exact ties).

    Returns (pos_score, neg_score, face_logit, pos_arg, neg_arg) with the
    reductions taken over the last axis.
    """
    pos_logits = np.asarray(pos_logits, dtype=np.float64)
    neg_logits = np.asarray(neg_logits, dtype=np.float64)
    pos_arg = np.argmax(pos_logits, axis=-1)
    neg_arg = np.argmax(neg_logits, axis=-1)
    pos_score = np.take_along_axis(
        pos_logits, pos_arg[..., None], axis=-1)[..., 0]
    neg_score = np.take_along_axis(
        neg_logits, neg_arg[..., None], axis=-1)[..., 0]
    return pos_score, neg_score, pos_score - neg_score, pos_arg, neg_arg


def max_in_out_focal_loss(pos_logits, neg_logits, labels,
                          alpha=DEFAULT_FOCAL_ALPHA,
                          gamma=DEFAULT_FOCAL_GAMMA):
    """Focal loss composed with the max-in-out reduction.

    Returns (loss, grad_pos, grad_neg); the gradients are zero except at
    each group's argmax entry.
    """
    pos_logits = np.atleast_2d(np.asarray(pos_logits, dtype=np.float64))
    neg_logits = np.atleast_2d(np.asarray(neg_logits, dtype=np.float64))
    _, _, face_logit, pos_arg, neg_arg = max_in_out_reduce(
        pos_logits, neg_logits)
    loss, dface = sigmoid_focal_loss(face_logit, labels, alpha, gamma)
    dface = np.atleast_1d(dface)
    grad_pos = np.zeros_like(pos_logits)
    grad_neg = np.zeros_like(neg_logits)
    rows = np.arange(len(pos_logits))
    grad_pos[rows, pos_arg] = dface
    grad_neg[rows, neg_arg] = -dface
    return np.atleast_1d(loss), grad_pos, grad_neg


def _check_lengths(anchors, first_assign, second_assign, survivors):
    n = len(anchors)
    for name, arr in (("first assignment", first_assign.labels),
                      ("second assignment", second_assign.labels),
                      ("survivor mask", survivors)):
        if len(arr) != n:
            raise ValueError(f"{name} covers {len(arr)} anchors, set has {n}")


def classification_loss(maps: ScoreMaps, anchors: AnchorSet,
                        first_assign: AssignmentResult,
                        second_assign: AssignmentResult,
                        survivors,
                        alpha=DEFAULT_FOCAL_ALPHA,
                        gamma=DEFAULT_FOCAL_GAMMA):
    """Two-step classification loss.

    First term: focal loss of the single first-step logit over all
    non-ignored anchors on the filter levels, divided by that step's
    positive count. Second term: focal loss of the max-in-out face logit
    over non-ignored anchors in the survivor set, divided by the number
    of surviving positives. Both normalizers are clamped to >= 1 so a
    faceless crop cannot divide by zero.

    Returns (value, MapGrads).
    """
    maps.validate(anchors)
    survivors = np.asarray(survivors, dtype=bool)
    _check_lengths(anchors, first_assign, second_assign, survivors)
    grads = MapGrads.zeros_like(maps)

    filt = anchors.filter_mask()
    labels1 = first_assign.labels[filt]
    omega = labels1 != IGNORED
    n1 = max(1, int(np.sum(labels1 == POSITIVE)))
    loss1, grad1 = sigmoid_focal_loss(
        maps.first_cls[omega], (labels1[omega] == POSITIVE).astype(np.int8),
        alpha, gamma)
    grads.first_cls[omega] = np.atleast_1d(grad1) / n1
    term1 = float(np.sum(loss1)) / n1

    active = survivors & (second_assign.labels != IGNORED)
    n2 = max(1, int(np.sum(survivors & (second_assign.labels == POSITIVE))))
    loss2, gpos, gneg = max_in_out_focal_loss(
        maps.second_pos[active], maps.second_neg[active],
        (second_assign.labels[active] == POSITIVE).astype(np.int8),
        alpha, gamma)
    grads.second_pos[active] = gpos / n2
    grads.second_neg[active] = gneg / n2
    term2 = float(np.sum(loss2)) / n2

    return term1 + term2, grads


def regression_loss(maps: ScoreMaps, anchors: AnchorSet,
                    first_assign: AssignmentResult,
                    second_assign: AssignmentResult,
                    survivors):
    """Two-step box regression loss; plain sums, no normalization.

    First term: smooth L1 between the first-step deltas and the targets
    encoded against the raw anchors, over first-step positives on the
    refinement levels. Second term: smooth L1 between the second-step
    deltas and the targets encoded against the refined boxes, over
    surviving second-step positives. Negative and ignored anchors
    contribute nothing.

    Returns (value, MapGrads).
    """
    maps.validate(anchors)
    survivors = np.asarray(survivors, dtype=bool)
    _check_lengths(anchors, first_assign, second_assign, survivors)
    grads = MapGrads.zeros_like(maps)

    refm = anchors.refine_mask()
    psi = first_assign.labels[refm] == POSITIVE
    loss1, grad1 = smooth_l1(maps.first_reg[psi],
                             first_assign.reg_targets[refm][psi])
    grads.first_reg[psi] = grad1
    term1 = float(np.sum(loss1))

    mask2 = survivors & (second_assign.labels == POSITIVE)
    loss2, grad2 = smooth_l1(maps.second_reg[mask2],
                             second_assign.reg_targets[mask2])
    grads.second_reg[mask2] = grad2
    term2 = float(np.sum(loss2))

    return term1 + term2, grads


def attention_loss(pred_grids, target_grids):
    """Pixel-wise sigmoid cross entropy against binary masks.

    Each level is averaged over its own pixels, then levels are summed,
    so coarse levels are not drowned out by fine ones.

    Returns (value, list of per-level gradient grids).
    """
    if len(pred_grids) != len(target_grids):
        raise ValueError(
            f"{len(pred_grids)} prediction grids vs "
            f"{len(target_grids)} target grids")
    total = 0.0
    grads = []
    for pred, target in zip(pred_grids, target_grids):
        pred = np.asarray(pred, dtype=np.float64)
        y = np.asarray(target, dtype=np.float64)
        if pred.shape != y.shape:
            raise ValueError(
                f"prediction grid {pred.shape} vs target grid {y.shape}")
        n = max(1, pred.size)
        # softplus(x) - y*x == -[y*log(p) + (1-y)*log(1-p)]
        ce = np.logaddexp(0.0, pred) - y * pred
        total += float(np.sum(ce)) / n
        grads.append((expit(pred) - y) / n)
    return total, grads


def combined_loss(maps: ScoreMaps, anchors: AnchorSet,
                  first_assign: AssignmentResult,
                  second_assign: AssignmentResult,
                  survivors, attention_targets,
                  alpha=DEFAULT_FOCAL_ALPHA,
                  gamma=DEFAULT_FOCAL_GAMMA):
    """Sum of the classification, regression and attention losses.

    The total is formed in exactly that order, and the gradient buffers
    are the disjoint union of the three components' buffers.
    """
    cls_val, cls_grads = classification_loss(
        maps, anchors, first_assign, second_assign, survivors, alpha, gamma)
    reg_val, reg_grads = regression_loss(
        maps, anchors, first_assign, second_assign, survivors)
    att_val, att_grads = attention_loss(maps.attention, attention_targets)

    grads = cls_grads.add(reg_grads)
    grads.attention = att_grads
    return LossBreakdown(
        cls=cls_val,
        reg=reg_val,
        att=att_val,
        total=(cls_val + reg_val) + att_val,
        grads=grads,
    )
