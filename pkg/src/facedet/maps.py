"""Prediction map container shared by the loss kernels and the decoder.

Per anchor set, the maps hold: one first-step classification logit per
anchor on the filter levels, max-in-out group logits and second-step box
deltas for every anchor, first-step box deltas for anchors on the
refinement levels, and one attention logit grid per pyramid level.
"""

from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorSet


@dataclass
class ScoreMaps:
    first_cls: np.ndarray  # (n_filter,) logits
    first_reg: np.ndarray  # (n_refine, 4) deltas
    second_pos: np.ndarray  # (N, c_pos) logits
    second_neg: np.ndarray  # (N, c_neg) logits
    second_reg: np.ndarray  # (N, 4) deltas
    attention: list = field(default_factory=list)  # per level (h, w) logits

    def validate(self, anchors: AnchorSet):
        """Raise ValueError if any array disagrees with the anchor set."""
        n = len(anchors)
        n_filter = int(anchors.filter_mask().sum())
        n_refine = int(anchors.refine_mask().sum())
        checks = [
            ("first_cls", self.first_cls.shape, (n_filter,)),
            ("first_reg", self.first_reg.shape, (n_refine, 4)),
            ("second_reg", self.second_reg.shape, (n, 4)),
        ]
        for name, got, want in checks:
            if got != want:
                raise ValueError(f"{name} shape {got}, expected {want}")
        for name, arr in (("second_pos", self.second_pos),
                          ("second_neg", self.second_neg)):
            if arr.ndim != 2 or arr.shape[0] != n:
                raise ValueError(f"{name} shape {arr.shape}, expected ({n}, groups)")
        if len(self.attention) != len(anchors.levels):
            raise ValueError(
                f"{len(self.attention)} attention grids for "
                f"{len(anchors.levels)} levels")
        for lv, grid in zip(anchors.levels, self.attention):
            if grid.shape != (lv.grid_h, lv.grid_w):
                raise ValueError(
                    f"attention grid {grid.shape} on {lv.level_id}, "
                    f"expected {(lv.grid_h, lv.grid_w)}")
        for name in ("first_cls", "first_reg", "second_pos", "second_neg",
                     "second_reg"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @classmethod
    def zeros(cls, anchors: AnchorSet, c_pos=3, c_neg=3):
        n = len(anchors)
        return cls(
            first_cls=np.zeros(int(anchors.filter_mask().sum())),
            first_reg=np.zeros((int(anchors.refine_mask().sum()), 4)),
            second_pos=np.zeros((n, c_pos)),
            second_neg=np.zeros((n, c_neg)),
            second_reg=np.zeros((n, 4)),
            attention=[np.zeros((lv.grid_h, lv.grid_w))
                       for lv in anchors.levels],
        )


def save_maps(path, maps: ScoreMaps, image_path, image_size):
    """Write maps plus the image identity they belong to as an .npz file."""
    payload = {
        "image_path": np.array(image_path),
        "image_size": np.asarray(image_size, dtype=np.int64),
        "first_cls": maps.first_cls,
        "first_reg": maps.first_reg,
        "second_pos": maps.second_pos,
        "second_neg": maps.second_neg,
        "second_reg": maps.second_reg,
    }
    for i, grid in enumerate(maps.attention):
        payload[f"attention_{i}"] = grid
    np.savez(path, **payload)


def load_maps(path):
    """Inverse of :func:`save_maps`; returns (maps, image_path, image_size)."""
    with np.load(path) as data:
        n_att = sum(1 for k in data.files if k.startswith("attention_"))
        maps = ScoreMaps(
            first_cls=data["first_cls"],
            first_reg=data["first_reg"],
            second_pos=data["second_pos"],
            second_neg=data["second_neg"],
            second_reg=data["second_reg"],
            attention=[data[f"attention_{i}"] for i in range(n_att)],
        )
        image_path = str(data["image_path"])
        image_size = tuple(int(v) for v in data["image_size"])
    return maps, image_path, image_size
