"""Per-node labeling state shared by the segmentation algorithms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NO_INSTANCE = -1


@dataclass
class LabelState:
    """Total assignment of class/region/instance ids to graph nodes.

    instance_ids uses NO_INSTANCE (-1) where a node carries no instance
    (stuff classes and class-only variants).
    """

    class_ids: np.ndarray  # (n,) int64
    region_ids: np.ndarray  # (n,) int64
    instance_ids: np.ndarray  # (n,) int64, NO_INSTANCE where absent

    def __post_init__(self):
        n = len(self.class_ids)
        if len(self.region_ids) != n or len(self.instance_ids) != n:
            raise ValueError("label arrays must share one length")

    @property
    def node_count(self) -> int:
        return len(self.class_ids)

    def node(self, i: int):
        inst = int(self.instance_ids[i])
        return (
            int(self.class_ids[i]),
            int(self.region_ids[i]),
            None if inst == NO_INSTANCE else inst,
        )

    def copy(self) -> "LabelState":
        return LabelState(
            self.class_ids.copy(), self.region_ids.copy(), self.instance_ids.copy()
        )

    @classmethod
    def from_classes(cls, class_ids) -> "LabelState":
        """Class-only labeling: region id mirrors the class, no instances."""
        arr = np.asarray(class_ids, dtype=np.int64)
        return cls(arr, arr.copy(), np.full(len(arr), NO_INSTANCE, dtype=np.int64))
