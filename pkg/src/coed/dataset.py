"""Graph ensemble data: one fixed graph, many feature/target realizations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from .fuzzy_graph import FuzzyDiGraph

SPLITS = ("train", "val", "test")


@dataclass
class EnsembleDataset:
    """Stacked realizations over a shared graph.

    Attributes:
        graph: graph handed to the model (usually all angles pi/4).
        features: (S, N, D_in).
        targets: (S, N, D_tgt).
        masks: (S, N) bool; ``False`` rows are excluded from the loss.
        split: (S,) array of ``"train"``/``"val"``/``"test"``.
        metadata: JSON-serialisable generator provenance.
    """

    graph: FuzzyDiGraph
    features: np.ndarray
    targets: np.ndarray
    masks: np.ndarray
    split: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.masks = np.asarray(self.masks, dtype=bool)
        self.split = np.asarray(self.split, dtype=object)
        S, N = self.features.shape[:2]
        if self.features.ndim != 3 or self.targets.ndim != 3:
            raise ValueError("features and targets must be (S, N, D)")
        if self.targets.shape[:2] != (S, N) or self.masks.shape != (S, N):
            raise ValueError("features, targets and masks disagree in (S, N)")
        if N != self.graph.n_nodes:
            raise ValueError("node count differs from the graph")
        if self.split.shape != (S,) or not set(self.split) <= set(SPLITS):
            raise ValueError("split must label every sample train/val/test")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.features.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    @property
    def target_dim(self) -> int:
        return self.targets.shape[2]

    def indices(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return np.flatnonzero(self.split == split)

    def split_sizes(self) -> Dict[str, int]:
        return {s: int(np.sum(self.split == s)) for s in SPLITS}

    def batch(self, idx):
        """Features, targets and masks for ``idx`` in (N, B, D) layout."""
        idx = np.asarray(idx)
        x = np.ascontiguousarray(self.features[idx].transpose(1, 0, 2))
        y = np.ascontiguousarray(self.targets[idx].transpose(1, 0, 2))
        m = np.ascontiguousarray(self.masks[idx].T)
        return x, y, m

    @property
    def samples(self):
        return [(self.features[k], self.targets[k], self.masks[k]) for k in range(len(self))]


def seeded_split(n: int, rng: np.random.Generator, fractions=(0.6, 0.2, 0.2)) -> np.ndarray:
    """Random train/val/test labels with counts ``round(n * fraction)``."""
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    labels = np.array(["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val),
                      dtype=object)
    return labels[rng.permutation(n)]
