"""Descriptor matching between a source and a target feature set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from .descriptors import FeatureSet
from .errors import EmptyInput, InvalidParameter, KindMismatch

_CHUNK = 256


@dataclass(frozen=True)
class CorrespondenceSet:
    """Index pairs (source feature, target feature) with descriptor distances."""

    source_indices: NDArray[np.intp]
    target_indices: NDArray[np.intp]
    distances: NDArray[np.float64]

    def __post_init__(self):
        s = np.asarray(self.source_indices, dtype=np.intp).reshape(-1)
        t = np.asarray(self.target_indices, dtype=np.intp).reshape(-1)
        d = np.asarray(self.distances, dtype=np.float64).reshape(-1)
        if not (len(s) == len(t) == len(d)):
            raise ValueError("parallel correspondence arrays must have equal length")
        if np.any(d < 0):
            raise ValueError("descriptor distances must be non-negative")
        pairs = set(zip(s.tolist(), t.tolist()))
        if len(pairs) != len(s):
            raise ValueError("duplicate correspondence pairs")
        object.__setattr__(self, "source_indices", s)
        object.__setattr__(self, "target_indices", t)
        object.__setattr__(self, "distances", d)

    def __len__(self) -> int:
        return len(self.source_indices)

    def select(self, keep) -> "CorrespondenceSet":
        keep = np.asarray(keep)
        return CorrespondenceSet(
            self.source_indices[keep], self.target_indices[keep], self.distances[keep]
        )


def _nearest(queries: np.ndarray, refs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact L2 nearest reference per query; ties resolve to the lower index.

    Selection runs over cdist blocks; the reported distance is recomputed
    with numpy's norm so callers comparing against a plain linear scan see
    identical values.
    """
    n = len(queries)
    idx = np.zeros(n, dtype=np.intp)
    for start in range(0, n, _CHUNK):
        block = queries[start : start + _CHUNK]
        d = cdist(block, refs)
        idx[start : start + len(block)] = np.argmin(d, axis=1)
    dist = np.linalg.norm(queries - refs[idx], axis=1)
    return idx, dist


def match_nn(source: FeatureSet, target: FeatureSet, policy: str = "forward") -> CorrespondenceSet:
    """Nearest-neighbor descriptor matching.

    forward keeps every source feature paired with its nearest target; mutual
    additionally requires the target's nearest source to be that same feature.
    Output is sorted by source index.
    """
    if policy not in ("forward", "mutual"):
        raise InvalidParameter(f"unknown matching policy '{policy}'")
    if source.kind != target.kind:
        raise KindMismatch(f"cannot match {source.kind} against {target.kind}")
    if len(source) == 0 or len(target) == 0:
        raise EmptyInput("both feature sets must be non-empty")

    fwd_idx, fwd_dist = _nearest(source.descriptors, target.descriptors)
    src = np.arange(len(source), dtype=np.intp)
    if policy == "mutual":
        back_idx, _ = _nearest(target.descriptors, source.descriptors)
        keep = back_idx[fwd_idx] == src
        src, fwd_idx, fwd_dist = src[keep], fwd_idx[keep], fwd_dist[keep]
    return CorrespondenceSet(src, fwd_idx, fwd_dist)
