"""Candidate-beam reduction and top-N ranking for the tracked transmitter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BeamLayout
from .regions import PixelRegion, region_overlap

TOPN_DEFAULT = (1, 3, 5)


@dataclass
class CandidateBeamSet:
    bits: np.ndarray  # length Q, 1 for viable beams

    @property
    def indices(self) -> list[int]:
        return [int(q) for q in np.flatnonzero(self.bits)]

    def __len__(self) -> int:
        return int(self.bits.sum())

    def __contains__(self, q) -> bool:
        return 0 <= q < len(self.bits) and bool(self.bits[q])


@dataclass
class BeamRanking:
    beams: list
    scores: list

    def top(self, n: int) -> list:
        return self.beams[:n]


def reduce_search_space(tx_mask: PixelRegion, layout: BeamLayout, overlaps=None) -> CandidateBeamSet:
    """Beams whose footprint shares at least one pixel with the TX mask.

    An empty mask gives an empty set; callers fall back to the whole codebook.
    """
    if overlaps is None:
        overlaps = layout.overlaps(tx_mask)
    return CandidateBeamSet((np.asarray(overlaps) >= 1).astype(np.int8))


def reduce_search_space_exact(tx_mask: PixelRegion, layout: BeamLayout) -> CandidateBeamSet:
    """Same as ``reduce_search_space`` but through per-footprint run intersection."""
    bits = [1 if region_overlap(tx_mask, r) >= 1 else 0 for r in layout.regions]
    return CandidateBeamSet(np.array(bits, dtype=np.int8))


def rank_beams(
    tx_mask: PixelRegion,
    candidates: CandidateBeamSet,
    layout: BeamLayout,
    n: int,
    overlaps=None,
) -> BeamRanking:
    """Order candidate beams by shared pixel count (descending), then by the
    distance between the mask centroid and the footprint's center line at the
    centroid's row, then by index. Non-candidates are never returned.

    An empty candidate set falls back to the whole codebook ranked by centroid
    distance alone.
    """
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    if overlaps is None:
        overlaps = layout.overlaps(tx_mask)
    pool = candidates.indices
    fallback = not pool
    if fallback:
        if not tx_mask:
            raise ValueError("empty TX mask and empty candidate set")
        pool = list(range(layout.size))
    cx, cy = tx_mask.centroid()
    dist = np.abs(layout.midline_x(cy) - cx)
    if fallback:
        key = lambda q: (dist[q], q)  # noqa: E731
    else:
        key = lambda q: (-int(overlaps[q]), dist[q], q)  # noqa: E731
    order = sorted(pool, key=key)[:n]
    score = [float(-dist[q]) if fallback else float(overlaps[q]) for q in order]
    return BeamRanking(order, score)


def topn_accuracy(rankings, gt_beams, n: int):
    """Fraction of frames whose oracle beam is among the first ``n`` ranked; None when empty."""
    rankings = list(rankings)
    gt_beams = list(gt_beams)
    if len(rankings) != len(gt_beams):
        raise ValueError("rankings and ground truth must be aligned")
    if not rankings:
        return None
    hits = sum(1 for r, g in zip(rankings, gt_beams) if r is not None and g in r.top(n))
    return hits / len(rankings)
