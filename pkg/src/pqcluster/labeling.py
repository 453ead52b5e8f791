"""Cluster naming by mean cosine similarity to labeled exemplars."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from pqcluster.waveform_data import EventLabel

logger = logging.getLogger(__name__)

STRATEGIES = ("greedy-matching", "row-argmax")


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("undefined similarity: zero vector")
    return float(np.dot(u, v) / (nu * nv))


def cosine_matrix(A, B):
    """Cosine similarity of every row of ``A`` with every row of ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("undefined similarity: zero vector")
    return np.clip((A / na[:, None]) @ (B / nb[:, None]).T, -1.0, 1.0)


@dataclass(frozen=True)
class LabeledExemplar:
    feature: np.ndarray
    label: EventLabel

    def __post_init__(self):
        object.__setattr__(self, "feature", np.asarray(self.feature, dtype=np.float64))
        object.__setattr__(self, "label", EventLabel.parse(self.label))
        if not np.any(self.feature):
            raise ValueError("exemplar feature must be non-zero")


@dataclass
class SimilarityTable:
    matrix: np.ndarray   # (clusters, events) mean cosine similarity
    cluster_ids: list
    events: list

    def to_dict(self):
        return {
            "clusters": [int(c) for c in self.cluster_ids],
            "events": [str(e) for e in self.events],
            "matrix": self.matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["matrix"], dtype=np.float64), list(d["clusters"]),
                   [EventLabel.parse(e) for e in d["events"]])


def similarity_table(centers, exemplars: Sequence[LabeledExemplar], events=None) -> SimilarityTable:
    """S[k, e] = mean cosine similarity of center k with the exemplars of event e."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if events is None:
        present = {ex.label for ex in exemplars}
        events = [e for e in EventLabel if e in present]
    cols, kept = [], []
    for event in events:
        feats = [ex.feature for ex in exemplars if ex.label == event]
        if not feats:
            logger.warning("no exemplars for event %s; column omitted", event)
            continue
        feats = np.stack(feats)
        if feats.shape[1] != centers.shape[1]:
            raise ValueError("exemplar dimension does not match cluster centers")
        cols.append(cosine_matrix(centers, feats).mean(axis=1))
        kept.append(EventLabel.parse(event))
    matrix = np.stack(cols, axis=1) if cols else np.zeros((centers.shape[0], 0))
    return SimilarityTable(matrix, list(range(centers.shape[0])), kept)


@dataclass
class LabelAssignment:
    mapping: dict = field(default_factory=dict)  # cluster id -> EventLabel or int
    strategy: str = "greedy-matching"
    threshold: float = 0.0
    matched: dict = field(default_factory=dict)  # event -> its most similar named cluster

    def name(self, cluster):
        value = self.mapping.get(int(cluster), int(cluster))
        return value.value if isinstance(value, EventLabel) else f"cluster {value}"

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "threshold": self.threshold,
            "assignment": {
                str(k): (v.value if isinstance(v, EventLabel) else int(v))
                for k, v in sorted(self.mapping.items())
            },
            "matched": {e.value: int(c) for e, c in self.matched.items()},
        }


def assign_labels(table: SimilarityTable, strategy: str = "greedy-matching",
                  threshold: float = 0.0) -> LabelAssignment:
    """Name clusters from a similarity table.

    ``row-argmax`` gives each cluster its most similar event, so an event may
    name several clusters.  ``greedy-matching`` repeatedly binds the largest
    remaining cell's event to its cluster and removes both; clusters left over
    then take their row maximum when it reaches ``threshold`` and otherwise
    keep their numeric id.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    S = np.asarray(table.matrix, dtype=np.float64)
    clusters = [int(c) for c in table.cluster_ids]
    mapping = {c: c for c in clusters}
    if S.size == 0:
        return LabelAssignment(mapping, strategy, threshold)
    if strategy == "row-argmax":
        best = {}
        for r, c in enumerate(clusters):
            e = int(np.argmax(S[r]))
            mapping[c] = table.events[e]
            if e not in best or S[r, e] > S[best[e], e]:
                best[e] = r
        matched = {table.events[e]: clusters[r] for e, r in sorted(best.items())}
        return LabelAssignment(mapping, strategy, threshold, matched)
    work = S.copy()
    bound = set()
    matched = {}
    for _ in range(min(work.shape)):
        r, e = np.unravel_index(int(np.argmax(work)), work.shape)
        mapping[clusters[r]] = table.events[e]
        matched[table.events[e]] = clusters[r]
        bound.add(r)
        work[r, :] = -np.inf
        work[:, e] = -np.inf
    for r, c in enumerate(clusters):
        if r in bound:
            continue
        e = int(np.argmax(S[r]))
        if S[r, e] >= threshold:
            mapping[c] = table.events[e]
    return LabelAssignment(mapping, strategy, threshold, matched)
