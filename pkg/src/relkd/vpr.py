"""Place-recognition task loss and retrieval evaluation.

Triplet loss with batch-hard (or all-pairs) mining over Euclidean distances,
and the Recall@K protocol: a query counts as recalled at K when any of its K
nearest database rows (ties broken by lower index) is a true positive.
AR@1 is Recall@1; AR@1% is Recall@K at K = max(1, round(0.01 * database
size)) with round-half-up. Queries with no positives are excluded from the
denominator and counted separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .losses import as_batch

MINING_BATCH_HARD = "batch_hard"
MINING_ALL_PAIRS = "all_pairs"


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 0.2
    mining: str = MINING_BATCH_HARD

    def __post_init__(self):
        if not (np.isfinite(self.margin) and self.margin >= 0):
            raise ValueError(f"margin must be finite and >= 0, got {self.margin}")
        object.__setattr__(self, "margin", float(self.margin))
        if self.mining not in (MINING_BATCH_HARD, MINING_ALL_PAIRS):
            raise ValueError(f"mining must be 'batch_hard' or 'all_pairs', got {self.mining!r}")


@dataclass(frozen=True)
class RecallReport:
    ar_at_1: float
    ar_at_1pct: float
    curve: tuple[float, ...]
    num_queries_evaluated: int
    num_queries_skipped: int = 0


def _pairwise_dist_graph(s: ad.Node) -> ad.Node:
    sq = ad.sum_(ad.mul(s, s), axis=1, keepdims=True)
    g = ad.matmul(s, ad.transpose(s))
    d2 = ad.sub(ad.add(sq, ad.transpose(sq)), ad.mul(g, 2.0))
    return ad.fill_diag(ad.sqrt0(d2), 0.0)


def triplet_loss(
    embeddings, labels, cfg: TripletConfig | None = None
) -> tuple[float, np.ndarray]:
    """Mined triplet loss over a labeled batch, with its exact gradient.

    batch_hard: mean over anchors of max(0, d(a, hardest positive) -
    d(a, hardest negative) + margin); an anchor is any row with at least one
    other same-label row and one different-label row. all_pairs averages the
    hinge over every valid (anchor, positive, negative) triple instead.
    """
    cfg = cfg or TripletConfig()
    s = as_batch(embeddings, "embeddings")
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.shape[0] != s.shape[0]:
        raise ValueError(f"labels must be 1-D with {s.shape[0]} entries, got shape {lab.shape}")
    n = s.shape[0]
    same = lab[:, None] == lab[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    neg_mask = ~same
    anchors = np.nonzero(pos_mask.any(axis=1) & neg_mask.any(axis=1))[0]
    if anchors.size == 0:
        raise ValueError("no valid triplet: need a label class with >= 2 members and another class")

    s_leaf = ad.leaf(s)
    d = _pairwise_dist_graph(s_leaf)
    if cfg.mining == MINING_BATCH_HARD:
        hardest_pos = ad.reduce_max(ad.add_const(d, np.where(pos_mask, 0.0, -np.inf)), axis=1)
        hardest_neg = ad.reduce_min(ad.add_const(d, np.where(neg_mask, 0.0, np.inf)), axis=1)
        hinge = ad.relu(ad.add(ad.sub(hardest_pos, hardest_neg), cfg.margin), 0.0)
        loss = ad.div(ad.sum_(ad.take_rows(hinge, anchors)), float(anchors.size))
    else:
        valid = (pos_mask[:, :, None] & neg_mask[:, None, :]).astype(np.float64)
        count = float(valid.sum())
        dp = ad.reshape(d, (n, n, 1))
        dn = ad.reshape(d, (n, 1, n))
        hinge = ad.relu(ad.add(ad.sub(dp, dn), cfg.margin), 0.0)
        loss = ad.div(ad.sum_(ad.mask(hinge, valid)), count)
    loss.backward()
    return loss.item(), s_leaf.grad


def _as_points(x, name: str) -> np.ndarray:
    """Evaluation-side matrix: N >= 1 rows, finite (single queries are fine)."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty N x C matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _as_truth(truth, num_queries: int, db_size: int) -> list[set[int]]:
    sets: list[set[int]] = []
    for q in range(num_queries):
        pos = set(int(i) for i in truth[q]) if q < len(truth) else set()
        for i in pos:
            if not (0 <= i < db_size):
                raise ValueError(f"truth for query {q} names database index {i} out of range")
        sets.append(pos)
    return sets


def _ranked_indices(queries: np.ndarray, database: np.ndarray) -> np.ndarray:
    qq = np.einsum("ij,ij->i", queries, queries)[:, None]
    dd = np.einsum("ij,ij->i", database, database)[None, :]
    d2 = np.maximum(qq + dd - 2.0 * queries @ database.T, 0.0)
    # stable sort keeps lower database indices first among ties
    return np.argsort(d2, axis=1, kind="stable")


def recall_at_k(queries, database, truth, k: int) -> float:
    """Percentage of evaluated queries whose k nearest database rows contain
    a true positive. Queries with empty positive sets are skipped."""
    q = _as_points(queries, "queries")
    db = _as_points(database, "database")
    if db.shape[1] != q.shape[1]:
        raise ValueError(f"channel mismatch: queries C={q.shape[1]}, database C={db.shape[1]}")
    if not (1 <= k <= db.shape[0]):
        raise ValueError(f"k must be in [1, {db.shape[0]}], got {k}")
    sets = _as_truth(truth, q.shape[0], db.shape[0])
    ranked = _ranked_indices(q, db)
    hits = evaluated = 0
    for i, pos in enumerate(sets):
        if not pos:
            continue
        evaluated += 1
        if pos.intersection(ranked[i, :k].tolist()):
            hits += 1
    if evaluated == 0:
        return 0.0
    return 100.0 * hits / evaluated


def one_percent_k(db_size: int) -> int:
    """K for the AR@1% convention: round-half-up of 1% of the database,
    floored at 1."""
    if db_size < 1:
        raise ValueError("database must be nonempty")
    return max(1, int(np.floor(0.01 * db_size + 0.5)))


def ar_at_one_percent(queries, database, truth) -> float:
    db = _as_points(database, "database")
    return recall_at_k(queries, db, truth, one_percent_k(db.shape[0]))


def recall_report(queries, database, truth, k_max: int | None = None) -> RecallReport:
    """AR@1, AR@1%, and the Recall@K curve for K = 1..k_max (default
    min(25, database size))."""
    q = _as_points(queries, "queries")
    db = _as_points(database, "database")
    if db.shape[1] != q.shape[1]:
        raise ValueError(f"channel mismatch: queries C={q.shape[1]}, database C={db.shape[1]}")
    if k_max is None:
        k_max = min(25, db.shape[0])
    if not (1 <= k_max <= db.shape[0]):
        raise ValueError(f"k_max must be in [1, {db.shape[0]}], got {k_max}")
    sets = _as_truth(truth, q.shape[0], db.shape[0])
    ranked = _ranked_indices(q, db)
    evaluated = skipped = 0
    hits = np.zeros(k_max, dtype=np.int64)
    for i, pos in enumerate(sets):
        if not pos:
            skipped += 1
            continue
        evaluated += 1
        for rank, idx in enumerate(ranked[i, :k_max].tolist()):
            if idx in pos:
                hits[rank:] += 1
                break
    if evaluated:
        curve = tuple(100.0 * h / evaluated for h in hits.tolist())
    else:
        curve = tuple(0.0 for _ in range(k_max))
    k1pct = one_percent_k(db.shape[0])
    ar1pct = (
        curve[k1pct - 1]
        if k1pct <= k_max
        else recall_at_k(q, db, truth, k1pct)
    )
    return RecallReport(
        ar_at_1=curve[0],
        ar_at_1pct=ar1pct,
        curve=curve,
        num_queries_evaluated=evaluated,
        num_queries_skipped=skipped,
    )
