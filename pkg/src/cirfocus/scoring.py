"""Scorer contract: deterministic toy scorer, ranking, retrieval equality.

A scorer maps (query, prune state, candidate pool) to one similarity per
candidate.  The toy scorer works on inline feature vectors; the remote client
(see :mod:`cirfocus.protocol`) speaks the newline-delimited JSON wire protocol
to an out-of-process adapter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, PoolMismatch
from .types import (
    Candidate,
    PruneState,
    Ranking,
    TokenizedQuery,
    ValidityMode,
)


@dataclass(frozen=True)
class ScoreRequest:
    """A query with per-token active flags plus the candidate ids to score."""

    sample_id: str
    query: TokenizedQuery
    active: tuple[bool, ...]
    candidate_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.active) != self.query.total_tokens:
            raise DimensionMismatch(
                f"active flags ({len(self.active)}) != token count "
                f"({self.query.total_tokens})"
            )


@dataclass(frozen=True)
class ToyScorerParams:
    """Parametric stand-in for a CIR embedder: two d x d projections."""

    w_image: np.ndarray
    w_text: np.ndarray

    @property
    def dim(self) -> int:
        return self.w_image.shape[0]

    def __post_init__(self):
        wi, wt = np.asarray(self.w_image), np.asarray(self.w_text)
        if wi.shape != wt.shape or wi.ndim != 2 or wi.shape[0] != wi.shape[1]:
            raise DimensionMismatch(f"projections must be square and equal-shaped")
        if wi.shape[0] < 2:
            raise DimensionMismatch("embedding dimension must be >= 2")
        if not (np.all(np.isfinite(wi)) and np.all(np.isfinite(wt))):
            raise DimensionMismatch("projection entries must be finite")

    @classmethod
    def identity(cls, dim: int) -> "ToyScorerParams":
        return cls(w_image=np.eye(dim), w_text=np.eye(dim))


def composed_query_vector(
    params: ToyScorerParams, query: TokenizedQuery, state: PruneState
) -> np.ndarray:
    """Unit-normalized composed query embedding; zero vector if everything is
    pruned (or the projections annihilate the active tokens)."""
    d = params.dim
    e_img = np.zeros(d)
    for tok in query.image_tokens:
        if state.is_preserved(tok.id):
            v = _inline_vec(tok.vec, d)
            e_img += tok.area_weight * v
    active_text = [
        _inline_vec(tok.vec, d)
        for tok in query.text_tokens
        if state.is_preserved(query.n_image + tok.id)
    ]
    e_txt = np.mean(active_text, axis=0) if active_text else np.zeros(d)
    q = params.w_image @ e_img + params.w_text @ e_txt
    norm = np.linalg.norm(q)
    if norm == 0.0:
        return np.zeros(d)
    return q / norm


def _inline_vec(vec, dim: int) -> np.ndarray:
    if vec is None:
        raise DimensionMismatch("inline feature vector required by the toy scorer")
    v = np.asarray(vec, dtype=float)
    if v.shape != (dim,):
        raise DimensionMismatch(f"vector shape {v.shape} != ({dim},)")
    return v


def toy_score(
    params: ToyScorerParams,
    query: TokenizedQuery,
    state: PruneState,
    candidate: Candidate,
) -> float:
    """dot(q_hat, candidate) with q_hat the normalized composed embedding.

    Scores 0 by convention when all tokens are pruned, so rankings fall back
    to the ascending-id tie break instead of dividing by a zero norm.
    """
    q_hat = composed_query_vector(params, query, state)
    c = _inline_vec(candidate.vec, params.dim)
    return float(q_hat @ c)


class Scorer(Protocol):
    def score(
        self, query: TokenizedQuery, state: PruneState, pool: Sequence[Candidate]
    ) -> list[float]:
        """One finite score per candidate, order-preserving."""
        ...


@dataclass
class ToyScorer:
    """In-process scorer over inline feature vectors.

    ``calls`` counts batched score requests, ``unit_scores`` individual
    candidate scores; both feed the refinement budget accounting.
    """

    params: ToyScorerParams
    calls: int = 0
    unit_scores: int = 0

    def score(
        self, query: TokenizedQuery, state: PruneState, pool: Sequence[Candidate]
    ) -> list[float]:
        q_hat = composed_query_vector(self.params, query, state)
        mat = np.stack([_inline_vec(c.vec, self.params.dim) for c in pool])
        self.calls += 1
        self.unit_scores += len(pool)
        return [float(s) for s in mat @ q_hat]


def rank(
    scorer: Scorer,
    query: TokenizedQuery,
    state: PruneState,
    pool: Sequence[Candidate],
) -> Ranking:
    """Score the pool in one batched request and sort best-first.

    Ties break by ascending candidate id.
    """
    if not pool:
        raise PoolMismatch("candidate pool is empty")
    scores = scorer.score(query, state, pool)
    if len(scores) != len(pool):
        raise PoolMismatch(f"scorer returned {len(scores)} scores for {len(pool)} candidates")
    return Ranking.from_scores([c.id for c in pool], scores)


def retrieval_equal(a: Ranking, b: Ranking, mode: ValidityMode = ValidityMode.TOP1) -> bool:
    """Whether two rankings represent the same retrieval result."""
    if set(a.order) != set(b.order):
        raise PoolMismatch("rankings cover different candidate id sets")
    if mode is ValidityMode.TOP1:
        return a.top1 == b.top1
    return a.order == b.order
