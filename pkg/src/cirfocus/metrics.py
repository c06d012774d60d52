"""Focus metrics: token proportions, balance ratios, imbalance, subset recall."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import DegenerateState, MissingPositive
from .refinement import FocusTrace
from .types import (
    AugmentedSample,
    FinalStateSet,
    FocusReport,
    FocusStateEntry,
    Modality,
    PruneState,
    Ranking,
    TokenizedQuery,
)

RATIO_TOL = 1e-9


def focus_token_proportion(
    state: PruneState, query: TokenizedQuery, modality: Modality
) -> float:
    """Sum of alpha weights over preserved tokens of one modality.

    0 when no token of that modality is preserved.
    """
    n_i = query.n_image
    if state.total != query.total_tokens:
        raise IndexError("state size does not match query token count")
    total = 0.0
    for idx in state.preserved():
        if (idx < n_i) == (modality is Modality.IMAGE):
            total += query.weight_of(idx)
    return total


def focus_balance_ratios(
    final_states: FinalStateSet, query: TokenizedQuery
) -> tuple[float, float]:
    """Mean relative focus token proportion per modality; sums to 1."""
    r_i = 0.0
    for state in final_states.states:
        p_i = focus_token_proportion(state, query, Modality.IMAGE)
        p_t = focus_token_proportion(state, query, Modality.TEXT)
        denom = p_i + p_t
        if denom <= 0.0:
            raise DegenerateState("state preserves no token of either modality")
        r_i += p_i / denom
    r_i /= len(final_states.states)
    return r_i, 1.0 - r_i


def focus_imbalance(r_image: float, r_text: float) -> float:
    """|r_I - r_T|; 0 for perfectly balanced, 1 for single-modality focus."""
    if abs(r_image + r_text - 1.0) > 1e-6:
        raise ValueError(f"balance ratios must sum to 1, got {r_image + r_text}")
    return abs(r_image - r_text)


def build_focus_report(
    sample_id: str,
    query: TokenizedQuery,
    final_states: FinalStateSet,
    trace: FocusTrace,
) -> FocusReport:
    entries = tuple(
        FocusStateEntry(
            state=s,
            p_image=focus_token_proportion(s, query, Modality.IMAGE),
            p_text=focus_token_proportion(s, query, Modality.TEXT),
        )
        for s in final_states.states
    )
    r_i, r_t = focus_balance_ratios(final_states, query)
    return FocusReport(
        sample_id=sample_id,
        entries=entries,
        r_image=r_i,
        r_text=r_t,
        imbalance=focus_imbalance(r_i, r_t),
        inference_count=trace.validations,
    )


def subset_recall_at_k(
    samples: Sequence[AugmentedSample],
    rankings: Mapping[str, Ranking],
    k: int,
) -> float:
    """Fraction of samples whose positive ranks within the top k of its local pool."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not samples:
        raise MissingPositive("no samples to evaluate")
    hits = 0
    for sample in samples:
        pos = sample.positive_id()
        ranking = rankings[sample.sample_id]
        if set(ranking.order) != {c.id for c in sample.candidates}:
            raise MissingPositive(
                f"ranking for {sample.sample_id} does not cover its local pool"
            )
        if pos in ranking.order[:k]:
            hits += 1
    return hits / len(samples)


def weighted_average(values: Sequence[float], weights: Sequence[float]) -> float:
    """Plumbing for composing metrics across benchmarks with custom weights."""
    if len(values) != len(weights) or not values:
        raise ValueError("values and weights must be equal-length and non-empty")
    total = sum(weights)
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    return sum(v * w for v, w in zip(values, weights)) / total


@dataclass(frozen=True)
class EvaluationReport:
    """Per-sample hit flags and focus data plus pool-level aggregates."""

    per_sample: tuple[dict, ...]
    recall_at: dict[int, float]
    mean_r_image: float
    mean_r_text: float
    imbalance: float

    def to_json_dict(self) -> dict:
        return {
            "per_sample": list(self.per_sample),
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "mean_r_image": self.mean_r_image,
            "mean_r_text": self.mean_r_text,
            "imbalance": self.imbalance,
        }


def build_evaluation_report(
    samples: Sequence[AugmentedSample],
    rankings: Mapping[str, Ranking],
    reports: Mapping[str, FocusReport],
    ks: Sequence[int],
) -> EvaluationReport:
    per_sample = []
    for sample in samples:
        ranking = rankings[sample.sample_id]
        pos = sample.positive_id()
        rep = reports.get(sample.sample_id)
        per_sample.append(
            {
                "sample_id": sample.sample_id,
                "hits": {str(k): pos in ranking.order[:k] for k in ks},
                "r_image": None if rep is None else rep.r_image,
                "r_text": None if rep is None else rep.r_text,
            }
        )
    recall = {k: subset_recall_at_k(samples, rankings, k) for k in ks}
    focus = [reports[s.sample_id] for s in samples if s.sample_id in reports]
    if focus:
        mean_r_i = sum(r.r_image for r in focus) / len(focus)
    else:
        mean_r_i = 0.5
    mean_r_t = 1.0 - mean_r_i
    return EvaluationReport(
        per_sample=tuple(per_sample),
        recall_at=recall,
        mean_r_image=mean_r_i,
        mean_r_text=mean_r_t,
        imbalance=abs(mean_r_i - mean_r_t),
    )
