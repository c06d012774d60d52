"""Iterative multi-modal focus refinement.

Beam-searched pruning over the joint image/text token set.  Each iteration
derives children by pruning exactly one more token from every surviving
state, validates children against the baseline ranking, and keeps at most
``beam_width`` valid children (best retrieval margin first).  A state is
finalized when it is valid and none of its one-token-smaller children are:
its preserved tokens are then locally indispensable.

``exhaustive_minimal_states`` is the ground-truth oracle for small token
counts: it enumerates every mask and returns the locally minimal valid
states reachable from the all-preserved state through chains of valid
states, which is exactly the family the beam search converges to at
unbounded width.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import EmptyModality, PoolMismatch, TooManyTokens
from .scoring import Scorer, rank, retrieval_equal
from .types import (
    Candidate,
    FinalStateSet,
    PruneState,
    Ranking,
    TokenizedQuery,
    ValidityMode,
)


@dataclass(frozen=True)
class RefinementConfig:
    beam_width: int = 5
    mode: ValidityMode = ValidityMode.TOP1
    max_iterations: Optional[int] = None
    # survivor selection rule; "margin" is the only built-in rule
    selection: str = "margin"

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.selection != "margin":
            raise ValueError(f"unknown selection rule {self.selection!r}")


@dataclass
class FocusTrace:
    """Per-run accounting: validations performed and beam contents."""

    baseline: Ranking
    validations: int = 0
    budget: int = 0
    # one entry per iteration: masks of the surviving beam states
    beams: list[tuple[int, ...]] = field(default_factory=list)


def predicted_inference_budget(n_image: int, n_text: int, beam_width: int) -> int:
    """Worst-case number of per-state validations: w * n * (n + 1) / 2."""
    if n_image < 1 or n_text < 1 or beam_width < 1:
        raise ValueError("all inputs must be >= 1")
    n = n_image + n_text
    return beam_width * n * (n + 1) // 2


def _check_inputs(query: TokenizedQuery, pool: Sequence[Candidate]) -> None:
    if query.n_image < 1 or query.n_text < 1:
        raise EmptyModality("refinement requires at least one token per modality")
    if len(pool) < 2:
        raise PoolMismatch("refinement requires a pool of at least 2 candidates")


def _state_sort_key(state: PruneState):
    # lexicographically smallest preserved index tuple wins ties
    return state.preserved()


def refine(
    query: TokenizedQuery,
    pool: Sequence[Candidate],
    scorer: Scorer,
    config: RefinementConfig = RefinementConfig(),
) -> tuple[FinalStateSet, FocusTrace]:
    _check_inputs(query, pool)
    n = query.total_tokens
    s0 = PruneState.initial(n)
    baseline = rank(scorer, query, s0, pool)
    trace = FocusTrace(
        baseline=baseline,
        budget=predicted_inference_budget(query.n_image, query.n_text, config.beam_width),
    )

    final: dict[int, tuple[PruneState, float]] = {}
    beam: list[tuple[PruneState, float]] = [(s0, baseline.margin)]
    iteration = 0
    while beam:
        iteration += 1
        if config.max_iterations is not None and iteration > config.max_iterations:
            # iteration cap: remaining beam states are valid but their local
            # minimality was not established; finalize them as-is
            for state, margin in beam:
                final.setdefault(state.mask, (state, margin))
            break

        # children deduplicated by preserved set across all parents
        children: dict[int, PruneState] = {}
        parents_of: dict[int, list[int]] = {}
        for state, _ in beam:
            for idx in state.preserved():
                child = state.remove(idx)
                if child.mask == 0:
                    # the zero-token state is never a focus state
                    continue
                children.setdefault(child.mask, child)
                parents_of.setdefault(child.mask, []).append(state.mask)

        valid_children: list[tuple[PruneState, float]] = []
        parent_has_valid: set[int] = set()
        for mask in sorted(children):
            child = children[mask]
            r = rank(scorer, query, child, pool)
            trace.validations += 1
            if retrieval_equal(r, baseline, config.mode):
                valid_children.append((child, r.margin))
                parent_has_valid.update(parents_of[mask])

        for state, margin in beam:
            if state.mask not in parent_has_valid:
                final.setdefault(state.mask, (state, margin))

        valid_children.sort(key=lambda sm: (-sm[1], _state_sort_key(sm[0])))
        beam = valid_children[: config.beam_width]
        trace.beams.append(tuple(s.mask for s, _ in beam))

    ordered = sorted(final.values(), key=lambda sm: (sm[0].preserved_count, _state_sort_key(sm[0])))
    fss = FinalStateSet(
        states=tuple(s for s, _ in ordered),
        margins=tuple(m for _, m in ordered),
    )
    return fss, trace


def exhaustive_minimal_states(
    query: TokenizedQuery,
    pool: Sequence[Candidate],
    scorer: Scorer,
    mode: ValidityMode = ValidityMode.TOP1,
) -> FinalStateSet:
    """Full 2^n enumeration oracle.

    Returns the locally minimal valid states among those reachable from the
    all-preserved state via single-token removals through valid states only
    (matching the refinement process, which can only derive children of valid
    states).  ``global_min_cardinality`` reports the smallest preserved count
    over *all* valid masks, reachable or not.
    """
    _check_inputs(query, pool)
    n = query.total_tokens
    if n > 16:
        raise TooManyTokens(f"{n} tokens exceed the 2^16 enumeration limit")
    full = (1 << n) - 1
    baseline = rank(scorer, query, PruneState.initial(n), pool)

    valid = [False] * (full + 1)
    margin = [0.0] * (full + 1)
    # mask 0 stays invalid: the zero-token state is never a focus state
    for mask in range(1, full + 1):
        state = PruneState(mask=mask, total=n)
        r = rank(scorer, query, state, pool)
        valid[mask] = retrieval_equal(r, baseline, mode)
        margin[mask] = r.margin

    # reachability from s0 through valid states, by descending popcount
    reachable = [False] * (full + 1)
    reachable[full] = True
    by_popcount = sorted(range(full + 1), key=lambda m: -m.bit_count())
    for mask in by_popcount:
        if not (reachable[mask] and valid[mask]):
            continue
        for i in range(n):
            if mask >> i & 1:
                child = mask & ~(1 << i)
                if valid[child]:
                    reachable[child] = True

    family = []
    for mask in range(full + 1):
        if not (valid[mask] and reachable[mask]):
            continue
        has_valid_child = any(
            valid[mask & ~(1 << i)] for i in range(n) if mask >> i & 1
        )
        if not has_valid_child:
            family.append(PruneState(mask=mask, total=n))

    family.sort(key=lambda s: (s.preserved_count, _state_sort_key(s)))
    return FinalStateSet(
        states=tuple(family),
        margins=tuple(margin[s.mask] for s in family),
        global_min_cardinality=min(m.bit_count() for m in range(full + 1) if valid[m]),
    )
