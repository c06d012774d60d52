"""Core domain vocabulary: queries, tokens, pruning states, candidates, reports.

Global token index layout is fixed: image tokens occupy indices
``0 .. n_I - 1``, text tokens ``n_I .. n_I + n_T - 1``.  Modality membership
is therefore a single index comparison.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyModality, NonPositiveArea

WEIGHT_TOL = 1e-9


class Modality(enum.Enum):
    IMAGE = "image"
    TEXT = "text"


@dataclass(frozen=True)
class ImageToken:
    """One image segment: an area weight plus either an inline feature vector
    (synthetic mode) or an asset/mask reference pair (adapter mode)."""

    id: int
    area_weight: float
    vec: Optional[np.ndarray] = None
    asset: Optional[str] = None
    mask: Optional[str] = None


@dataclass(frozen=True)
class TextToken:
    id: int
    surface: str
    vec: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TokenizedQuery:
    """A composed query decomposed into weighted image segments and text tokens.

    Image-token weights sum to 1 (renormalized at construction); text tokens
    are uniformly weighted 1/n_T.
    """

    image_tokens: tuple[ImageToken, ...]
    text_tokens: tuple[TextToken, ...]
    text: str = ""

    @property
    def n_image(self) -> int:
        return len(self.image_tokens)

    @property
    def n_text(self) -> int:
        return len(self.text_tokens)

    @property
    def total_tokens(self) -> int:
        return self.n_image + self.n_text

    @property
    def alpha_image(self) -> np.ndarray:
        return np.array([t.area_weight for t in self.image_tokens])

    @property
    def alpha_text(self) -> np.ndarray:
        n = self.n_text
        return np.full(n, 1.0 / n)

    def modality_of(self, index: int) -> Modality:
        return Modality.IMAGE if index < self.n_image else Modality.TEXT

    def weight_of(self, index: int) -> float:
        if index < self.n_image:
            return self.image_tokens[index].area_weight
        return 1.0 / self.n_text


def normalize_query(
    segment_areas: Sequence[float],
    token_surfaces: Sequence[str],
    *,
    segment_vecs: Optional[Sequence[np.ndarray]] = None,
    token_vecs: Optional[Sequence[np.ndarray]] = None,
    segment_assets: Optional[Sequence[str]] = None,
    segment_masks: Optional[Sequence[str]] = None,
    text: str = "",
) -> TokenizedQuery:
    """Build a TokenizedQuery from raw segment areas and word-level tokens.

    Raw areas may overlap or under-cover the image; they are renormalized to
    sum to 1 rather than rejected.  Text-token weights are implicit (uniform).
    """
    if len(segment_areas) == 0 or len(token_surfaces) == 0:
        raise EmptyModality("query needs at least one segment and one text token")
    areas = np.asarray(segment_areas, dtype=float)
    if np.any(areas <= 0):
        raise NonPositiveArea(f"segment areas must be positive, got {list(areas)}")
    alpha = areas / areas.sum()
    image_tokens = tuple(
        ImageToken(
            id=i,
            area_weight=float(alpha[i]),
            vec=None if segment_vecs is None else np.asarray(segment_vecs[i], dtype=float),
            asset=None if segment_assets is None else segment_assets[i],
            mask=None if segment_masks is None else segment_masks[i],
        )
        for i in range(len(areas))
    )
    text_tokens = tuple(
        TextToken(
            id=j,
            surface=token_surfaces[j],
            vec=None if token_vecs is None else np.asarray(token_vecs[j], dtype=float),
        )
        for j in range(len(token_surfaces))
    )
    if not text:
        text = " ".join(token_surfaces)
    return TokenizedQuery(image_tokens=image_tokens, text_tokens=text_tokens, text=text)


@dataclass(frozen=True)
class PruneState:
    """A subset of preserved global token indices, stored as a bit mask."""

    mask: int
    total: int

    @classmethod
    def initial(cls, total: int) -> "PruneState":
        return cls(mask=(1 << total) - 1, total=total)

    @classmethod
    def from_indices(cls, indices: Sequence[int], total: int) -> "PruneState":
        m = 0
        for i in indices:
            if not 0 <= i < total:
                raise IndexError(f"token index {i} out of range 0..{total - 1}")
            m |= 1 << i
        return cls(mask=m, total=total)

    def preserved(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.total) if self.mask >> i & 1)

    def is_preserved(self, index: int) -> bool:
        return bool(self.mask >> index & 1)

    def remove(self, index: int) -> "PruneState":
        return PruneState(mask=self.mask & ~(1 << index), total=self.total)

    @property
    def preserved_count(self) -> int:
        return self.mask.bit_count()

    @property
    def pruned_count(self) -> int:
        return self.total - self.preserved_count

    def active_flags(self) -> np.ndarray:
        return np.array([bool(self.mask >> i & 1) for i in range(self.total)])


class ValidityMode(enum.Enum):
    """How two rankings are compared when checking retrieval equality."""

    TOP1 = "top1"
    FULL_ORDER = "full_order"


@dataclass(frozen=True)
class Ranking:
    """Candidate ids ordered best-first with their scores.

    Ties are broken by ascending candidate id, so identical scores always
    produce identical orderings regardless of insertion order.
    """

    order: tuple[int, ...]
    scores: tuple[float, ...]

    @classmethod
    def from_scores(cls, ids: Sequence[int], scores: Sequence[float]) -> "Ranking":
        pairs = sorted(zip(ids, scores), key=lambda p: (-p[1], p[0]))
        return cls(order=tuple(p[0] for p in pairs), scores=tuple(p[1] for p in pairs))

    @property
    def top1(self) -> int:
        return self.order[0]

    @property
    def margin(self) -> float:
        """Score gap between the best and the runner-up candidate."""
        if len(self.scores) < 2:
            return float("inf")
        return self.scores[0] - self.scores[1]


@dataclass(frozen=True)
class FinalStateSet:
    """All locally minimal valid states discovered for one query.

    ``margins`` is parallel to ``states``.  ``global_min_cardinality`` is only
    filled by the exhaustive enumerator; the beam search cannot certify it.
    """

    states: tuple[PruneState, ...]
    margins: tuple[float, ...]
    global_min_cardinality: Optional[int] = None

    def __post_init__(self):
        assert len(self.states) == len(self.margins)
        assert len(self.states) >= 1, "the all-preserved state is always valid"
        masks = [s.mask for s in self.states]
        assert len(set(masks)) == len(masks), "duplicate preserved sets"

    def masks(self) -> frozenset[int]:
        return frozenset(s.mask for s in self.states)


class CandidateKind(enum.Enum):
    POSITIVE = "positive"
    TEXT_AUG_NEGATIVE = "text_aug_negative"
    IMAGE_AUG_NEGATIVE = "image_aug_negative"
    IDENTITY_NEGATIVE = "identity_negative"
    ORIGINAL_POSITIVE = "original_positive"
    DISTRACTOR = "distractor"


@dataclass(frozen=True)
class Candidate:
    id: int
    kind: CandidateKind
    vec: Optional[np.ndarray] = None
    asset: Optional[str] = None


@dataclass(frozen=True)
class AugmentedSample:
    """A query plus its typed local candidate pool."""

    sample_id: str
    query: TokenizedQuery
    candidates: tuple[Candidate, ...]
    provenance: str = ""

    def positive_id(self) -> int:
        from .errors import MissingPositive

        positives = [c.id for c in self.candidates if c.kind is CandidateKind.POSITIVE]
        if len(positives) != 1:
            raise MissingPositive(
                f"sample {self.sample_id} has {len(positives)} positives, expected 1"
            )
        return positives[0]

    def candidate_by_id(self, cid: int) -> Candidate:
        for c in self.candidates:
            if c.id == cid:
                return c
        raise KeyError(cid)


@dataclass(frozen=True)
class FocusStateEntry:
    """Per-final-state focus token proportions."""

    state: PruneState
    p_image: float
    p_text: float


@dataclass(frozen=True)
class FocusReport:
    sample_id: str
    entries: tuple[FocusStateEntry, ...]
    r_image: float
    r_text: float
    imbalance: float
    inference_count: int


def focus_report_json(report: FocusReport, query: TokenizedQuery) -> dict:
    """Serialize a FocusReport, splitting preserved indices by modality."""
    n_i = query.n_image
    return {
        "sample_id": report.sample_id,
        "states": [
            {
                "preserved_image": [i for i in e.state.preserved() if i < n_i],
                "preserved_text": [i - n_i for i in e.state.preserved() if i >= n_i],
                "p_image": e.p_image,
                "p_text": e.p_text,
            }
            for e in report.entries
        ],
        "r_image": report.r_image,
        "r_text": report.r_text,
        "imbalance": report.imbalance,
        "inference_count": report.inference_count,
    }
