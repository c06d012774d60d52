"""Planner that turns CIR triplets into focus-challenging candidate pools.

Content creation is delegated to a generation client with four capabilities
(text mutation, image editing, image generation, query description).  The
default client is a deterministic mock producing hash-derived asset refs;
real backends live behind the wire protocol.
"""
from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .errors import GenerationFailed, InsufficientNegatives, SourceExhausted
from .protocol import PROTOCOL_VERSION, ProtocolClient
from .types import (
    AugmentedSample,
    Candidate,
    CandidateKind,
    ImageToken,
    TextToken,
    TokenizedQuery,
)


class TripletSource(enum.Enum):
    # how the source dataset paired queries with positives; similarity-paired
    # positives are often loosely consistent and get replaced by a synthetic one
    SIMILARITY_PAIRED = "similarity_paired"
    EDITING_DRIVEN = "editing_driven"


@dataclass(frozen=True)
class SourceTriplet:
    query_image: str
    query_text: str
    positive_image: str
    source: TripletSource
    triplet_id: str = ""

    def __post_init__(self):
        if not (self.query_image and self.query_text and self.positive_image):
            raise ValueError("triplet refs must be non-empty")


class GenerationClient:
    """Capability interface over VLM / image-editing / image-generation backends."""

    def mutate_text(self, query_text: str, count: int) -> list[str]:
        raise NotImplementedError

    def edit_image(self, image_ref: str, instruction: str) -> str:
        raise NotImplementedError

    def generate_image(self, description: str) -> str:
        raise NotImplementedError

    def describe(self, query_image: str, query_text: str) -> str:
        raise NotImplementedError


class MockGenerationClient(GenerationClient):
    """Hash-derived pseudo-content; byte-identical across runs with one seed."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _digest(self, op: str, *parts: str) -> str:
        payload = f"{self.seed}|{op}|" + "|".join(parts)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    def mutate_text(self, query_text: str, count: int) -> list[str]:
        return [
            f"{query_text} [contradicted {self._digest('mutate', query_text, str(i))}]"
            for i in range(count)
        ]

    def edit_image(self, image_ref: str, instruction: str) -> str:
        return f"mock://edited/{self._digest('edit', image_ref, instruction)}.png"

    def generate_image(self, description: str) -> str:
        return f"mock://generated/{self._digest('generate', description)}.png"

    def describe(self, query_image: str, query_text: str) -> str:
        return (
            f"scene {self._digest('describe', query_image, query_text)}: "
            f"{query_text}"
        )


class RemoteGenerationClient(GenerationClient):
    """Generation backend behind the shared wire protocol envelope."""

    def __init__(self, client: ProtocolClient):
        self.client = client
        self._serial = 0

    def _call(self, op: str, args: dict, count: int = 1) -> list[str]:
        self._serial += 1
        sample_id = f"gen-{self._serial}"
        msg = self.client.request(
            {
                "v": PROTOCOL_VERSION,
                "type": "generate",
                "sample_id": sample_id,
                "op": op,
                "args": args,
                "count": count,
            }
        )
        if msg.get("type") == "error":
            raise GenerationFailed(op, msg.get("message", "remote error"))
        outputs = msg.get("outputs")
        if msg.get("type") != "generated" or not isinstance(outputs, list) or len(outputs) != count:
            raise GenerationFailed(op, f"malformed generation response: {msg!r}")
        return [str(o) for o in outputs]

    def mutate_text(self, query_text: str, count: int) -> list[str]:
        return self._call("mutate_text", {"text": query_text}, count)

    def edit_image(self, image_ref: str, instruction: str) -> str:
        return self._call("edit_image", {"image": image_ref, "instruction": instruction})[0]

    def generate_image(self, description: str) -> str:
        return self._call("generate_image", {"description": description})[0]

    def describe(self, query_image: str, query_text: str) -> str:
        return self._call("describe", {"image": query_image, "text": query_text})[0]


class PositivePolicy(enum.Enum):
    SYNTHESIZE_REPLACEMENT = "synthesize_replacement"
    KEEP_ORIGINAL = "keep_original"


@dataclass(frozen=True)
class AugmentPlan:
    """Counts per negative kind plus the sample-selection knobs.

    ``pool_size`` pads with distractors so every augmented sample carries the
    same local pool size (5 by default).
    """

    text_aug_count: int = 1
    image_aug_count: int = 1
    identity_count: int = 1
    pool_size: int = 5
    negative_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.text_aug_count, self.image_aug_count, self.identity_count) < 0:
            raise ValueError("negative counts must be >= 0")
        if not 0.0 <= self.negative_ratio <= 1.0:
            raise ValueError("negative_ratio must be in [0, 1]")


def _query_for_triplet(triplet: SourceTriplet) -> TokenizedQuery:
    words = triplet.query_text.split() or [triplet.query_text]
    return TokenizedQuery(
        image_tokens=(ImageToken(id=0, area_weight=1.0, asset=triplet.query_image, mask="full"),),
        text_tokens=tuple(TextToken(id=i, surface=w) for i, w in enumerate(words)),
        text=triplet.query_text,
    )


def plan_augmented_sample(
    triplet: SourceTriplet,
    plan: AugmentPlan,
    client: GenerationClient,
    sample_id: str = "",
) -> AugmentedSample:
    """Build the typed candidate pool for one triplet.

    Editing-driven sources keep their original positive; similarity-paired
    sources get a synthesized replacement positive and the original is
    demoted to a special candidate in the pool.
    """
    candidates: list[Candidate] = []
    next_id = 0

    def add(kind: CandidateKind, asset: str) -> None:
        nonlocal next_id
        candidates.append(Candidate(id=next_id, kind=kind, asset=asset))
        next_id += 1

    if triplet.source is TripletSource.SIMILARITY_PAIRED:
        description = client.describe(triplet.query_image, triplet.query_text)
        add(CandidateKind.POSITIVE, client.generate_image(description))
        add(CandidateKind.ORIGINAL_POSITIVE, triplet.positive_image)
    else:
        add(CandidateKind.POSITIVE, triplet.positive_image)

    # visually near the query image, violating the text intent
    for negative_text in client.mutate_text(triplet.query_text, plan.text_aug_count):
        add(CandidateKind.TEXT_AUG_NEGATIVE, client.edit_image(triplet.query_image, negative_text))

    # consistent with the query text, visually discrepant from the query image
    for i in range(plan.image_aug_count):
        description = client.describe(triplet.query_image, triplet.query_text)
        add(CandidateKind.IMAGE_AUG_NEGATIVE, client.generate_image(f"{description} (variant {i})"))

    for _ in range(plan.identity_count):
        add(CandidateKind.IDENTITY_NEGATIVE, triplet.query_image)

    while len(candidates) < plan.pool_size:
        description = client.describe(triplet.query_image, triplet.query_text)
        add(
            CandidateKind.DISTRACTOR,
            client.generate_image(f"unrelated to: {description} #{len(candidates)}"),
        )

    return AugmentedSample(
        sample_id=sample_id or triplet.triplet_id or triplet.query_image,
        query=_query_for_triplet(triplet),
        candidates=tuple(candidates),
        provenance=triplet.source.value,
    )


def passthrough_sample(triplet: SourceTriplet, sample_id: str = "") -> AugmentedSample:
    """A plain triplet kept as-is: query plus its original positive only."""
    return AugmentedSample(
        sample_id=sample_id or triplet.triplet_id or triplet.query_image,
        query=_query_for_triplet(triplet),
        candidates=(Candidate(id=0, kind=CandidateKind.POSITIVE, asset=triplet.positive_image),),
        provenance=triplet.source.value,
    )


def apply_plan(
    triplets: Sequence[SourceTriplet],
    plan: AugmentPlan,
    client: GenerationClient,
) -> list[AugmentedSample]:
    """Augment exactly round(ratio * N) triplets, selection fixed by the seed;
    the rest pass through as plain triplets."""
    n = len(triplets)
    count = round(plan.negative_ratio * n)
    chosen = set(random.Random(plan.seed).sample(range(n), count))
    out = []
    for i, triplet in enumerate(triplets):
        sid = triplet.triplet_id or f"t{i:06d}"
        if i in chosen:
            out.append(plan_augmented_sample(triplet, plan, client, sample_id=sid))
        else:
            out.append(passthrough_sample(triplet, sample_id=sid))
    return out


def mix_sources(
    sources: Sequence[Iterable],
    ratio: Sequence[int],
    seed: int = 0,
    on_exhausted: str = "rescale",
) -> Iterator:
    """Deterministically interleave tagged streams at an exact integer ratio.

    Every full window of size sum(ratio) contains exactly ratio[i] items from
    source i, chosen by a credit scheduler (ties broken by the seeded RNG).
    When a source runs dry the remaining ratio is rescaled over the survivors,
    or SourceExhausted is raised under ``on_exhausted="stop"``.
    """
    if len(sources) != len(ratio) or not sources:
        raise ValueError("need one positive ratio entry per source")
    if any(r <= 0 for r in ratio):
        raise ValueError("ratio entries must be positive")
    if on_exhausted not in ("rescale", "stop"):
        raise ValueError("on_exhausted must be 'rescale' or 'stop'")

    rng = random.Random(seed)
    iters = [iter(s) for s in sources]
    weights = list(ratio)
    alive = list(range(len(sources)))

    while alive:
        window_total = sum(weights[i] for i in alive)
        remaining = {i: weights[i] for i in alive}
        credit = {i: 0.0 for i in alive}
        emitted_this_window = False
        for _ in range(window_total):
            eligible = [i for i in alive if remaining[i] > 0]
            if not eligible:
                break
            for i in eligible:
                credit[i] += weights[i] / window_total
            best = max(credit[i] for i in eligible)
            top = [i for i in eligible if credit[i] >= best - 1e-12]
            pick = rng.choice(top)
            try:
                item = next(iters[pick])
            except StopIteration:
                if on_exhausted == "stop":
                    raise SourceExhausted(f"source {pick} exhausted")
                alive.remove(pick)
                break
            credit[pick] -= 1.0
            remaining[pick] -= 1
            emitted_this_window = True
            yield item
        else:
            continue
        if not emitted_this_window and not alive:
            return


def select_in_sample_negatives(
    sample: AugmentedSample, count: int = 3, seed: int = 0
) -> list[int]:
    """Uniform draw without replacement from the non-positive candidates."""
    negatives = sorted(c.id for c in sample.candidates if c.kind is not CandidateKind.POSITIVE)
    if len(negatives) < count:
        raise InsufficientNegatives(
            f"sample {sample.sample_id} has {len(negatives)} negatives, need {count}"
        )
    return sorted(random.Random(seed).sample(negatives, count))
