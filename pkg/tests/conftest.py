import numpy as np
import pytest

from cirfocus.scoring import ToyScorer, ToyScorerParams
from cirfocus.types import AugmentedSample, Candidate, CandidateKind, normalize_query


def random_instance(seed: int, dim: int = 6, max_tokens: int = 8, min_tokens: int = 2):
    """A random inline query + pool + scorer for refinement property tests.

    Token count (image + text) lands in [min_tokens, max_tokens] with at
    least one token per modality.
    """
    rng = np.random.default_rng(seed)
    total = int(rng.integers(max(min_tokens, 2), max_tokens + 1))
    n_i = int(rng.integers(1, total))
    n_t = total - n_i
    query = normalize_query(
        segment_areas=rng.uniform(0.2, 1.0, size=n_i),
        token_surfaces=[f"w{j}" for j in range(n_t)],
        segment_vecs=rng.standard_normal((n_i, dim)),
        token_vecs=rng.standard_normal((n_t, dim)),
    )
    pool_size = int(rng.integers(3, 7))
    pool = tuple(
        Candidate(
            id=i,
            kind=CandidateKind.POSITIVE if i == 0 else CandidateKind.DISTRACTOR,
            vec=rng.standard_normal(dim),
        )
        for i in range(pool_size)
    )
    params = ToyScorerParams(
        w_image=np.eye(dim) + 0.3 * rng.standard_normal((dim, dim)),
        w_text=np.eye(dim) + 0.3 * rng.standard_normal((dim, dim)),
    )
    return query, pool, params


def make_sample(seed: int, **kwargs) -> AugmentedSample:
    query, pool, _ = random_instance(seed, **kwargs)
    return AugmentedSample(sample_id=f"rand-{seed}", query=query, candidates=pool)


@pytest.fixture
def toy_scorer_factory():
    return lambda params: ToyScorer(params)
