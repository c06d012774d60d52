"""Synthetic retrieval universe plus a trainable toy scorer.

The world builds composed queries and candidate pools directly in feature
space over an orthonormal concept basis (first half of the dimensions are
visual concepts, second half textual).  Common-case pools leave a one-
modality shortcut open; hard pools carry the four crafted negative kinds
(text-augmented, image-augmented, identity, plus filler distractors) so that
neither modality alone can win.  The trainable scorer is a pair of linear
projections optimized with a weighted contrastive loss, a ramped in-sample
negative weight, and a distillation anchor to its own initialization.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DivergedLoss, InsufficientNegatives
from .metrics import build_focus_report
from .refinement import RefinementConfig, refine
from .scoring import ToyScorer, ToyScorerParams
from .types import (
    AugmentedSample,
    Candidate,
    CandidateKind,
    FocusReport,
    ImageToken,
    TextToken,
    TokenizedQuery,
)


@dataclass(frozen=True)
class WorldConfig:
    dim: int = 16
    image_tokens: tuple[int, int] = (2, 4)
    text_tokens: tuple[int, int] = (2, 4)
    pool_size: int = 5
    # fraction of common-case samples whose shortcut is the image modality
    beta: float = 1.0
    # how strongly crafted negatives out-match the single modality they target
    shortcut_boost: float = 1.10
    seed: int = 0

    def __post_init__(self):
        if self.dim < 4:
            raise ValueError("dim must be >= 4")
        if self.pool_size < 2:
            raise ValueError("pool_size must be >= 2")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 100
    learning_rate: float = 0.1
    batch_size: int = 64
    contrastive_temperature: float = 0.07
    in_sample_weight_start: float = 0.2
    in_sample_weight_end: float = 2.0
    ramp_fraction: float = 0.15
    distill_temperature: float = 2.0
    distill_weight: float = 1e3
    negative_ratio: float = 0.5
    in_sample_negatives: int = 3
    # initial text-projection scale; small values start the scorer with an
    # image-dominant shortcut, mimicking pretraining on easy data
    text_init_scale: float = 0.02
    teacher_first_kl: bool = False
    eval_interval: int = 40
    eval_hard_count: int = 200
    probe_count: int = 24
    seed: int = 0

    def __post_init__(self):
        if self.contrastive_temperature <= 0 or self.distill_temperature <= 0:
            raise ValueError("temperatures must be positive")
        if not 0.0 < self.ramp_fraction <= 1.0:
            raise ValueError("ramp_fraction must be in (0, 1]")
        if not 0.0 <= self.negative_ratio <= 1.0:
            raise ValueError("negative_ratio must be in [0, 1]")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


class SynthWorld:
    """Deterministic sample factory over a fixed concept basis."""

    TRAIN_STREAM = 0
    HELDOUT_STREAM = 1
    PROBE_STREAM = 2

    def __init__(self, config: WorldConfig):
        self.config = config
        self.n_visual = config.dim // 2
        self.n_textual = config.dim - self.n_visual

    def _visual_concept(self, idx: int) -> np.ndarray:
        v = np.zeros(self.config.dim)
        v[idx] = 1.0
        return v

    def _text_concept(self, idx: int) -> np.ndarray:
        v = np.zeros(self.config.dim)
        v[self.n_visual + idx] = 1.0
        return v

    def make_sample(self, stream: int, index: int, hard_fraction: float) -> AugmentedSample:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, stream, index])
        hard = bool(rng.random() < hard_fraction)

        k_i = int(rng.integers(cfg.image_tokens[0], cfg.image_tokens[1] + 1))
        k_t = int(rng.integers(cfg.text_tokens[0], cfg.text_tokens[1] + 1))
        visual = rng.choice(self.n_visual, size=k_i, replace=False)
        textual = rng.choice(self.n_textual, size=k_t, replace=False)
        areas = rng.uniform(0.5, 1.5, size=k_i)
        alpha = areas / areas.sum()

        img_vec = _unit(sum(alpha[i] * self._visual_concept(visual[i]) for i in range(k_i)))
        txt_vec = _unit(sum(self._text_concept(t) for t in textual))

        other_visual = [c for c in range(self.n_visual) if c not in set(visual)]
        other_textual = [c for c in range(self.n_textual) if c not in set(textual)]
        alt_img = _unit(
            sum(self._visual_concept(c) for c in rng.choice(other_visual, size=min(2, len(other_visual)), replace=False))
        )
        alt_txt = self._text_concept(int(rng.choice(other_textual)))

        positive = img_vec + txt_vec
        pool: list[tuple[CandidateKind, np.ndarray]] = [(CandidateKind.POSITIVE, positive)]
        if hard:
            pool.append((CandidateKind.TEXT_AUG_NEGATIVE, cfg.shortcut_boost * img_vec + alt_txt))
            pool.append((CandidateKind.IMAGE_AUG_NEGATIVE, alt_img + cfg.shortcut_boost * txt_vec))
            pool.append((CandidateKind.IDENTITY_NEGATIVE, img_vec.copy()))
        else:
            image_shortcut = bool(rng.random() < cfg.beta)
            for _ in range(cfg.pool_size - 1):
                if image_shortcut:
                    # negatives share the text semantics: only the image decides
                    off = _unit(
                        sum(self._visual_concept(c) for c in rng.choice(other_visual, size=min(2, len(other_visual)), replace=False))
                        + 0.1 * rng.standard_normal(cfg.dim)
                    )
                    pool.append((CandidateKind.DISTRACTOR, off + txt_vec))
                else:
                    off_t = self._text_concept(int(rng.choice(other_textual)))
                    pool.append((CandidateKind.DISTRACTOR, img_vec + off_t))
        while len(pool) < cfg.pool_size:
            noise = _unit(rng.standard_normal(cfg.dim))
            pool.append((CandidateKind.DISTRACTOR, noise))

        order = rng.permutation(len(pool))
        candidates = tuple(
            Candidate(id=cid, kind=pool[src][0], vec=pool[src][1])
            for cid, src in enumerate(order)
        )

        image_tokens = tuple(
            ImageToken(id=i, area_weight=float(alpha[i]), vec=self._visual_concept(visual[i]))
            for i in range(k_i)
        )
        text_tokens = tuple(
            TextToken(id=j, surface=f"w{textual[j]}", vec=self._text_concept(textual[j]))
            for j in range(k_t)
        )
        return AugmentedSample(
            sample_id=f"s{stream}-{index:06d}",
            query=TokenizedQuery(
                image_tokens=image_tokens,
                text_tokens=text_tokens,
                text=" ".join(t.surface for t in text_tokens),
            ),
            candidates=candidates,
            provenance="hard" if hard else "common",
        )

    def samples(self, stream: int, count: int, hard_fraction: float) -> list[AugmentedSample]:
        return [self.make_sample(stream, i, hard_fraction) for i in range(count)]

    def training_samples(self, count: int, hard_fraction: float) -> list[AugmentedSample]:
        return self.samples(self.TRAIN_STREAM, count, hard_fraction)

    def heldout_hard(self, count: int) -> list[AugmentedSample]:
        return self.samples(self.HELDOUT_STREAM, count, 1.0)

    def probe_samples(self, count: int, hard_fraction: float = 1.0) -> list[AugmentedSample]:
        return self.samples(self.PROBE_STREAM, count, hard_fraction)


def generate_world(
    config: WorldConfig, count: int, hard_fraction: float = 0.5, stream: int = 0
) -> list[AugmentedSample]:
    """Convenience wrapper emitting one deterministic stream of samples."""
    return SynthWorld(config).samples(stream, count, hard_fraction)


# ---------------------------------------------------------------------------
# losses


def contrastive_loss(
    scores: Sequence[float],
    positive_index: int,
    temperature: float,
    per_candidate_weights: Optional[Sequence[float]] = None,
) -> float:
    """Weighted InfoNCE: -log( e^{s+/T} / (e^{s+/T} + sum_j w_j e^{s_j/T}) ).

    The positive's own weight is fixed at 1; weights apply to negatives only.
    """
    s = np.asarray(scores, dtype=float)
    z = s / temperature
    if per_candidate_weights is None:
        w = np.ones_like(z)
    else:
        w = np.asarray(per_candidate_weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("negative weights are not allowed")
    w = w.copy()
    w[positive_index] = 1.0
    logw = np.where(w > 0, np.log(np.maximum(w, 1e-300)), -np.inf)
    terms = z + logw
    m = np.max(terms)
    lse = m + math.log(np.exp(terms - m).sum())
    return float(lse - z[positive_index])


def _contrastive_grad(z: np.ndarray, positive_index: int, w: np.ndarray, temperature: float) -> np.ndarray:
    w = w.copy()
    w[positive_index] = 1.0
    terms = z + np.where(w > 0, np.log(np.maximum(w, 1e-300)), -np.inf)
    m = np.max(terms)
    p = np.exp(terms - m)
    p /= p.sum()
    grad = p / temperature
    grad[positive_index] -= 1.0 / temperature
    return grad


def in_sample_weight(step: int, total_steps: int, config: TrainingConfig) -> float:
    """Linear ramp from the start weight to the end weight over the first
    ``ramp_fraction`` of the run, then constant."""
    if not 0 <= step <= max(total_steps, 0):
        raise ValueError("step must satisfy 0 <= step <= total_steps")
    ramp_steps = config.ramp_fraction * total_steps
    if ramp_steps <= 0:
        return config.in_sample_weight_end
    frac = min(1.0, step / ramp_steps)
    return config.in_sample_weight_start + frac * (
        config.in_sample_weight_end - config.in_sample_weight_start
    )


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def distillation_loss(
    student_logits: Sequence[float],
    teacher_logits: Sequence[float],
    tau: float,
    teacher_first: bool = False,
) -> float:
    """tau^2 * KL between softened score distributions.

    Default argument order is student-first; ``teacher_first`` switches to the
    conventional KL(teacher || student) direction.
    """
    s = np.asarray(student_logits, dtype=float)
    t = np.asarray(teacher_logits, dtype=float)
    if s.shape != t.shape:
        raise ValueError("logit vectors must have equal length")
    a = _softmax(s / tau)
    b = _softmax(t / tau)
    if teacher_first:
        a, b = b, a
    return float(tau * tau * np.sum(a * np.log(a / b)))


def _distillation_grad(
    student: np.ndarray, teacher: np.ndarray, tau: float, teacher_first: bool
) -> np.ndarray:
    a = _softmax(student / tau)
    b = _softmax(teacher / tau)
    if teacher_first:
        # d/ds of tau^2 * sum b log(b/a)
        return tau * (a - b)
    log_ratio = np.log(a / b)
    kl = float(np.sum(a * log_ratio))
    return tau * a * (log_ratio - kl)


# ---------------------------------------------------------------------------
# trainer


@dataclass
class BatchItem:
    """One training example flattened into arrays: composed query inputs,
    candidate matrix (positive first), and per-candidate weights."""

    e_img: np.ndarray
    e_txt: np.ndarray
    cand: np.ndarray  # (m, d), row 0 is the positive
    weights: np.ndarray  # (m,), weights for negatives; index 0 ignored


def _query_embeddings(sample: AugmentedSample) -> tuple[np.ndarray, np.ndarray]:
    q = sample.query
    e_img = sum(t.area_weight * t.vec for t in q.image_tokens)
    e_txt = sum(t.vec for t in q.text_tokens) / q.n_text
    return e_img, e_txt


def build_batch_items(
    batch: Sequence[AugmentedSample],
    in_sample_w: float,
    n_in_sample: int,
    seed_parts: tuple[int, ...],
) -> list[BatchItem]:
    from .augment import select_in_sample_negatives

    positives = []
    for sample in batch:
        pos = sample.candidate_by_id(sample.positive_id())
        positives.append(pos.vec)
    items = []
    for b, sample in enumerate(batch):
        e_img, e_txt = _query_embeddings(sample)
        neg_seed = hash(seed_parts + (b,))
        neg_ids = select_in_sample_negatives(sample, n_in_sample, seed=neg_seed)
        rows = [positives[b]]
        weights = [1.0]
        for nid in neg_ids:
            rows.append(sample.candidate_by_id(nid).vec)
            weights.append(in_sample_w)
        for other, vec in enumerate(positives):
            if other != b:
                rows.append(vec)
                weights.append(1.0)
        items.append(
            BatchItem(
                e_img=e_img,
                e_txt=e_txt,
                cand=np.stack(rows),
                weights=np.asarray(weights),
            )
        )
    return items


def batch_loss_and_grads(
    params: ToyScorerParams,
    items: Sequence[BatchItem],
    teacher: ToyScorerParams,
    config: TrainingConfig,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean total loss over the batch and its analytic gradients."""
    d = params.dim
    g_wi = np.zeros((d, d))
    g_wt = np.zeros((d, d))
    total = 0.0
    for item in items:
        q = params.w_image @ item.e_img + params.w_text @ item.e_txt
        nq = np.linalg.norm(q)
        q_hat = q / nq
        s = item.cand @ q_hat

        q_t = teacher.w_image @ item.e_img + teacher.w_text @ item.e_txt
        s_t = item.cand @ (q_t / np.linalg.norm(q_t))

        z = s / config.contrastive_temperature
        lc = contrastive_loss(s, 0, config.contrastive_temperature, item.weights)
        ld = distillation_loss(s, s_t, config.distill_temperature, config.teacher_first_kl)
        total += lc + config.distill_weight * ld

        ds = _contrastive_grad(z, 0, item.weights.copy(), config.contrastive_temperature)
        ds += config.distill_weight * _distillation_grad(
            s, s_t, config.distill_temperature, config.teacher_first_kl
        )
        dq_hat = item.cand.T @ ds
        dq = (dq_hat - q_hat * (q_hat @ dq_hat)) / nq
        g_wi += np.outer(dq, item.e_img)
        g_wt += np.outer(dq, item.e_txt)
    n = len(items)
    return total / n, g_wi / n, g_wt / n


def finite_difference_check(
    params: ToyScorerParams,
    items: Sequence[BatchItem],
    teacher: ToyScorerParams,
    config: TrainingConfig,
    h: float = 1e-5,
) -> float:
    """Max per-parameter relative error between analytic gradients and
    central differences of the batch loss."""

    def loss_at(wi: np.ndarray, wt: np.ndarray) -> float:
        p = ToyScorerParams(w_image=wi, w_text=wt)
        value, _, _ = batch_loss_and_grads(p, items, teacher, config)
        return value

    _, g_wi, g_wt = batch_loss_and_grads(params, items, teacher, config)
    # near-zero entries are judged against the overall gradient scale, so
    # truncation noise on flat directions does not dominate the check
    scale = max(np.abs(g_wi).max(), np.abs(g_wt).max(), 1e-6)
    worst = 0.0
    d = params.dim
    for which, analytic in (("image", g_wi), ("text", g_wt)):
        base_i = params.w_image.copy()
        base_t = params.w_text.copy()
        target = base_i if which == "image" else base_t
        for r in range(d):
            for c in range(d):
                orig = target[r, c]
                target[r, c] = orig + h
                plus = loss_at(base_i, base_t)
                target[r, c] = orig - h
                minus = loss_at(base_i, base_t)
                target[r, c] = orig
                numeric = (plus - minus) / (2 * h)
                a = analytic[r, c]
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3 * scale)
                worst = max(worst, rel)
    return worst


@dataclass
class TrainingHistory:
    records: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        import json

        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records) + "\n"


def initial_params(dim: int, text_init_scale: float) -> ToyScorerParams:
    return ToyScorerParams(w_image=np.eye(dim), w_text=text_init_scale * np.eye(dim))


def hard_set_recall_at_1(samples: Sequence[AugmentedSample], params: ToyScorerParams) -> float:
    from .refinement import _check_inputs  # noqa: F401 - sanity only
    from .scoring import rank
    from .types import PruneState

    scorer = ToyScorer(params)
    hits = 0
    for sample in samples:
        s0 = PruneState.initial(sample.query.total_tokens)
        ranking = rank(scorer, sample.query, s0, sample.candidates)
        if ranking.top1 == sample.positive_id():
            hits += 1
    return hits / len(samples)


def probe_focus(
    samples: Sequence[AugmentedSample],
    params: ToyScorerParams,
    config: RefinementConfig = RefinementConfig(),
) -> list[FocusReport]:
    scorer = ToyScorer(params)
    reports = []
    for sample in samples:
        fss, trace = refine(sample.query, sample.candidates, scorer, config)
        reports.append(build_focus_report(sample.sample_id, sample.query, fss, trace))
    return reports


def aggregate_imbalance(reports: Sequence[FocusReport]) -> float:
    mean_r_i = sum(r.r_image for r in reports) / len(reports)
    return abs(2 * mean_r_i - 1.0)


def single_modality_rate(reports: Sequence[FocusReport]) -> float:
    """Fraction of probed queries with at least one final state confined to a
    single modality (the shortcut signature)."""
    flagged = 0
    for rep in reports:
        if any(e.p_image == 0.0 or e.p_text == 0.0 for e in rep.entries):
            flagged += 1
    return flagged / len(reports)


def train_toy_scorer(
    world: SynthWorld, config: TrainingConfig
) -> tuple[ToyScorerParams, TrainingHistory]:
    """SGD on the projection pair; the initial parameters serve as the
    distillation teacher throughout."""
    dim = world.config.dim
    params = initial_params(dim, config.text_init_scale)
    teacher = initial_params(dim, config.text_init_scale)

    samples = world.training_samples(config.steps * config.batch_size, config.negative_ratio)
    heldout = world.heldout_hard(config.eval_hard_count)
    probes = world.probe_samples(config.probe_count, hard_fraction=1.0)
    history = TrainingHistory()

    def evaluate(step: int, loss: Optional[float]) -> None:
        reports = probe_focus(probes, params)
        history.records.append(
            {
                "step": step,
                "loss": loss,
                "rs_at_1": hard_set_recall_at_1(heldout, params),
                "imbalance": aggregate_imbalance(reports),
            }
        )

    # loss is null before the first update
    evaluate(0, None)
    for step in range(config.steps):
        batch = samples[step * config.batch_size : (step + 1) * config.batch_size]
        w_in = in_sample_weight(step, config.steps, config)
        items = build_batch_items(
            batch, w_in, config.in_sample_negatives, (config.seed, step)
        )
        loss, g_wi, g_wt = batch_loss_and_grads(params, items, teacher, config)
        if not math.isfinite(loss):
            raise DivergedLoss(f"loss became {loss} at step {step}")
        params = ToyScorerParams(
            w_image=params.w_image - config.learning_rate * g_wi,
            w_text=params.w_text - config.learning_rate * g_wt,
        )
        if (step + 1) % config.eval_interval == 0 or step + 1 == config.steps:
            evaluate(step + 1, loss)
    if config.steps == 0:
        pass  # the step-0 record already captures the untouched params
    return params, history


def run_ratio_sweep(
    world_config: WorldConfig,
    training_config: TrainingConfig,
    ratios: Sequence[float],
) -> dict[float, TrainingHistory]:
    """Train one scorer per negative ratio, all else held fixed."""
    world = SynthWorld(world_config)
    out: dict[float, TrainingHistory] = {}
    for ratio in ratios:
        cfg = replace(training_config, negative_ratio=ratio)
        _, history = train_toy_scorer(world, cfg)
        out[ratio] = history
    return out
