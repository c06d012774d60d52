"""Acceptance gate: one test per headline guarantee, one PASS/FAIL line each."""
import io
import json
import math
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from cirfocus import benchfile
from cirfocus.cli import main as cli_main
from cirfocus.metrics import focus_balance_ratios, focus_imbalance
from cirfocus.refinement import (
    RefinementConfig,
    exhaustive_minimal_states,
    predicted_inference_budget,
    refine,
)
from cirfocus.scoring import ToyScorer, rank, retrieval_equal
from cirfocus.synthworld import (
    SynthWorld,
    TrainingConfig,
    WorldConfig,
    build_batch_items,
    contrastive_loss,
    distillation_loss,
    finite_difference_check,
    in_sample_weight,
    initial_params,
    probe_focus,
    run_ratio_sweep,
    single_modality_rate,
    train_toy_scorer,
)
from cirfocus.types import FinalStateSet, PruneState, ValidityMode, normalize_query

from conftest import random_instance


_capsys = None


@pytest.fixture(autouse=True)
def _unbuffered_reports(capsys):
    # route the PASS/FAIL lines around pytest's output capture
    global _capsys
    _capsys = capsys
    yield
    _capsys = None


def report(name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    line = f"ACCEPTANCE {status}: {name}{suffix}"
    if _capsys is not None:
        with _capsys.disabled():
            print(line)
    else:
        print(line)
    assert ok, f"{name}{suffix}"


class TestAcceptance:
    def test_oracle_equivalence(self):
        """refine() == exhaustive oracle on >= 200 random small instances."""
        t0 = time.time()
        mismatches = 0
        trials = 0
        for seed in range(110):
            query, pool, params = random_instance(seed, max_tokens=8)
            n = query.total_tokens
            for mode in (ValidityMode.TOP1, ValidityMode.FULL_ORDER):
                fss, _ = refine(
                    query, pool, ToyScorer(params),
                    RefinementConfig(beam_width=2**n, mode=mode),
                )
                oracle = exhaustive_minimal_states(query, pool, ToyScorer(params), mode)
                trials += 1
                if fss.masks() != oracle.masks():
                    mismatches += 1
        elapsed = time.time() - t0
        report(
            "oracle-equivalence",
            trials >= 200 and mismatches == 0 and elapsed < 60,
            f"{trials} trials, {mismatches} mismatches, {elapsed:.1f}s",
        )

    def test_validity_minimality(self):
        """Every returned state is retrieval-equal to s0 and locally minimal,
        on 100 mixed instances with n up to 26."""
        violations = 0
        for seed in range(100):
            query, pool, params = random_instance(seed, max_tokens=26, min_tokens=4)
            scorer = ToyScorer(params)
            config = RefinementConfig()
            fss, _ = refine(query, pool, scorer, config)
            baseline = rank(scorer, query, PruneState.initial(query.total_tokens), pool)
            for state in fss.states:
                if not retrieval_equal(rank(scorer, query, state, pool), baseline, config.mode):
                    violations += 1
                for idx in state.preserved():
                    child = state.remove(idx)
                    if child.mask == 0:
                        continue
                    if retrieval_equal(rank(scorer, query, child, pool), baseline, config.mode):
                        violations += 1
        report("validity-minimality", violations == 0, f"{violations} violations")

    def test_budget_bound(self):
        """Measured validations never exceed w*n*(n+1)/2; the CLI bound
        command prints 1625 for (15, 10, 5)."""
        over = 0
        for seed in range(60):
            query, pool, params = random_instance(seed, max_tokens=12)
            for w in (1, 2, 5):
                _, trace = refine(
                    query, pool, ToyScorer(params), RefinementConfig(beam_width=w)
                )
                if trace.validations > predicted_inference_budget(query.n_image, query.n_text, w):
                    over += 1
        import contextlib

        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = cli_main(["bound", "--ni", "15", "--nt", "10", "--w", "5"])
        printed = buf.getvalue().strip()
        report(
            "budget-bound",
            over == 0 and code == 0 and printed == "1625",
            f"{over} overruns, cmd_bound printed {printed}",
        )

    def test_metric_identities(self):
        """r_I + r_T = 1 +- 1e-9 on 10^4 random final-state sets; imbalance in
        [0, 1]; single-modality focus gives imbalance exactly 1."""
        rng = np.random.default_rng(0)
        bad = 0
        query = normalize_query([0.5, 0.3, 0.2], ["a", "b", "c"])
        n = query.total_tokens
        for _ in range(10_000):
            masks = set()
            for _ in range(int(rng.integers(1, 5))):
                masks.add(int(rng.integers(1, 1 << n)))
            fss = FinalStateSet(
                states=tuple(PruneState(mask=m, total=n) for m in sorted(masks)),
                margins=tuple(0.0 for _ in masks),
            )
            r_i, r_t = focus_balance_ratios(fss, query)
            imb = focus_imbalance(r_i, r_t)
            if abs(r_i + r_t - 1.0) > 1e-9 or not 0.0 <= imb <= 1.0:
                bad += 1
        image_only = FinalStateSet(
            states=(PruneState.from_indices([0, 1], n),), margins=(0.0,)
        )
        text_only = FinalStateSet(
            states=(PruneState.from_indices([3, 4], n),), margins=(0.0,)
        )
        extremes_ok = all(
            focus_imbalance(*focus_balance_ratios(f, query)) == 1.0
            for f in (image_only, text_only)
        )
        report("metric-identities", bad == 0 and extremes_ok, f"{bad} bad sets")

    def test_synthetic_trend(self):
        """Negative-ratio sweep: Rs@1 gap >= 10 points, imbalance drops,
        Rs@1 non-decreasing within 2 points, under 10 minutes."""
        t0 = time.time()
        ratios = [0.0, 0.25, 0.5, 0.75, 1.0]
        sweep = run_ratio_sweep(WorldConfig(), TrainingConfig(), ratios)
        finals = {r: sweep[r].records[-1] for r in ratios}
        rs = [finals[r]["rs_at_1"] for r in ratios]
        gap_ok = rs[-1] - rs[0] >= 0.10
        imb_ok = finals[1.0]["imbalance"] < finals[0.0]["imbalance"]
        monotone_ok = all(b >= a - 0.02 for a, b in zip(rs, rs[1:]))
        elapsed = time.time() - t0
        report(
            "synthetic-trend",
            gap_ok and imb_ok and monotone_ok and elapsed < 600,
            f"Rs@1 {['%.2f' % v for v in rs]}, imbalance "
            f"{finals[0.0]['imbalance']:.2f}->{finals[1.0]['imbalance']:.2f}, {elapsed:.0f}s",
        )

    def test_shortcut_emergence(self):
        """A beta=1 world trained at ratio 0 yields single-modality final
        states on >= 30% of 100 probed queries."""
        world = SynthWorld(WorldConfig(beta=1.0))
        params, _ = train_toy_scorer(world, TrainingConfig(negative_ratio=0.0))
        probes = world.probe_samples(100, hard_fraction=0.0)
        rate = single_modality_rate(probe_focus(probes, params))
        report("shortcut-emergence", rate >= 0.30, f"rate {rate:.2f}")

    def test_loss_verification(self):
        """Gradient check < 1e-4 on 50 random batches; contrastive = ln(n)
        for uniform scores; distillation 0 for identical logits; ramp
        endpoints exactly 0.2 and 2.0."""
        world = SynthWorld(WorldConfig())
        cfg = TrainingConfig()
        worst = 0.0
        for trial in range(50):
            rng = np.random.default_rng(trial)
            samples = [world.make_sample(4, trial * 3 + i, 0.5) for i in range(3)]
            items = build_batch_items(samples, float(rng.uniform(0.2, 2.0)), 3, (trial,))
            params = type(initial_params(16, 0.02))(
                w_image=np.eye(16) + 0.05 * rng.standard_normal((16, 16)),
                w_text=0.02 * np.eye(16) + 0.05 * rng.standard_normal((16, 16)),
            )
            worst = max(worst, finite_difference_check(params, items, initial_params(16, 0.02), cfg))
        ln_ok = all(
            abs(contrastive_loss([0.3] * n, 0, 0.07) - math.log(n)) <= 1e-12
            for n in (2, 5, 64)
        )
        kl_ok = distillation_loss([1.0, 2.0], [1.0, 2.0], 2.0) == 0.0
        ramp_ok = (
            in_sample_weight(0, 100, cfg) == 0.2
            and in_sample_weight(100, 100, cfg) == 2.0
        )
        report(
            "loss-verification",
            worst < 1e-4 and ln_ok and kl_ok and ramp_ok,
            f"max fd error {worst:.2e}",
        )

    def test_determinism_and_formats(self, tmp_path):
        """Byte-identical seeded CLI runs; lossless benchmark round trips;
        default pools carry 5 local candidates."""
        corpus = tmp_path / "corpus.jsonl"
        samples = SynthWorld(WorldConfig(seed=5)).samples(0, 8, 0.5)
        with open(corpus, "w") as fh:
            benchfile.write_benchmark(fh, samples)
        triplets = tmp_path / "trips.jsonl"
        with open(triplets, "w") as fh:
            for i in range(6):
                fh.write(json.dumps({
                    "query_image": f"asset://img/{i}.png",
                    "query_text": "add a hat",
                    "positive_image": f"asset://pos/{i}.png",
                    "source": "editing_driven" if i % 2 else "similarity_paired",
                }) + "\n")
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"training": {"batch_size": 8, "eval_hard_count": 20, "probe_count": 4}}))

        identical = True
        for cmd in (
            lambda out: cli_main(["refine", "--input", str(corpus), "--out", str(out)]),
            lambda out: cli_main(["augment", "--triplets", str(triplets), "--seed", "7", "--out", str(out)]),
        ):
            a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
            assert cmd(a) == 0 and cmd(b) == 0
            identical &= a.read_bytes() == b.read_bytes()
        for out in (tmp_path / "sa", tmp_path / "sb"):
            assert cli_main([
                "synth-demo", "--steps", "3", "--ratios", "0,1.0",
                "--config", str(cfg), "--seed", "1", "--out", str(out),
            ]) == 0
        identical &= (
            (tmp_path / "sa" / "sweep.json").read_bytes()
            == (tmp_path / "sb" / "sweep.json").read_bytes()
        )

        buf = io.StringIO()
        benchfile.write_benchmark(buf, samples)
        buf.seek(0)
        _, back = benchfile.read_benchmark(buf)
        roundtrip_ok = [benchfile.sample_to_dict(s) for s in back] == [
            benchfile.sample_to_dict(s) for s in samples
        ]

        aug = tmp_path / "a.jsonl"  # last augment output
        with open(aug) as fh:
            _, aug_samples = benchfile.read_benchmark(fh)
        pools_ok = all(len(s.candidates) == 5 for s in aug_samples)

        report(
            "determinism-and-formats",
            identical and roundtrip_ok and pools_ok,
            f"identical={identical} roundtrip={roundtrip_ok} pools5={pools_ok}",
        )
