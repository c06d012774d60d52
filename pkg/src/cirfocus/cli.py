"""Command-line front end.

Subcommands: refine, evaluate, augment, synth-demo, bound, protocol-check.
Exit codes: 0 success, 2 input error, 3 backend/scorer error, 4 result
self-check violation.  Outputs are deterministic given the seed; the
FBCIR_SEED environment variable supplies a default seed.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import benchfile
from .augment import AugmentPlan, MockGenerationClient, RemoteGenerationClient, apply_plan
from .errors import CirFocusError, TransportError
from .metrics import build_evaluation_report, build_focus_report
from .protocol import ConnectionPool, ProtocolClient, RemoteScorer, open_transport
from .protocolcheck import format_results, run_protocol_check
from .refinement import RefinementConfig, predicted_inference_budget, refine
from .scoring import ToyScorer, ToyScorerParams, rank
from .synthworld import SynthWorld, TrainingConfig, WorldConfig, run_ratio_sweep
from .types import PruneState, ValidityMode, focus_report_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_SELF_CHECK = 4


def _default_seed(args_seed: int | None) -> int:
    if args_seed is not None:
        return args_seed
    env = os.environ.get("FBCIR_SEED")
    return int(env) if env else 0


@contextlib.contextmanager
def _open_out(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _load_samples(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return benchfile.read_benchmark(fh)


def _make_scorer_pool(spec: str, mode: str, parallel: int):
    """Returns (scorer_factory, closer).  Inline corpora use the toy scorer;
    asset corpora need a remote endpoint."""
    if spec == "toy":
        if mode != "inline":
            raise benchfile.BenchFileError(
                "toy scorer needs an inline corpus with feature vectors"
            )
        return (lambda dim: ToyScorer(ToyScorerParams.identity(dim))), (lambda: None)
    if spec.startswith("remote:"):
        endpoint = spec[len("remote:"):]
        pool = ConnectionPool(endpoint, size=max(1, parallel))
        return (lambda dim: RemoteScorer(pool.acquire())), pool.close
    raise benchfile.BenchFileError(f"unknown scorer {spec!r} (use toy or remote:<endpoint>)")


def _sample_dim(sample) -> int:
    for t in sample.query.image_tokens:
        if t.vec is not None:
            return len(t.vec)
    return 0


def cmd_refine(args) -> int:
    try:
        mode, samples = _load_samples(args.input)
    except (OSError, benchfile.BenchFileError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        scorer_factory, closer = _make_scorer_pool(args.scorer, mode, args.parallel)
    except benchfile.BenchFileError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TransportError as exc:
        print(f"scorer failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    config = RefinementConfig(
        beam_width=args.beam,
        mode=ValidityMode(args.mode),
    )

    def run_one(sample):
        scorer = scorer_factory(_sample_dim(sample))
        fss, trace = refine(sample.query, sample.candidates, scorer, config)
        return build_focus_report(sample.sample_id, sample.query, fss, trace), sample

    code = EXIT_OK
    try:
        with _open_out(args.out) as out:
            if args.parallel > 1:
                executor = ThreadPoolExecutor(max_workers=args.parallel)
                results = executor.map(run_one, samples)
            else:
                results = map(run_one, samples)
            for report, sample in results:
                if abs(report.r_image + report.r_text - 1.0) > 1e-9:
                    print(
                        f"self-check failed on {sample.sample_id}: "
                        f"r_I + r_T = {report.r_image + report.r_text}",
                        file=sys.stderr,
                    )
                    code = EXIT_SELF_CHECK
                out.write(json.dumps(focus_report_json(report, sample.query), sort_keys=True) + "\n")
                out.flush()
    except (TransportError, CirFocusError) as exc:
        print(f"scorer failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    finally:
        closer()
    return code


def cmd_evaluate(args) -> int:
    try:
        mode, samples = _load_samples(args.input)
        ks = tuple(int(k) for k in args.k.split(","))
    except (OSError, ValueError, benchfile.BenchFileError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        scorer_factory, closer = _make_scorer_pool(args.scorer, mode, 1)
    except benchfile.BenchFileError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TransportError as exc:
        print(f"scorer failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    config = RefinementConfig(beam_width=args.beam)
    try:
        rankings = {}
        reports = {}
        for sample in samples:
            scorer = scorer_factory(_sample_dim(sample))
            s0 = PruneState.initial(sample.query.total_tokens)
            rankings[sample.sample_id] = rank(scorer, sample.query, s0, sample.candidates)
            fss, trace = refine(sample.query, sample.candidates, scorer, config)
            reports[sample.sample_id] = build_focus_report(sample.sample_id, sample.query, fss, trace)
        report = build_evaluation_report(samples, rankings, reports, ks)
    except (TransportError, CirFocusError) as exc:
        print(f"scorer failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    finally:
        closer()

    with _open_out(args.out) as out:
        out.write(json.dumps(report.to_json_dict(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_augment(args) -> int:
    seed = _default_seed(args.seed)
    try:
        with open(args.triplets, "r", encoding="utf-8") as fh:
            triplets = benchfile.read_triplets(fh)
        overrides = {}
        if args.plan:
            with open(args.plan, "r", encoding="utf-8") as fh:
                overrides = json.load(fh)
        plan = AugmentPlan(seed=seed, **overrides)
    except (OSError, TypeError, ValueError, benchfile.BenchFileError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    try:
        if args.client == "mock":
            client = MockGenerationClient(seed=seed)
        elif args.client.startswith("remote:"):
            endpoint = args.client[len("remote:"):]
            client = RemoteGenerationClient(ProtocolClient(open_transport(endpoint)))
        else:
            print(f"input error: unknown client {args.client!r}", file=sys.stderr)
            return EXIT_INPUT
        samples = apply_plan(triplets, plan, client)
    except (TransportError, CirFocusError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    try:
        with _open_out(args.out) as out:
            benchfile.write_benchmark(out, samples)
    except benchfile.BenchFileError as exc:
        print(f"self-check failed: {exc}", file=sys.stderr)
        return EXIT_SELF_CHECK
    return EXIT_OK


def cmd_synth_demo(args) -> int:
    seed = _default_seed(args.seed)
    try:
        overrides = {}
        if args.config:
            with open(args.config, "r", encoding="utf-8") as fh:
                overrides = json.load(fh)
        world_cfg = WorldConfig(seed=seed, **overrides.get("world", {}))
        train_kwargs = dict(overrides.get("training", {}))
        if args.steps is not None:
            train_kwargs["steps"] = args.steps
        train_cfg = TrainingConfig(seed=seed, **train_kwargs)
        ratios = [float(r) for r in args.ratios.split(",")]
    except (OSError, TypeError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    try:
        sweep = run_ratio_sweep(world_cfg, train_cfg, ratios)
    except CirFocusError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    os.makedirs(args.out, exist_ok=True)
    summary = {}
    for ratio, history in sweep.items():
        name = f"history-ratio-{ratio:g}.jsonl"
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
            fh.write(history.to_jsonl())
        final = history.records[-1]
        summary[f"{ratio:g}"] = {
            "rs_at_1": final["rs_at_1"],
            "imbalance": final["imbalance"],
            "history_file": name,
        }
    with open(os.path.join(args.out, "sweep.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_bound(args) -> int:
    print(predicted_inference_budget(args.ni, args.nt, args.w))
    return EXIT_OK


def cmd_protocol_check(args) -> int:
    try:
        client = ProtocolClient(open_transport(args.endpoint), timeout=args.timeout)
    except (ValueError, TransportError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        results = run_protocol_check(client)
    finally:
        client.close()
    print(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_BACKEND


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cirfocus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refine", help="run focus refinement over a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--scorer", default="toy")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--mode", choices=[m.value for m in ValidityMode], default="top1")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="subset recall and imbalance report")
    p.add_argument("--input", required=True)
    p.add_argument("--scorer", default="toy")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--k", default="1,3")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("augment", help="build candidate pools from triplets")
    p.add_argument("--triplets", required=True)
    p.add_argument("--plan", default=None, help="JSON file of plan overrides")
    p.add_argument("--client", default="mock")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth-demo", help="negative-ratio sweep on the synthetic world")
    p.add_argument("--config", default=None, help="JSON file of world/training overrides")
    p.add_argument("--ratios", default="0,0.25,0.5,0.75,1.0")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_demo)

    p = sub.add_parser("bound", help="print the validation budget bound")
    p.add_argument("--ni", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--w", type=int, required=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("protocol-check", help="validate a scorer endpoint")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=cmd_protocol_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
