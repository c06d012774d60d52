"""Golden-transcript conformance checks for scorer-protocol endpoints.

Each check sends fixed requests and validates framing, arity, finiteness and
determinism of the replies.  Endpoints that pass here are safe to plug into
the refinement engine.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ProtocolViolation, TransportError
from .protocol import PROTOCOL_VERSION, ProtocolClient, validate_score_response


def _score_request(sample_id: str, n_candidates: int, *, all_text_inactive=False) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "type": "score",
        "sample_id": sample_id,
        "query": {
            "image": [
                {"id": 0, "asset": "asset://img/a.png", "mask": "asset://mask/a0.png", "active": True},
                {"id": 1, "asset": "asset://img/a.png", "mask": "asset://mask/a1.png", "active": True},
            ],
            "text": [
                {"id": 0, "surface": "red", "active": not all_text_inactive},
                {"id": 1, "surface": "car", "active": not all_text_inactive},
            ],
        },
        "candidates": [
            {"id": i, "asset": f"asset://cand/{i}.png"} for i in range(n_candidates)
        ],
    }


@dataclass
class CheckResult:
    name: str
    passed: bool
    message: str = ""


def run_protocol_check(client: ProtocolClient) -> list[CheckResult]:
    results: list[CheckResult] = []

    def check(name: str, fn) -> None:
        try:
            fn()
        except (ProtocolViolation, TransportError, AssertionError) as exc:
            results.append(CheckResult(name, False, str(exc)))
        else:
            results.append(CheckResult(name, True))

    def arity_two():
        msg = client.request(_score_request("pc-arity", 2))
        validate_score_response(msg, "pc-arity", 2)

    def arity_one():
        msg = client.request(_score_request("pc-single", 1))
        validate_score_response(msg, "pc-single", 1)

    def masked_text():
        msg = client.request(_score_request("pc-masked", 3, all_text_inactive=True))
        validate_score_response(msg, "pc-masked", 3)

    def determinism():
        a = validate_score_response(client.request(_score_request("pc-det", 4)), "pc-det", 4)
        b = validate_score_response(client.request(_score_request("pc-det", 4)), "pc-det", 4)
        assert a == b, f"same request, different scores: {a} vs {b}"

    def framing():
        msg = client.request(_score_request("pc-framing", 2))
        validate_score_response(msg, "pc-framing", 2)
        stray = client.transport.poll_line(0.25)
        assert stray is None, f"stray extra line after response: {stray!r}"

    def ordering():
        first = client.request(_score_request("pc-order-a", 2))
        second = client.request(_score_request("pc-order-b", 2))
        validate_score_response(first, "pc-order-a", 2)
        validate_score_response(second, "pc-order-b", 2)

    check("arity-two-candidates", arity_two)
    check("arity-single-candidate", arity_one)
    check("all-text-masked", masked_text)
    check("determinism", determinism)
    check("one-line-per-request", framing)
    check("order-preserved", ordering)
    return results


def format_results(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        suffix = f": {r.message}" if r.message else ""
        lines.append(f"{status} {r.name}{suffix}")
    overall = "PASS" if all(r.passed for r in results) else "FAIL"
    lines.append(f"{overall} ({sum(r.passed for r in results)}/{len(results)} checks)")
    return "\n".join(lines)
