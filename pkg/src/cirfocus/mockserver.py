"""Deterministic protocol endpoint for tests and demos.

Scores are hash-derived from the request content, so replies are stable
across runs and machines.  Candidate assets of the form ``score=<float>``
short-circuit to that value, which lets fixtures pin exact score tables.
Misbehavior flags exist so conformance checks have something to catch.

Run as ``python -m cirfocus.mockserver [--bad-arity|--nan|--extra-line]``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys

from .protocol import PROTOCOL_VERSION, serve_stream


def _hash_unit(*parts: str) -> float:
    digest = hashlib.sha256("|".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def mock_score(msg: dict) -> list[float]:
    query = msg["query"]
    active_sig = json.dumps(
        {
            "image": [[t["asset"], t["mask"]] for t in query["image"] if t["active"]],
            "text": [t["surface"] for t in query["text"] if t["active"]],
        },
        sort_keys=True,
    )
    scores = []
    for cand in msg["candidates"]:
        asset = cand.get("asset", "")
        if asset.startswith("score="):
            scores.append(float(asset[len("score="):]))
        else:
            scores.append(_hash_unit(active_sig, asset))
    return scores


def mock_generate(msg: dict) -> list[str]:
    op = msg.get("op", "")
    sig = json.dumps(msg.get("args", {}), sort_keys=True)
    digest = hashlib.sha256(f"{op}|{sig}".encode("utf-8")).hexdigest()[:12]
    count = int(msg.get("count", 1))
    return [f"mock://{op}/{digest}-{i}" for i in range(count)]


class MockHandler:
    def __init__(self, bad_arity=False, nan=False):
        self.bad_arity = bad_arity
        self.nan = nan

    def __call__(self, msg: dict) -> dict:
        mtype = msg.get("type")
        sample_id = msg.get("sample_id", "")
        if mtype == "score":
            scores = mock_score(msg)
            if self.bad_arity and scores:
                scores = scores[:-1]
            if self.nan and scores:
                scores[0] = float("nan")
            return {
                "v": PROTOCOL_VERSION,
                "type": "scores",
                "sample_id": sample_id,
                "scores": scores,
            }
        if mtype == "generate":
            return {
                "v": PROTOCOL_VERSION,
                "type": "generated",
                "sample_id": sample_id,
                "outputs": mock_generate(msg),
            }
        raise ValueError(f"unknown request type {mtype!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bad-arity", action="store_true", help="drop one score per reply")
    parser.add_argument("--nan", action="store_true", help="emit a NaN score")
    parser.add_argument("--extra-line", action="store_true", help="emit a stray extra line")
    args = parser.parse_args(argv)

    handler = MockHandler(bad_arity=args.bad_arity, nan=args.nan)

    def wrapped(msg: dict) -> dict:
        reply = handler(msg)
        if args.extra_line:
            sys.stdout.write(json.dumps(reply, separators=(",", ":")) + "\n")
            sys.stdout.flush()
        return reply

    # json allows NaN literals in its own dialect; the checker must flag them
    serve_stream(wrapped, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
