"""Benchmark corpus serialization: newline-delimited JSON with a header.

The header line is ``{"format": "fbcir-bench", "version": 1, "mode": ...}``
and every following line is one augmented sample.  ``mode`` is either
"inline" (feature vectors on every token and candidate, self-contained) or
"asset" (opaque refs an adapter resolves); mixing the two is rejected.
"""
from __future__ import annotations

import json
from typing import Iterable, Sequence, TextIO

import numpy as np

from .augment import SourceTriplet, TripletSource
from .types import (
    AugmentedSample,
    Candidate,
    CandidateKind,
    ImageToken,
    TextToken,
    TokenizedQuery,
)

FORMAT_NAME = "fbcir-bench"
FORMAT_VERSION = 1
MODES = ("inline", "asset")


class BenchFileError(ValueError):
    pass


def sample_mode(sample: AugmentedSample) -> str:
    """Classify one sample as inline or asset; partial annotation is an error."""
    vec_flags = [t.vec is not None for t in sample.query.image_tokens]
    vec_flags += [t.vec is not None for t in sample.query.text_tokens]
    vec_flags += [c.vec is not None for c in sample.candidates]
    if all(vec_flags):
        return "inline"
    asset_flags = [t.asset is not None for t in sample.query.image_tokens]
    asset_flags += [c.asset is not None for c in sample.candidates]
    if any(vec_flags):
        raise BenchFileError(
            f"sample {sample.sample_id}: some but not all parts carry vectors"
        )
    if not all(asset_flags):
        raise BenchFileError(
            f"sample {sample.sample_id}: asset mode requires refs on every "
            "image token and candidate"
        )
    return "asset"


def _vec_out(vec) -> list[float] | None:
    return None if vec is None else [float(x) for x in vec]


def sample_to_dict(sample: AugmentedSample) -> dict:
    q = sample.query
    return {
        "sample_id": sample.sample_id,
        "provenance": sample.provenance,
        "query": {
            "text": q.text,
            "image_tokens": [
                {
                    "id": t.id,
                    "area_weight": t.area_weight,
                    "vec": _vec_out(t.vec),
                    "asset": t.asset,
                    "mask": t.mask,
                }
                for t in q.image_tokens
            ],
            "text_tokens": [
                {"id": t.id, "surface": t.surface, "vec": _vec_out(t.vec)}
                for t in q.text_tokens
            ],
        },
        "candidates": [
            {"id": c.id, "kind": c.kind.value, "vec": _vec_out(c.vec), "asset": c.asset}
            for c in sample.candidates
        ],
    }


def _vec_in(raw) -> np.ndarray | None:
    return None if raw is None else np.asarray(raw, dtype=float)


def sample_from_dict(data: dict) -> AugmentedSample:
    try:
        q = data["query"]
        query = TokenizedQuery(
            image_tokens=tuple(
                ImageToken(
                    id=t["id"],
                    area_weight=t["area_weight"],
                    vec=_vec_in(t.get("vec")),
                    asset=t.get("asset"),
                    mask=t.get("mask"),
                )
                for t in q["image_tokens"]
            ),
            text_tokens=tuple(
                TextToken(id=t["id"], surface=t["surface"], vec=_vec_in(t.get("vec")))
                for t in q["text_tokens"]
            ),
            text=q.get("text", ""),
        )
        candidates = tuple(
            Candidate(
                id=c["id"],
                kind=CandidateKind(c["kind"]),
                vec=_vec_in(c.get("vec")),
                asset=c.get("asset"),
            )
            for c in data["candidates"]
        )
        return AugmentedSample(
            sample_id=data["sample_id"],
            query=query,
            candidates=candidates,
            provenance=data.get("provenance", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BenchFileError(f"malformed sample record: {exc}") from exc


def write_benchmark(out: TextIO, samples: Sequence[AugmentedSample]) -> str:
    """Write header plus one line per sample; returns the detected mode."""
    if not samples:
        mode = "inline"
    else:
        modes = {sample_mode(s) for s in samples}
        if len(modes) > 1:
            raise BenchFileError(f"mixed modes in one corpus: {sorted(modes)}")
        mode = modes.pop()
    header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "mode": mode}
    out.write(json.dumps(header, sort_keys=True) + "\n")
    for sample in samples:
        out.write(json.dumps(sample_to_dict(sample), sort_keys=True) + "\n")
    return mode


def read_benchmark(infile: TextIO) -> tuple[str, list[AugmentedSample]]:
    """Read a benchmark corpus; returns (mode, samples)."""
    header_line = infile.readline()
    if not header_line.strip():
        raise BenchFileError("empty file: missing header line")
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise BenchFileError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise BenchFileError(f"not a {FORMAT_NAME} file: {header!r}")
    if header.get("version") != FORMAT_VERSION:
        raise BenchFileError(f"unsupported version {header.get('version')!r}")
    mode = header.get("mode")
    if mode not in MODES:
        raise BenchFileError(f"unknown mode {mode!r}")
    samples = []
    for lineno, raw in enumerate(infile, start=2):
        raw = raw.strip()
        if not raw:
            continue
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BenchFileError(f"line {lineno}: invalid JSON: {exc}") from exc
        sample = sample_from_dict(data)
        actual = sample_mode(sample)
        if actual != mode:
            raise BenchFileError(
                f"line {lineno}: sample {sample.sample_id} is {actual!r} in a "
                f"{mode!r} corpus"
            )
        samples.append(sample)
    return mode, samples


def read_triplets(infile: TextIO) -> list[SourceTriplet]:
    """Triplet input for the augment planner: one JSON object per line with
    query_image, query_text, positive_image, source, optional triplet_id."""
    triplets = []
    for lineno, raw in enumerate(infile, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            data = json.loads(raw)
            triplets.append(
                SourceTriplet(
                    query_image=data["query_image"],
                    query_text=data["query_text"],
                    positive_image=data["positive_image"],
                    source=TripletSource(data["source"]),
                    triplet_id=data.get("triplet_id", ""),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise BenchFileError(f"line {lineno}: bad triplet record: {exc}") from exc
    return triplets
