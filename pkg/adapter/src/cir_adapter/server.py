"""Protocol endpoint: newline-delimited JSON scorer over an embedder.

For each score request the adapter zero-masks inactive image regions in
pixel space, drops inactive text tokens (remaining surfaces re-joined with
single spaces), embeds the composed query, embeds candidates through a
cache keyed by candidate asset, and replies with cosine similarities.  One
response line per request line, order preserved; failures become protocol
error lines, never silent drops.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .cache import EmbeddingCache
from .config import AdapterConfig
from .embedder import AssetResolver, Embedder, PixelStatsEmbedder, embed_image_ref

PROTOCOL_VERSION = 1


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


@dataclass
class ScoreHandler:
    config: AdapterConfig
    embedder: Embedder = None
    resolver: AssetResolver = None
    query_cache: EmbeddingCache = field(default_factory=EmbeddingCache)
    candidate_cache: EmbeddingCache = field(default_factory=EmbeddingCache)

    def __post_init__(self):
        if self.embedder is None:
            self.embedder = PixelStatsEmbedder()
        if self.resolver is None:
            self.resolver = AssetResolver(self.config.asset_root)

    def _query_embedding(self, query: dict) -> np.ndarray:
        active_regions = tuple(
            (t["asset"], t.get("mask") or "")
            for t in query["image"]
            if t["active"]
        )
        text = " ".join(t["surface"] for t in query["text"] if t["active"])
        key = (active_regions, text)

        def compute() -> np.ndarray:
            img = np.zeros(self.embedder.dim)
            for asset, mask in active_regions:
                img += embed_image_ref(self.embedder, self.resolver, asset, mask or None)
            txt = self.embedder.embed_text(text)
            return img + txt

        return self.query_cache.get(key, compute)

    def _candidate_embedding(self, asset: str) -> np.ndarray:
        return self.candidate_cache.get(
            asset, lambda: embed_image_ref(self.embedder, self.resolver, asset)
        )

    def score(self, msg: dict) -> list[float]:
        q = self._query_embedding(msg["query"])
        return [_cosine(q, self._candidate_embedding(c["asset"])) for c in msg["candidates"]]

    def generate(self, msg: dict) -> list[str]:
        # optional generation support: deterministic pseudo-refs, enough for
        # augmentation plumbing without an image model
        op = msg.get("op", "")
        sig = json.dumps(msg.get("args", {}), sort_keys=True)
        digest = hashlib.sha256(f"{op}|{sig}".encode("utf-8")).hexdigest()[:12]
        count = int(msg.get("count", 1))
        return [f"asset://generated/{op}/{digest}-{i}.png" for i in range(count)]

    def __call__(self, msg: dict) -> dict:
        mtype = msg.get("type")
        sample_id = msg.get("sample_id", "")
        if msg.get("v") != PROTOCOL_VERSION:
            raise ValueError(f"unsupported protocol version {msg.get('v')!r}")
        if mtype == "score":
            return {
                "v": PROTOCOL_VERSION,
                "type": "scores",
                "sample_id": sample_id,
                "scores": self.score(msg),
            }
        if mtype == "generate":
            return {
                "v": PROTOCOL_VERSION,
                "type": "generated",
                "sample_id": sample_id,
                "outputs": self.generate(msg),
            }
        raise ValueError(f"unknown request type {mtype!r}")


def serve(config: AdapterConfig, infile=None, outfile=None) -> None:
    infile = sys.stdin if infile is None else infile
    outfile = sys.stdout if outfile is None else outfile
    handler = ScoreHandler(config)
    for raw in infile:
        raw = raw.strip()
        if not raw:
            continue
        sample_id = ""
        try:
            msg = json.loads(raw)
            sample_id = msg.get("sample_id", "") if isinstance(msg, dict) else ""
            reply = handler(msg)
        except Exception as exc:  # noqa: BLE001 - protocol requires error lines
            reply = {
                "v": PROTOCOL_VERSION,
                "type": "error",
                "sample_id": sample_id,
                "message": str(exc),
            }
        outfile.write(json.dumps(reply, separators=(",", ":"), sort_keys=True) + "\n")
        outfile.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="pixelstats")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--asset-root", default=".")
    parser.add_argument("--cache-dir", default=None)
    args = parser.parse_args(argv)
    config = AdapterConfig(
        model=args.model,
        device=args.device,
        batch_size=args.batch_size,
        asset_root=args.asset_root,
        cache_dir=args.cache_dir,
    )
    serve(config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
