"""Adapter configuration."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class AdapterConfig:
    """Runtime settings for one adapter process.

    ``asset_root`` anchors ``asset://`` refs on the local filesystem; refs
    without a backing file fall back to deterministic pseudo-embeddings so
    protocol conformance can run without an asset corpus.
    """

    model: str = "pixelstats"
    device: str = "cpu"
    batch_size: int = 16
    asset_root: str = "."
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not os.path.isdir(self.asset_root):
            raise ValueError(f"asset root {self.asset_root!r} does not exist")
