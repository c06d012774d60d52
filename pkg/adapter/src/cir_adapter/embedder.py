"""Image and text embedders.

The default model is a deterministic pixel-statistics embedder: cheap, fully
offline, and honest about the masking semantics (image regions are zeroed in
pixel space before embedding; inactive text tokens are dropped and the
remaining surfaces re-joined with single spaces).  A real CLIP-style backend
would subclass :class:`Embedder` and reuse the same server loop.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

EMBED_DIM = 64
_GRID = 4  # spatial pooling grid; 3 channels * 16 cells = 48 dims + 16 text-ish dims


class Embedder:
    """Maps resolved images and joined text strings to fixed-size vectors."""

    dim: int = EMBED_DIM

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def embed_text(self, text: str) -> np.ndarray:
        raise NotImplementedError


def _hash_vector(payload: str, dim: int) -> np.ndarray:
    """Deterministic pseudo-embedding for refs without a backing asset."""
    out = np.empty(dim)
    for i in range(0, dim, 4):
        digest = hashlib.sha256(f"{payload}|{i}".encode("utf-8")).digest()
        for j in range(4):
            if i + j < dim:
                word = int.from_bytes(digest[j * 8 : j * 8 + 8], "big")
                out[i + j] = word / 2**64 - 0.5
    return out


@dataclass
class PixelStatsEmbedder(Embedder):
    """Grid-pooled channel means plus hashed bag-of-words text features."""

    dim: int = EMBED_DIM

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixel array, got shape {pixels.shape}")
        h, w, _ = pixels.shape
        feats = []
        for gy in range(_GRID):
            for gx in range(_GRID):
                cell = pixels[
                    gy * h // _GRID : (gy + 1) * h // _GRID,
                    gx * w // _GRID : (gx + 1) * w // _GRID,
                ]
                feats.extend(cell.mean(axis=(0, 1)) / 255.0)
        vec = np.zeros(self.dim)
        vec[: len(feats)] = feats
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for word in text.split():
            digest = hashlib.sha256(word.encode("utf-8")).digest()
            slot = self.dim - 16 + digest[0] % 16
            sign = 1.0 if digest[1] % 2 else -1.0
            vec[slot] += sign
        n = np.linalg.norm(vec)
        return vec if n == 0 else vec / n


class AssetResolver:
    """Turns ``asset://`` refs into pixel arrays, applying region masks.

    Masks are greyscale images; pixels where the mask is dark (< 128) are
    zeroed before embedding (pixel-space zero-masking).  Refs without a
    backing file resolve to deterministic pseudo-content so the adapter stays
    usable in conformance checks without an asset corpus.
    """

    def __init__(self, asset_root: str):
        self.asset_root = asset_root

    def _path(self, ref: str) -> str:
        rel = ref[len("asset://"):] if ref.startswith("asset://") else ref
        return os.path.join(self.asset_root, rel)

    def load_image(self, ref: str, mask_ref: Optional[str] = None) -> Optional[np.ndarray]:
        """Pixel array with the mask applied, or None if the asset has no
        backing file (caller falls back to a pseudo-embedding)."""
        path = self._path(ref)
        if not os.path.isfile(path):
            return None
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=float)
        if mask_ref:
            mask_path = self._path(mask_ref)
            if os.path.isfile(mask_path):
                with Image.open(mask_path) as m:
                    mask = np.asarray(m.convert("L").resize(
                        (pixels.shape[1], pixels.shape[0])), dtype=float)
                pixels = pixels * (mask >= 128)[:, :, None]
        return pixels


def embed_image_ref(
    embedder: Embedder,
    resolver: AssetResolver,
    ref: str,
    mask_ref: Optional[str] = None,
) -> np.ndarray:
    pixels = resolver.load_image(ref, mask_ref)
    if pixels is None:
        return _hash_vector(f"img|{ref}|{mask_ref or ''}", embedder.dim)
    return embedder.embed_image(pixels)
