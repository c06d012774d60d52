"""Out-of-process scorer adapter for the cirfocus wire protocol."""
from .cache import EmbeddingCache
from .config import AdapterConfig
from .embedder import AssetResolver, Embedder, PixelStatsEmbedder, embed_image_ref
from .server import ScoreHandler, serve

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AssetResolver",
    "Embedder",
    "EmbeddingCache",
    "PixelStatsEmbedder",
    "ScoreHandler",
    "embed_image_ref",
    "serve",
]
