"""In-process embedding cache with hit/miss accounting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np


@dataclass
class EmbeddingCache:
    hits: int = 0
    misses: int = 0
    _store: dict = field(default_factory=dict)

    def get(self, key: Hashable, compute: Callable[[], np.ndarray]) -> np.ndarray:
        if key in self._store:
            self.hits += 1
        else:
            self.misses += 1
            self._store[key] = compute()
        return self._store[key]

    def __len__(self) -> int:
        return len(self._store)

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0
