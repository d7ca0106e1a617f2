"""Records which epoch indices reach each fit call, per fold."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FitAudit:
    entries: list = field(default_factory=list)     # (fold, stage, sorted global indices)

    def record(self, fold: int, stage: str, indices) -> None:
        self.entries.append((int(fold), stage, np.unique(np.asarray(indices, dtype=np.int64))))

    def extend(self, other: "FitAudit") -> None:
        self.entries.extend(other.entries)

    def stages(self) -> list[str]:
        return sorted({s for _, s, _ in self.entries})

    def violations(self, test_sets: dict) -> list[tuple[int, str, int]]:
        """(fold, stage, number of leaked indices) for every fit that saw its fold's test set."""
        out = []
        for fold, stage, idx in self.entries:
            leaked = np.intersect1d(idx, test_sets[fold]).size
            if leaked:
                out.append((fold, stage, int(leaked)))
        return out
