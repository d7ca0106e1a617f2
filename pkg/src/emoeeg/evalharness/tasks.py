"""Task definitions: how cohort/emotion labels map onto classification targets."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..datamodel import COHORTS, EMOTIONS

TASK_KINDS = ("valence", "arousal", "emotion6", "pd_vs_hc")

HIGH_VALENCE = frozenset({"happiness", "surprise"})
LOW_AROUSAL = frozenset({"sadness"})

# class names in index order; index 0 is the positive class of binary tasks
CLASS_NAMES = {
    "valence": ("HV", "LV"),
    "arousal": ("HA", "LA"),
    "emotion6": EMOTIONS,
    "pd_vs_hc": ("PD", "HC"),
}


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    cohort: str = "Full"        # Full | PD | HC   (valence, arousal, emotion6)
    emotion: str = "Full"       # Full | one emotion   (pd_vs_hc)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise TaskError(f"unknown task {self.kind!r}; choose from {TASK_KINDS}")
        if self.cohort not in ("Full",) + COHORTS:
            raise TaskError(f"cohort filter must be Full, PD or HC, got {self.cohort!r}")
        if self.emotion not in ("Full",) + EMOTIONS:
            raise TaskError(f"emotion filter must be Full or an emotion, got {self.emotion!r}")
        if self.kind == "pd_vs_hc" and self.cohort != "Full":
            raise TaskError("pd_vs_hc uses both cohorts; filter by emotion instead")
        if self.kind != "pd_vs_hc" and self.emotion != "Full":
            raise TaskError(f"{self.kind} spans emotions; filter by cohort instead")

    @property
    def classes(self) -> tuple[str, ...]:
        return CLASS_NAMES[self.kind]

    @property
    def positive(self) -> str:
        return self.classes[0]

    def accepts(self, cohort: str, emotion: str) -> bool:
        if self.cohort != "Full" and cohort != self.cohort:
            return False
        return self.emotion == "Full" or emotion == self.emotion

    def label_name(self, cohort: str, emotion: str) -> str:
        if self.kind == "valence":
            return "HV" if emotion in HIGH_VALENCE else "LV"
        if self.kind == "arousal":
            return "LA" if emotion in LOW_AROUSAL else "HA"
        if self.kind == "emotion6":
            return emotion
        return cohort

    def label(self, cohort: str, emotion: str) -> int:
        return self.classes.index(self.label_name(cohort, emotion))

    def describe(self) -> str:
        filt = self.cohort if self.kind != "pd_vs_hc" else self.emotion
        return f"{self.kind}[{filt}]"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "cohort": self.cohort, "emotion": self.emotion}


@dataclass(frozen=True)
class LabeledSet:
    """Epoch indices that survive the task filter, with task labels and subject groups."""
    task: TaskSpec
    index: np.ndarray        # positions into the source epoch list
    y: np.ndarray
    groups: np.ndarray       # subject ids

    @property
    def class_counts(self) -> dict[str, int]:
        c = Counter(self.y.tolist())
        return {name: int(c.get(i, 0)) for i, name in enumerate(self.task.classes)}

    def __len__(self):
        return len(self.y)


def build_task(records, task: TaskSpec) -> LabeledSet:
    """Relabel epochs for `task`.

    `records` is any sequence of objects with `cohort`, `emotion` and
    `subject_id` attributes (epochs, trials or epoch metadata rows).
    """
    idx, y, groups = [], [], []
    for i, r in enumerate(records):
        if task.accepts(r.cohort, r.emotion):
            idx.append(i)
            y.append(task.label(r.cohort, r.emotion))
            groups.append(r.subject_id)
    if not idx:
        raise TaskError(f"{task.describe()}: no epochs after filtering")
    out = LabeledSet(task, np.array(idx, dtype=np.int64), np.array(y, dtype=np.int64),
                     np.array(groups, dtype=object))
    empty = [k for k, v in out.class_counts.items() if v == 0]
    if empty:
        raise TaskError(f"{task.describe()}: empty class(es) {empty} after filtering")
    return out
