"""Ensemble wrapper feature selection.

Each classifier runs a sequential forward search driven by k-fold CV accuracy;
the final subset is the union of the per-classifier selections, so a feature
survives if at least one classifier used it. One fold assignment is frozen per
search and shared by every candidate evaluation, making candidate comparisons
paired.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifiers import ClassifierKind, CvResult, cross_validate, default_kinds, stratified_folds
from .cohort import CohortDataset
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class FeatureMask:
    """Boolean inclusion vector over the schema's feature columns."""

    selected: np.ndarray

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=bool).copy()
        sel.flags.writeable = False
        object.__setattr__(self, "selected", sel)

    def __len__(self) -> int:
        return len(self.selected)

    @property
    def count(self) -> int:
        return int(self.selected.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.selected)

    def ids(self, descriptors) -> list[str]:
        return [descriptors[i].id for i in self.indices]

    @classmethod
    def from_indices(cls, indices, n_features: int) -> "FeatureMask":
        sel = np.zeros(n_features, dtype=bool)
        sel[list(indices)] = True
        return cls(sel)

    @classmethod
    def from_ids(cls, ids, descriptors) -> "FeatureMask":
        order = {d.id: i for i, d in enumerate(descriptors)}
        missing = [f for f in ids if f not in order]
        if missing:
            raise ConfigError(f"feature ids not in schema: {missing}")
        return cls.from_indices([order[f] for f in ids], len(descriptors))


@dataclass(frozen=True)
class SelectionStep:
    feature_index: int
    feature_id: str
    accuracy: float


@dataclass(frozen=True)
class WrapperConfig:
    k_folds: int = 10
    seed: int = 0
    min_gain: float = 0.001
    max_subset_size: int | None = None
    kinds: tuple[ClassifierKind, ...] = field(default_factory=default_kinds)
    n_workers: int = 1


@dataclass(frozen=True)
class PerClassifierSelection:
    mask: FeatureMask
    cv_accuracy: float           # accuracy at the last accepted step
    trace: tuple[SelectionStep, ...]


@dataclass(frozen=True)
class SelectionReport:
    per_classifier: dict          # tag -> PerClassifierSelection
    consensus: FeatureMask
    baseline_accuracy: dict       # tag -> full-feature CV accuracy
    feature_ids: tuple[str, ...]

    def to_json(self) -> dict:
        stars = {
            fid: sorted(
                tag
                for tag, sel in self.per_classifier.items()
                if sel.mask.selected[i]
            )
            for i, fid in enumerate(self.feature_ids)
        }
        return {
            "features": list(self.feature_ids),
            "classifiers": {
                tag: {
                    "baseline_accuracy": self.baseline_accuracy[tag],
                    "final_accuracy": sel.cv_accuracy,
                    "selected": [self.feature_ids[i] for i in sel.mask.indices],
                    "trace": [
                        {"feature": s.feature_id, "accuracy": s.accuracy}
                        for s in sel.trace
                    ],
                }
                for tag, sel in self.per_classifier.items()
            },
            "stars": stars,
            "consensus": [self.feature_ids[i] for i in self.consensus.indices],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SelectionReport":
        feature_ids = tuple(obj["features"])
        order = {fid: i for i, fid in enumerate(feature_ids)}
        per = {}
        for tag, entry in obj["classifiers"].items():
            mask = FeatureMask.from_indices(
                [order[f] for f in entry["selected"]], len(feature_ids)
            )
            trace = tuple(
                SelectionStep(order[s["feature"]], s["feature"], s["accuracy"])
                for s in entry["trace"]
            )
            per[tag] = PerClassifierSelection(
                mask=mask, cv_accuracy=entry["final_accuracy"], trace=trace
            )
        consensus = FeatureMask.from_indices(
            [order[f] for f in obj["consensus"]], len(feature_ids)
        )
        baseline = {
            tag: entry["baseline_accuracy"] for tag, entry in obj["classifiers"].items()
        }
        return cls(
            per_classifier=per,
            consensus=consensus,
            baseline_accuracy=baseline,
            feature_ids=feature_ids,
        )


def _majority_baseline(y: np.ndarray, folds: np.ndarray) -> float:
    """Pooled CV accuracy of predicting each fold's training majority class."""
    correct = 0
    for f in range(int(folds.max()) + 1):
        test = folds == f
        train_y = y[~test]
        n1 = int(train_y.sum())
        majority = 1 if 2 * n1 > len(train_y) else 0  # tie resolves to CN
        correct += int(np.sum(y[test] == majority))
    return correct / len(y)


def wrapper_select(
    kind: ClassifierKind, ds: CohortDataset, cfg: WrapperConfig
) -> tuple[FeatureMask, tuple[SelectionStep, ...]]:
    """Greedy forward selection for one classifier.

    Starting from the empty set (whose baseline is majority-class CV accuracy),
    each round evaluates every unselected feature with the shared fold
    assignment and accepts the best one if it improves pooled accuracy by more
    than ``min_gain``. Ties between candidates resolve to the lowest feature
    index. Deterministic given (ds, cfg, seed).
    """
    X, y = ds.features, ds.labels
    p = ds.n_features
    folds = stratified_folds(y, cfg.k_folds, cfg.seed)
    max_size = p if cfg.max_subset_size is None else min(cfg.max_subset_size, p)

    def evaluate(columns) -> float:
        return cross_validate(
            kind, X[:, columns], y, seed=cfg.seed, fold_assignment=folds
        ).accuracy

    selected: list[int] = []
    trace: list[SelectionStep] = []
    current = _majority_baseline(y, folds)
    while len(selected) < max_size:
        candidates = [j for j in range(p) if j not in selected]
        if not candidates:
            break
        trial_columns = [selected + [j] for j in candidates]
        if cfg.n_workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
                accuracies = list(pool.map(evaluate, trial_columns))
        else:
            accuracies = [evaluate(cols) for cols in trial_columns]
        best_pos = int(np.argmax(accuracies))  # first max = lowest feature index
        best_acc = accuracies[best_pos]
        if not best_acc - current > cfg.min_gain:
            break
        j = candidates[best_pos]
        selected.append(j)
        current = best_acc
        trace.append(SelectionStep(j, ds.descriptors[j].id, best_acc))

    return FeatureMask.from_indices(selected, p), tuple(trace)


def ensemble_consensus(masks: dict) -> FeatureMask:
    """Union (element-wise OR) of one mask per classifier kind."""
    if not masks:
        raise ConfigError("no masks given")
    tags = list(masks)
    if len(set(tags)) != len(tags):
        raise ConfigError("duplicate classifier kind in consensus input")
    lengths = {len(m) for m in masks.values()}
    if len(lengths) != 1:
        raise ShapeError(f"masks have differing lengths: {sorted(lengths)}")
    out = np.zeros(lengths.pop(), dtype=bool)
    for m in masks.values():
        out |= m.selected
    return FeatureMask(out)


def run_ensemble_selection(ds: CohortDataset, cfg: WrapperConfig) -> SelectionReport:
    """Run the wrapper search for every configured kind and take the union."""
    tags = [k.tag for k in cfg.kinds]
    if len(set(tags)) != len(tags):
        raise ConfigError(f"duplicate classifier kinds configured: {tags}")
    per, baseline = {}, {}
    for kind in cfg.kinds:
        baseline[kind.tag] = cross_validate(
            kind, ds.features, ds.labels, k=cfg.k_folds, seed=cfg.seed
        ).accuracy
        mask, trace = wrapper_select(kind, ds, cfg)
        final = trace[-1].accuracy if trace else _majority_baseline(
            ds.labels, stratified_folds(ds.labels, cfg.k_folds, cfg.seed)
        )
        per[kind.tag] = PerClassifierSelection(mask=mask, cv_accuracy=final, trace=trace)
    consensus = ensemble_consensus({tag: sel.mask for tag, sel in per.items()})
    return SelectionReport(
        per_classifier=per,
        consensus=consensus,
        baseline_accuracy=baseline,
        feature_ids=ds.feature_ids,
    )
