"""Feature selection, nearest-neighbour classification and cross-validation.

The default protocol runs SFFS inside every training fold so the held-out
sample never influences which features are chosen. ``paper_protocol=True``
instead selects features once on the whole dataset before cross-validating,
which is what a plain reading of the original evaluation suggests.
"""
from __future__ import annotations

import json
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    SKILL_CLASSES,
    CriterionDataset,
    FeatureVector,
    ParameterError,
    ShapeError,
    StratificationError,
)

METRICS = ("euclidean", "chebyshev", "manhattan")
REPORT_SCHEMA = "surgskill.cv-report/1"
TABLE_SCHEMA = "surgskill.osats-table/1"


def _xy(data):
    if isinstance(data, CriterionDataset):
        return data.X, data.y
    X, y = data
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} samples but {y.shape[0]} labels")
    return X, y


def _components(A: np.ndarray, B: np.ndarray, metric: str) -> np.ndarray:
    """Per-feature distance contributions, shape ``(d, len(A), len(B))``."""
    diff = A.T[:, :, None] - B.T[:, None, :]
    if metric == "euclidean":
        return diff * diff
    if metric in ("chebyshev", "manhattan"):
        return np.abs(diff)
    raise ParameterError(f"unknown metric {metric!r}; choose from {METRICS}")


def _combine(comp: np.ndarray, metric: str) -> np.ndarray:
    # euclidean stays squared: same ordering, no rounding from sqrt
    if metric == "chebyshev":
        return comp.max(axis=0)
    return comp.sum(axis=0)


def distances(A, B, metric: str = "euclidean") -> np.ndarray:
    """Distance matrix between rows of ``A`` and ``B`` (squared for Euclidean)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    return _combine(_components(A, B, metric), metric)


def nn_classify(train, query, metric: str = "euclidean"):
    """Label of the nearest training sample; the lowest training index wins ties."""
    X, y = _xy(train)
    if X.shape[0] == 0:
        raise ShapeError("empty training set")
    q = query.values if isinstance(query, FeatureVector) else np.asarray(query, dtype=float)
    if q.shape[-1] != X.shape[1]:
        raise ShapeError(f"query has {q.shape[-1]} features, training data {X.shape[1]}")
    return y[int(np.argmin(distances(q.reshape(1, -1), X, metric)[0]))]


def loocv_accuracy(X, y, metric: str = "euclidean", include_self: bool = False) -> float:
    """Leave-one-out 1-NN accuracy on ``(X, y)``."""
    D = distances(X, X, metric)
    if not include_self:
        np.fill_diagonal(D, np.inf)
    return float(np.mean(y[D.argmin(axis=1)] == y))


class LoocvObjective:
    """LOOCV 1-NN accuracy of a feature subset, with per-feature distances cached.

    Subset distances are always accumulated in ascending feature order, so
    the score of a subset does not depend on the path SFFS took to reach it.
    """

    name = "loocv_nn_accuracy"

    def __init__(self, X, y, metric: str = "euclidean"):
        X, self.y = _xy((X, y))
        self.metric = metric
        self._comp = _components(X, X, metric)

    def __call__(self, subset) -> float:
        idx = np.sort(np.asarray(list(subset), dtype=int))
        D = _combine(self._comp[idx], self.metric)
        np.fill_diagonal(D, np.inf)
        return float(np.mean(self.y[D.argmin(axis=1)] == self.y))


@dataclass
class SelectionResult:
    selected: tuple[int, ...]
    trace: list[tuple[str, int, float]]
    objective: str

    @property
    def value(self) -> float | None:
        """Objective of the final subset, or None when nothing was selected."""
        return self.trace[-1][2] if self.trace else None


def sffs(data, max_dim: int = 10, objective: Callable | None = None,
         metric: str = "euclidean") -> SelectionResult:
    """Sequential floating forward selection.

    Each round adds the feature that maximizes the objective, then keeps
    dropping features (never the one just added) while a removal strictly
    improves it. Selection stops when no addition strictly improves the
    objective or ``max_dim`` features are chosen. Ties go to the lowest
    feature index.

    Parameters
    ----------
    data : CriterionDataset or (X, y)
    max_dim : int
        Upper bound on the number of selected features.
    objective : callable, optional
        Maps a collection of feature indices to a score. Defaults to LOOCV
        1-NN accuracy on ``data``.
    """
    X, y = _xy(data)
    if objective is None:
        objective = LoocvObjective(X, y, metric)
    name = getattr(objective, "name", getattr(objective, "__name__", "objective"))
    d = X.shape[1]
    selected: list[int] = []
    trace: list[tuple[str, int, float]] = []
    current: float | None = None
    while len(selected) < min(max_dim, d):
        candidates = [f for f in range(d) if f not in selected]
        scores = [objective(selected + [f]) for f in candidates]
        best = int(np.argmax(scores))
        if current is not None and scores[best] <= current:
            break
        added = candidates[best]
        selected.append(added)
        current = scores[best]
        trace.append(("add", added, current))
        while len(selected) > 2:
            removable = sorted(g for g in selected if g != added)
            rscores = [objective([f for f in selected if f != g]) for g in removable]
            rbest = int(np.argmax(rscores))
            if rscores[rbest] <= current:
                break
            selected.remove(removable[rbest])
            current = rscores[rbest]
            trace.append(("remove", removable[rbest], current))
    return SelectionResult(tuple(selected), trace, name)


@dataclass(frozen=True)
class Scheme:
    """Cross-validation scheme: ``loocv`` or stratified ``kfold`` with a shuffle seed."""

    kind: str = "loocv"
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("loocv", "kfold"):
            raise ParameterError(f"unknown scheme {self.kind!r}")
        if self.kind == "kfold" and (self.k is None or self.k < 2):
            raise ParameterError(f"k-fold needs k >= 2, got {self.k}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "Scheme":
        """Accept ``loocv``, ``kfold:5``, ``kfold:5:7`` (k and seed) or ``5fold``."""
        t = str(text).strip().lower()
        if t == "loocv":
            return cls()
        if t.endswith("fold") and t[:-4].isdigit():
            return cls("kfold", int(t[:-4]), seed)
        parts = t.split(":")
        if parts[0] == "kfold" and len(parts) in (2, 3):
            return cls("kfold", int(parts[1]), int(parts[2]) if len(parts) == 3 else seed)
        raise ParameterError(f"cannot parse cross-validation scheme {text!r}")

    def __str__(self):
        return "loocv" if self.kind == "loocv" else f"kfold:{self.k}:{self.seed}"

    def folds(self, y) -> list[np.ndarray]:
        """Test-index arrays, one per fold."""
        y = np.asarray(y)
        n = y.size
        if self.kind == "loocv":
            return [np.array([i]) for i in range(n)]
        if self.k > n:
            raise ParameterError(f"{self.k} folds for {n} samples")
        rng = np.random.default_rng(self.seed)
        assign = np.empty(n, dtype=int)
        offset = 0
        for cls_ in _class_order(y):
            members = rng.permutation(np.flatnonzero(y == cls_))
            # deal round-robin, continuing where the previous class stopped
            assign[members] = (offset + np.arange(members.size)) % self.k
            offset = (offset + members.size) % self.k
        return [np.flatnonzero(assign == f) for f in range(self.k)]


def _class_order(y) -> list:
    present = set(np.asarray(y).tolist())
    known = [c for c in SKILL_CLASSES if c in present]
    return known + sorted(present - set(known))


@dataclass(frozen=True)
class Pipeline:
    """Feature selection + 1-NN settings for cross-validation."""

    select: bool = True
    max_dim: int = 10
    metric: str = "euclidean"
    paper_protocol: bool = False

    @property
    def mode(self) -> str:
        if not self.select:
            return "no-selection"
        return "paper-protocol" if self.paper_protocol else "leak-free"


@dataclass
class CvReport:
    scheme: str
    mode: str
    classes: list
    per_fold_accuracy: list[float]
    fold_sizes: list[int]
    accuracy: float
    std: float
    confusion: list[list[int]]
    selected: list[list[int]] = field(default_factory=list)
    criterion: str = ""

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "criterion": self.criterion,
            "scheme": self.scheme,
            "mode": self.mode,
            "classes": list(self.classes),
            "accuracy": self.accuracy,
            "std_across_folds": self.std,
            "per_fold_accuracy": list(self.per_fold_accuracy),
            "fold_sizes": list(self.fold_sizes),
            "confusion": self.confusion,
            "selected_features": self.selected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CvReport":
        return cls(d["scheme"], d["mode"], d["classes"], d["per_fold_accuracy"], d["fold_sizes"],
                   d["accuracy"], d["std_across_folds"], d["confusion"], d["selected_features"],
                   d.get("criterion", ""))


def _run(executor, fn, items):
    if executor is None:
        return [fn(i) for i in items]
    return list(executor.map(fn, items))


def cross_validate(data, scheme: Scheme | str = "loocv", pipeline: Pipeline | None = None,
                   executor: Executor | None = None, *, _include_held_out: bool = False) -> CvReport:
    """Cross-validated 1-NN accuracy with optional SFFS.

    Raises :class:`StratificationError` when some fold's training part lacks
    a class. ``_include_held_out`` leaks each test fold into its training
    set; it exists only so tests can show that exclusion matters.
    """
    scheme = Scheme.parse(scheme) if isinstance(scheme, str) else scheme
    pipeline = pipeline or Pipeline()
    X, y = _xy(data)
    classes = _class_order(y)
    folds = scheme.folds(y)
    all_idx = np.arange(y.size)
    for test in folds:
        train_labels = set(y[np.setdiff1d(all_idx, test)].tolist())
        for c in classes:
            if c not in train_labels and not _include_held_out:
                raise StratificationError(f"class {c!r} is absent from a training fold under {scheme}")

    global_subset = None
    if pipeline.select and pipeline.paper_protocol:
        global_subset = list(sffs((X, y), pipeline.max_dim, metric=pipeline.metric).selected)

    def run_fold(test):
        train = all_idx if _include_held_out else np.setdiff1d(all_idx, test)
        if not pipeline.select:
            subset = list(range(X.shape[1]))
        elif global_subset is not None:
            subset = global_subset
        else:
            subset = list(sffs((X[train], y[train]), pipeline.max_dim, metric=pipeline.metric).selected)
        cols = np.sort(np.asarray(subset, dtype=int))
        D = distances(X[test][:, cols], X[train][:, cols], pipeline.metric)
        pred = y[train][D.argmin(axis=1)]
        return pred, subset

    results = _run(executor, run_fold, folds)
    index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    per_fold, sizes, selected = [], [], []
    for test, (pred, subset) in zip(folds, results):
        for t, p in zip(y[test], pred):
            confusion[index[t], index[p]] += 1
        per_fold.append(float(np.mean(pred == y[test])))
        sizes.append(int(test.size))
        selected.append([int(s) for s in subset])
    accuracy = float(np.trace(confusion) / confusion.sum())
    return CvReport(
        str(scheme), pipeline.mode, classes, per_fold, sizes, accuracy,
        float(np.std(per_fold)), confusion.tolist(), selected,
        data.criterion if isinstance(data, CriterionDataset) else "",
    )


@dataclass
class OsatsTable:
    """Per-criterion reports and their unweighted mean accuracy for one configuration."""

    reports: dict
    task: str = "suturing"
    K: int | None = None
    feature: str = ""
    modality: str = ""

    @property
    def average_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.reports.values()]))

    @property
    def std(self) -> float:
        """Standard deviation of accuracy across criteria."""
        return float(np.std([r.accuracy for r in self.reports.values()]))

    def to_dict(self) -> dict:
        return {
            "schema": TABLE_SCHEMA,
            "task": self.task,
            "K": self.K,
            "feature": self.feature,
            "modality": self.modality,
            "average_accuracy": self.average_accuracy,
            "std_across_criteria": self.std,
            "criteria": {c: r.to_dict() for c, r in self.reports.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OsatsTable":
        reports = {c: CvReport.from_dict(r) for c, r in d["criteria"].items()}
        return cls(reports, d["task"], d["K"], d["feature"], d["modality"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_osats(datasets, scheme: Scheme | str = "loocv", pipeline: Pipeline | None = None,
                   K: int | None = None, feature: str = "", modality: str = "",
                   executor: Executor | None = None) -> OsatsTable:
    """Cross-validate every criterion dataset and average the accuracies."""
    datasets = list(datasets)
    if not datasets:
        raise ParameterError("need at least one criterion dataset")
    reports = {}
    for ds in datasets:
        reports[ds.criterion] = cross_validate(ds, scheme, pipeline, executor)
    return OsatsTable(reports, datasets[0].task, K, feature, modality)


@dataclass
class KSweep:
    tables: dict

    @property
    def best_K(self) -> int:
        """K with the highest average accuracy; smallest K on ties.

        ``None`` stands for a modality without a codebook (accelerometer only).
        """
        keys = sorted(self.tables, key=lambda k: -1 if k is None else k)
        return max(keys, key=lambda k: (self.tables[k].average_accuracy, 0 if k is None else -k))

    @property
    def best(self) -> OsatsTable:
        return self.tables[self.best_K]


def sweep_k(datasets_by_k: dict, scheme: Scheme | str = "loocv", pipeline: Pipeline | None = None,
            feature: str = "", modality: str = "video", executor: Executor | None = None) -> KSweep:
    return KSweep({
        K: evaluate_osats(dsets, scheme, pipeline, K, feature, modality, executor)
        for K, dsets in sorted(datasets_by_k.items(), key=lambda kv: -1 if kv[0] is None else kv[0])
    })


TABLE2_HEADER = ("feature", "task", "modality", "scheme", "mode", "K", "average_accuracy", "std", "n_criteria")


def table2_rows(tables) -> list[tuple]:
    """Rows in the layout of a feature x task x modality accuracy table (percent, 1 decimal)."""
    rows = []
    for t in tables:
        first = next(iter(t.reports.values()))
        rows.append((
            t.feature, t.task, t.modality, first.scheme, first.mode,
            "" if t.K is None else t.K,
            f"{100 * t.average_accuracy:.1f}", f"{100 * t.std:.1f}", len(t.reports),
        ))
    return rows
