"""Seven supervised classifiers behind one interface, plus stratified k-fold CV.

LDA, QDA, Gaussian naive Bayes, and kNN are implemented directly so their
regularization and tie-breaking rules are exactly as documented. The linear
SVM delegates to liblinear (dual coordinate descent on the hinge loss), the
RBF SVM to libsvm (SMO), and the random forest to the binned-Gini engine in
:mod:`cogpatterns.forest`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.svm import SVC, LinearSVC

from . import forest
from .errors import (
    ConfigError,
    DegenerateLabelsError,
    EmptyFeatureError,
    ShapeError,
    StratificationError,
)
from .util import derive_seed

KINDS = ("LDA", "QDA", "NB", "KNN", "SLI", "SRBF", "RF")

_DEFAULT_HYPERPARAMS = {
    "LDA": {"reg": 1e-6},
    "QDA": {"reg": 1e-6},
    "NB": {"var_floor_ratio": 1e-9},
    "KNN": {"k": 5},
    "SLI": {"C": 1.0, "tol": 1e-3, "max_iter": 10_000},
    "SRBF": {"C": 1.0, "tol": 1e-3, "max_iter": 10_000},
    "RF": {"n_trees": 100, "min_leaf": 1},
}


@dataclass(frozen=True)
class ClassifierKind:
    """A classifier family tag plus its hyperparameter record."""

    tag: str
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in KINDS:
            raise ConfigError(f"unknown classifier tag {self.tag!r}; expected {KINDS}")
        merged = dict(_DEFAULT_HYPERPARAMS[self.tag])
        unknown = set(self.hyperparams) - set(merged)
        if unknown:
            raise ConfigError(f"{self.tag}: unknown hyperparameters {sorted(unknown)}")
        merged.update(self.hyperparams)
        object.__setattr__(self, "hyperparams", merged)


def default_kinds() -> tuple[ClassifierKind, ...]:
    """The seven classifier kinds with their default hyperparameters."""
    return tuple(ClassifierKind(tag) for tag in KINDS)


@dataclass(frozen=True)
class FittedModel:
    kind: ClassifierKind
    n_features: int
    state: object  # per-kind fitted parameters


@dataclass(frozen=True)
class CvResult:
    """Cross-validation outcome. ``accuracy`` is pooled (total correct / n);
    ``mean_fold_accuracy`` equals it whenever the folds are equal-sized."""

    accuracy: float
    fold_accuracies: np.ndarray
    fold_assignment: np.ndarray
    mean_fold_accuracy: float


# ---------------------------------------------------------------------------
# Per-kind fitting
# ---------------------------------------------------------------------------

def _shrink(cov: np.ndarray, reg: float) -> np.ndarray:
    """Ridge the covariance toward a scaled identity: S + reg*tr(S)/p * I."""
    if reg <= 0:
        return cov
    p = cov.shape[0]
    return cov + (reg * np.trace(cov) / p) * np.eye(p)


def _class_stats(X, y):
    out = []
    for cls in (0, 1):
        rows = X[y == cls]
        out.append((rows, rows.shape[0], rows.mean(axis=0)))
    return out


def _fit_lda(X, y, hp):
    (x0, n0, mu0), (x1, n1, mu1) = _class_stats(X, y)
    pooled = ((x0 - mu0).T @ (x0 - mu0) + (x1 - mu1).T @ (x1 - mu1)) / (n0 + n1 - 2)
    pooled = _shrink(pooled, hp["reg"])
    mus = np.stack([mu0, mu1])
    weights = np.linalg.solve(pooled, mus.T)  # (p, 2)
    n = n0 + n1
    consts = np.array(
        [
            -0.5 * mus[c] @ weights[:, c] + math.log([n0, n1][c] / n)
            for c in (0, 1)
        ]
    )
    return {"weights": weights, "consts": consts}


def _predict_lda(state, X):
    scores = X @ state["weights"] + state["consts"]
    return (scores[:, 1] > scores[:, 0]).astype(np.int8)


def _fit_qda(X, y, hp):
    state = {"mu": [], "solve": [], "logdet": [], "logprior": []}
    n = X.shape[0]
    for cls in (0, 1):
        rows = X[y == cls]
        mu = rows.mean(axis=0)
        cov = np.atleast_2d(np.cov(rows, rowvar=False, ddof=1))
        cov = _shrink(cov, hp["reg"])
        sign, logdet = np.linalg.slogdet(cov)
        state["mu"].append(mu)
        state["solve"].append(np.linalg.inv(cov))
        state["logdet"].append(logdet)
        state["logprior"].append(math.log(rows.shape[0] / n))
    return state


def _predict_qda(state, X):
    scores = np.empty((X.shape[0], 2))
    for cls in (0, 1):
        diff = X - state["mu"][cls]
        quad = np.einsum("ij,jk,ik->i", diff, state["solve"][cls], diff)
        scores[:, cls] = -0.5 * (state["logdet"][cls] + quad) + state["logprior"][cls]
    return (scores[:, 1] > scores[:, 0]).astype(np.int8)


def _fit_nb(X, y, hp):
    n = X.shape[0]
    means, variances, logpriors = [], [], []
    for cls in (0, 1):
        rows = X[y == cls]
        means.append(rows.mean(axis=0))
        variances.append(rows.var(axis=0, ddof=1))
        logpriors.append(math.log(rows.shape[0] / n))
    variances = np.stack(variances)
    floor = max(hp["var_floor_ratio"] * float(variances.max()), 1e-30)
    variances = np.maximum(variances, floor)
    return {"mu": np.stack(means), "var": variances, "logprior": np.array(logpriors)}


def _predict_nb(state, X):
    scores = np.empty((X.shape[0], 2))
    for cls in (0, 1):
        z = (X - state["mu"][cls]) ** 2 / state["var"][cls]
        scores[:, cls] = (
            -0.5 * (z + np.log(2 * math.pi * state["var"][cls])).sum(axis=1)
            + state["logprior"][cls]
        )
    return (scores[:, 1] > scores[:, 0]).astype(np.int8)


def _fit_knn(X, y, hp):
    k = int(hp["k"])
    if k < 1:
        raise ConfigError("KNN needs k >= 1")
    return {"X": X.copy(), "y": y.copy(), "k": min(k, X.shape[0])}


def _predict_knn(state, X):
    train = state["X"]
    k = state["k"]
    d2 = (
        (X**2).sum(axis=1)[:, None]
        + (train**2).sum(axis=1)[None, :]
        - 2.0 * X @ train.T
    )
    # Stable sort: equidistant neighbors resolve to the lowest training index.
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = state["y"][nearest].sum(axis=1)
    return (2 * votes > k).astype(np.int8)  # vote ties resolve to CN


def _fit_sli(X, y, hp, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = LinearSVC(
            C=hp["C"],
            loss="hinge",
            tol=hp["tol"],
            max_iter=int(hp["max_iter"]),
            random_state=seed % (2**31 - 1),
        ).fit(X, y)
    return model


def _fit_srbf(X, y, hp):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = SVC(
            C=hp["C"],
            kernel="rbf",
            gamma=1.0 / X.shape[1],
            tol=hp["tol"],
            max_iter=int(hp["max_iter"]),
            cache_size=128,
        ).fit(X, y)
    return model


def fit(kind: ClassifierKind, X: np.ndarray, y: np.ndarray, seed: int = 0) -> FittedModel:
    """Fit one classifier. Deterministic given (X, y, hyperparams, seed)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int8)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError("X must be (n, p) with one label per row")
    if X.shape[1] == 0:
        raise EmptyFeatureError("cannot fit on zero features")
    n0, n1 = int(np.sum(y == 0)), int(np.sum(y == 1))
    if n0 == 0 or n1 == 0:
        raise DegenerateLabelsError("training labels contain a single class")
    if n0 < 2 or n1 < 2:
        raise DegenerateLabelsError("need at least 2 samples per class")

    hp = kind.hyperparams
    if kind.tag == "LDA":
        state = _fit_lda(X, y, hp)
    elif kind.tag == "QDA":
        state = _fit_qda(X, y, hp)
    elif kind.tag == "NB":
        state = _fit_nb(X, y, hp)
    elif kind.tag == "KNN":
        state = _fit_knn(X, y, hp)
    elif kind.tag == "SLI":
        state = _fit_sli(X, y, hp, seed)
    elif kind.tag == "SRBF":
        state = _fit_srbf(X, y, hp)
    else:  # RF
        state = forest.fit_forest(
            X, y, n_trees=int(hp["n_trees"]), min_leaf=int(hp["min_leaf"]), seed=seed
        )
    return FittedModel(kind=kind, n_features=X.shape[1], state=state)


def predict(model: FittedModel, X: np.ndarray) -> np.ndarray:
    """Predict 0/1 labels; pure function of (model, X)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(
            f"expected {model.n_features} feature columns, got shape {X.shape}"
        )
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.int8)
    tag = model.kind.tag
    if tag == "LDA":
        return _predict_lda(model.state, X)
    if tag == "QDA":
        return _predict_qda(model.state, X)
    if tag == "NB":
        return _predict_nb(model.state, X)
    if tag == "KNN":
        return _predict_knn(model.state, X)
    if tag in ("SLI", "SRBF"):
        return model.state.predict(X).astype(np.int8)
    return forest.forest_predict(model.state, X).astype(np.int8)


# ---------------------------------------------------------------------------
# Stratified k-fold cross-validation
# ---------------------------------------------------------------------------

def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Assign each sample to one of k folds, stratified by class.

    Within each class the shuffled samples are dealt into folds whose sizes
    differ by at most one. Pure function of (y, k, seed).
    """
    y = np.asarray(y)
    if k < 2:
        raise ConfigError("need k >= 2 folds")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=np.int32)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise StratificationError(
                f"class {cls} has {len(idx)} samples, fewer than k={k}"
            )
        idx = rng.permutation(idx)
        base, extra = divmod(len(idx), k)
        start = 0
        for f in range(k):
            size = base + (1 if f < extra else 0)
            assignment[idx[start : start + size]] = f
            start += size
    return assignment


def cross_validate(
    kind: ClassifierKind,
    X: np.ndarray,
    y: np.ndarray,
    k: int = 10,
    seed: int = 0,
    fold_assignment: np.ndarray | None = None,
) -> CvResult:
    """k-fold CV; every sample is predicted once by a model not trained on it.

    Fold assignment is stratified and seeded; per-fold fit seeds derive from
    (seed, fold index) so folds may run in any order with identical results.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int8)
    if fold_assignment is None:
        fold_assignment = stratified_folds(y, k, seed)
    else:
        fold_assignment = np.asarray(fold_assignment, dtype=np.int32)
        k = int(fold_assignment.max()) + 1

    correct = 0
    fold_accuracies = np.empty(k)
    for f in range(k):
        test = fold_assignment == f
        model = fit(kind, X[~test], y[~test], seed=derive_seed(seed, "fold", f))
        pred = predict(model, X[test])
        hits = int(np.sum(pred == y[test]))
        fold_accuracies[f] = hits / int(test.sum())
        correct += hits
    return CvResult(
        accuracy=correct / len(y),
        fold_accuracies=fold_accuracies,
        fold_assignment=fold_assignment,
        mean_fold_accuracy=float(fold_accuracies.mean()),
    )
