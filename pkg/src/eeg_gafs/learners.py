"""Wrapped evaluation models and report metrics."""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.decomposition import PCA
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import confusion_matrix, f1_score, recall_score
from sklearn.model_selection import StratifiedKFold, cross_val_predict
from sklearn.multiclass import OneVsOneClassifier
from sklearn.svm import LinearSVC

from .errors import ConfigurationError, DegenerateError
from .models import ColumnMeta, FeatureMatrix, LabeledData

logger = logging.getLogger(__name__)

SVM_C = 1.0
SVM_MAX_ITER = 10000
SVM_TOL = 1e-4
KMEANS_MAX_ITER = 300
KMEANS_RESTARTS = 5


@dataclass
class ClassMetrics:
    """Pooled out-of-fold classification metrics."""
    labels: List[str]
    per_class_accuracy: Dict[str, float]
    global_accuracy: float
    weighted_f1: float
    confusion: np.ndarray
    folds_used: int = 0
    folds_reduced: bool = False

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "per_class_accuracy": dict(self.per_class_accuracy),
            "global_accuracy": self.global_accuracy,
            "weighted_f1": self.weighted_f1,
            "confusion": self.confusion.tolist(),
            "folds_used": self.folds_used,
            "folds_reduced": self.folds_reduced,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassMetrics":
        return cls(
            labels=list(data["labels"]),
            per_class_accuracy=dict(data["per_class_accuracy"]),
            global_accuracy=float(data["global_accuracy"]),
            weighted_f1=float(data["weighted_f1"]),
            confusion=np.asarray(data["confusion"], dtype=int),
            folds_used=int(data.get("folds_used", 0)),
            folds_reduced=bool(data.get("folds_reduced", False)),
        )


@dataclass
class ClusterResult:
    """K-means outcome under the city-block metric."""
    assignments: np.ndarray
    centroids: np.ndarray
    avg_silhouette: float
    cost: float
    cost_history: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "assignments": self.assignments.tolist(),
            "centroids": self.centroids.tolist(),
            "avg_silhouette": self.avg_silhouette,
            "cost": self.cost,
        }


# --- supervised -----------------------------------------------------------

def _check_supervised(data: LabeledData) -> None:
    if data.n_features == 0:
        raise ConfigurationError("empty feature mask")
    if len(data.classes) < 2:
        raise ConfigurationError(f"supervised evaluation needs >= 2 classes (got {data.classes})")


def _svm(seed: int) -> LinearSVC:
    return LinearSVC(C=SVM_C, loss="hinge", dual=True, tol=SVM_TOL, max_iter=SVM_MAX_ITER, random_state=seed)


def _folds_for(data: LabeledData, folds: int) -> Tuple[int, bool]:
    smallest = min(data.class_counts().values())
    if smallest >= folds:
        return folds, False
    if smallest < 2:
        raise ConfigurationError(f"a class has a single instance; cannot stratify (counts {data.class_counts()})")
    logger.warning(f"Reducing CV folds from {folds} to {smallest} (smallest class size)")
    return smallest, True


def cross_validated_predictions(data: LabeledData, folds: int = 10, seed: int = 0) -> Tuple[np.ndarray, int, bool]:
    """
    Out-of-fold predictions of the linear SVM.

    Binary problems train one soft-margin SVM per fold; more classes use
    one-vs-one voting with ties broken by summed decision values.

    Returns:
        (predictions, folds used, whether folds were reduced)
    """
    _check_supervised(data)
    n_folds, reduced = _folds_for(data, folds)
    cv = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
    model = _svm(seed) if len(data.classes) == 2 else OneVsOneClassifier(_svm(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        predictions = cross_val_predict(model, data.X, data.labels, cv=cv)
    return predictions, n_folds, reduced


def svm_cv_accuracy(data: LabeledData, folds: int = 10, seed: int = 0) -> float:
    """Pooled cross-validated accuracy: correct / total over all folds."""
    predictions, _, _ = cross_validated_predictions(data, folds, seed)
    return float(np.mean(predictions == data.labels))


def metrics_from_predictions(
    y_true: Sequence, y_pred: Sequence, labels: Optional[Sequence[str]] = None
) -> ClassMetrics:
    """Per-class recall, global accuracy, support-weighted F1 and the confusion matrix."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    labels = list(labels) if labels is not None else sorted(set(y_true.tolist()) | set(y_pred.tolist()))
    confusion = confusion_matrix(y_true, y_pred, labels=labels)
    recalls = recall_score(y_true, y_pred, labels=labels, average=None, zero_division=0)
    return ClassMetrics(
        labels=[str(l) for l in labels],
        per_class_accuracy={str(l): float(r) for l, r in zip(labels, recalls)},
        global_accuracy=float(np.trace(confusion) / confusion.sum()),
        weighted_f1=float(f1_score(y_true, y_pred, labels=labels, average="weighted", zero_division=0)),
        confusion=confusion,
    )


def classification_report(data: LabeledData, folds: int = 10, seed: int = 0) -> ClassMetrics:
    """ClassMetrics from pooled out-of-fold SVM predictions."""
    predictions, n_folds, reduced = cross_validated_predictions(data, folds, seed)
    metrics = metrics_from_predictions(data.labels, predictions, labels=data.classes)
    metrics.folds_used = n_folds
    metrics.folds_reduced = reduced
    logger.info(
        f"SVM {n_folds}-fold: gAcc={metrics.global_accuracy:.4f} waF1={metrics.weighted_f1:.4f}"
    )
    return metrics


def canonical_order(X: np.ndarray, labels: Sequence) -> np.ndarray:
    """Row order sorted by label, then by feature values column by column."""
    X = np.asarray(X)
    keys = [X[:, j] for j in reversed(range(X.shape[1]))] + [np.asarray(labels).astype(str)]
    return np.lexsort(keys)


# --- unsupervised ---------------------------------------------------------

def _cityblock(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b, metric="cityblock")


def _seed_centroids(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with city-block distances as sampling weights."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    nearest = _cityblock(X, X[chosen])[:, 0]
    for _ in range(1, k):
        weights = nearest.copy()
        weights[chosen] = 0.0
        total = weights.sum()
        if total > 0:
            idx = int(rng.choice(n, p=weights / total))
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        chosen.append(idx)
        nearest = np.minimum(nearest, _cityblock(X, X[[idx]])[:, 0])
    return X[chosen].astype(float)


def _assign(X: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, float]:
    d = _cityblock(X, centroids)
    labels = np.argmin(d, axis=1)
    return labels, float(d[np.arange(X.shape[0]), labels].sum())


def _update(X: np.ndarray, labels: np.ndarray, k: int, previous: np.ndarray) -> np.ndarray:
    centroids = previous.copy()
    empty = []
    for c in range(k):
        members = X[labels == c]
        if members.size:
            centroids[c] = np.median(members, axis=0)
        else:
            empty.append(c)
    if empty:
        # reseed each empty cluster at the point farthest from its own centroid
        dist = np.abs(X - centroids[labels]).sum(axis=1)
        taken = set()
        for c in empty:
            order = np.argsort(-dist, kind="stable")
            idx = next(int(i) for i in order if int(i) not in taken)
            taken.add(idx)
            centroids[c] = X[idx]
        logger.debug(f"Reseeded {len(empty)} empty cluster(s)")
    return centroids


def _kmeans_once(X: np.ndarray, k: int, seed: int) -> Tuple[np.ndarray, np.ndarray, float, List[float]]:
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(X, k, rng)
    labels, cost = _assign(X, centroids)
    history = [cost]
    for _ in range(KMEANS_MAX_ITER):
        centroids = _update(X, labels, k, centroids)
        new_labels, cost = _assign(X, centroids)
        history.append(cost)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centroids, cost, history


def kmeans(X: np.ndarray, k: int, seed: int = 0) -> ClusterResult:
    """
    K-means under the city-block metric with median centroids.

    Best of five restarts (seeds seed..seed+4) by total within-cluster cost.

    Raises:
        ConfigurationError: k < 2 or k > number of rows
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ConfigurationError("empty feature mask")
    if k < 2:
        raise ConfigurationError(f"k must be >= 2 (got {k})")
    if k > X.shape[0]:
        raise ConfigurationError(f"k={k} exceeds the {X.shape[0]} rows")

    best = None
    for restart in range(KMEANS_RESTARTS):
        labels, centroids, cost, history = _kmeans_once(X, k, seed + restart)
        if best is None or cost < best[2]:
            best = (labels, centroids, cost, history)

    labels, centroids, cost, history = best
    return ClusterResult(
        assignments=labels,
        centroids=centroids,
        avg_silhouette=silhouette(X, labels),
        cost=cost,
        cost_history=history,
    )


def silhouette_samples(X: np.ndarray, assignments: Sequence[int]) -> np.ndarray:
    """
    Per-element silhouette with city-block dissimilarity.

    Singleton clusters score 0, as does a = b = 0.
    """
    X = np.asarray(X, dtype=float)
    assignments = np.asarray(assignments)
    clusters = np.unique(assignments)
    if clusters.size < 2:
        raise ConfigurationError("silhouette needs more than one cluster")

    d = _cityblock(X, X)
    masks = {c: assignments == c for c in clusters}
    sizes = {c: int(m.sum()) for c, m in masks.items()}
    scores = np.zeros(X.shape[0])
    for i, own in enumerate(assignments):
        if sizes[own] == 1:
            continue
        a = d[i, masks[own]].sum() / (sizes[own] - 1)
        b = min(d[i, masks[c]].mean() for c in clusters if c != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return scores


def silhouette(X: np.ndarray, assignments: Sequence[int]) -> float:
    """Unweighted mean silhouette over all elements."""
    return float(np.mean(silhouette_samples(X, assignments)))


@dataclass
class SweepResult:
    """Average silhouette per k and the k maximising it."""
    scores: List[Tuple[int, float]]
    best_k: int

    def to_dict(self) -> dict:
        return {"scores": [[k, s] for k, s in self.scores], "best_k": self.best_k}


def cluster_evaluator_sweep(X: np.ndarray, k_min: int = 2, k_max: Optional[int] = None, seed: int = 0,
                            n_tasks: Optional[int] = None) -> SweepResult:
    """
    K-means + silhouette for every k in [k_min, k_max].

    `k_max` defaults to the number of tasks plus one.
    """
    X = np.asarray(X, dtype=float)
    if k_max is None:
        if n_tasks is None:
            raise ConfigurationError("k_max or n_tasks is required")
        k_max = n_tasks + 1
    if k_max < k_min:
        raise ConfigurationError(f"k_max {k_max} < k_min {k_min}")
    if k_max > X.shape[0]:
        raise ConfigurationError(f"k_max={k_max} exceeds the {X.shape[0]} rows")

    scores = []
    for k in range(k_min, k_max + 1):
        result = kmeans(X, k, seed)
        scores.append((k, result.avg_silhouette))
        logger.debug(f"Sweep k={k}: silhouette {result.avg_silhouette:.4f}")
    best_k = max(scores, key=lambda item: (item[1], -item[0]))[0]
    logger.info(f"Evaluator sweep k={k_min}..{k_max}: optimal clusters k={best_k}")
    return SweepResult(scores=scores, best_k=best_k)


# --- PCA benchmark --------------------------------------------------------

def fit_pca(X: np.ndarray, variance_threshold: float = 0.95) -> PCA:
    """
    Fit PCA keeping the fewest leading components whose cumulative
    explained variance reaches `variance_threshold`.

    Raises:
        DegenerateError: Zero total variance
        ConfigurationError: Bad threshold or fewer than 2 rows
    """
    X = np.asarray(X, dtype=float)
    if not (0 < variance_threshold <= 1):
        raise ConfigurationError(f"variance_threshold must be in (0, 1] (got {variance_threshold})")
    if X.shape[0] < 2:
        raise ConfigurationError("PCA needs at least 2 rows")
    if not np.var(X, axis=0, ddof=1).sum() > 0:
        raise DegenerateError("PCA on a zero-variance matrix")

    full = PCA(svd_solver="full").fit(X)
    cumulative = np.cumsum(full.explained_variance_ratio_)
    n_components = int(np.searchsorted(cumulative, variance_threshold - 1e-12, side="left")) + 1
    n_components = min(n_components, full.n_components_)
    logger.info(
        f"PCA keeps {n_components} of {X.shape[1]} dimensions "
        f"({cumulative[n_components - 1]:.4f} explained variance)"
    )
    return PCA(n_components=n_components, svd_solver="full").fit(X)


def pca_reduce(matrix: FeatureMatrix, variance_threshold: float = 0.95) -> FeatureMatrix:
    """Project the matrix onto its leading principal components."""
    pca = fit_pca(matrix.values, variance_threshold)
    scores = pca.transform(matrix.values)
    return FeatureMatrix(
        values=scores,
        column_meta=[ColumnMeta(electrode=f"PC{j + 1}", kind="pca_component") for j in range(scores.shape[1])],
        row_meta=list(matrix.row_meta),
    )
