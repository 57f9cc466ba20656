"""Soft-margin kernel SVM trained with sequential minimal optimization,
one-vs-one multiclass voting on top, and versioned JSON model files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import StandardizationParams

DEFAULT_C = 10.0
KKT_TOL = 1e-3
MAX_PASSES = 10          # consecutive no-progress sweeps before stopping
MAX_SWEEPS = 300
MIN_ALPHA_STEP = 1e-7
SV_ALPHA_FLOOR = 1e-10

MODEL_FORMAT = "mobisense-ovo-svm"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Kernel:
    """Kernel choice; gamma=None means 1/(d * mean per-dim variance) at fit."""

    name: str
    gamma: float | None = None

    def __post_init__(self) -> None:
        if self.name not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel: {self.name}")


def _kernel_matrix(name: str, gamma: float | None, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if name == "linear":
        return A @ B.T
    sq = (np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :]
          - 2.0 * (A @ B.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


def resolve_gamma(kernel: Kernel, X: np.ndarray) -> float | None:
    if kernel.name == "linear":
        return None
    if kernel.gamma is not None:
        return float(kernel.gamma)
    d = X.shape[1]
    var = float(np.mean(np.var(X, axis=0)))
    if var < 1e-12:
        return 1.0 / d
    return 1.0 / (d * var)


@dataclass(frozen=True)
class BinarySvm:
    """Trained binary classifier: support vectors, dual coefficients, bias."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    kernel: str
    gamma: float | None
    C: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "support_vectors",
                           np.asarray(self.support_vectors, dtype=float))
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=float))
        if np.any(self.alphas < -1e-12) or np.any(self.alphas > self.C + 1e-9):
            raise ValueError("alphas must lie in [0, C]")
        if abs(float(np.dot(self.alphas, self.labels))) > 1e-6:
            raise ValueError("dual constraint sum(alpha*y) = 0 violated")

    @property
    def n_support(self) -> int:
        return len(self.alphas)


def train_binary(X: np.ndarray, y: Sequence[int], C: float, kernel: Kernel,
                 seed=0) -> BinarySvm:
    """Train by simplified SMO with a seeded random second-choice heuristic.

    Rows are canonically sorted before optimization, so the result is
    independent of input row order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with matching labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +/-1")
    if len(np.unique(y)) < 2:
        raise ValueError("training data contains a single class")
    if not C > 0:
        raise ValueError("C must be positive")

    order = np.lexsort(tuple(X.T) + (y,))
    X = X[order]
    y = y[order]

    n = len(y)
    gamma = resolve_gamma(kernel, X)
    K = _kernel_matrix(kernel.name, gamma, X, X)
    alphas = np.zeros(n)
    b = 0.0
    rng = np.random.default_rng(seed)

    def f(i: int) -> float:
        return float(np.dot(alphas * y, K[:, i]) + b)

    def take_step(i: int, j: int, Ei: float) -> bool:
        nonlocal b
        Ej = f(j) - y[j]
        ai, aj = alphas[i], alphas[j]
        if y[i] != y[j]:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        else:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        if H - L < 1e-12:
            return False
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= -1e-12:
            return False
        aj_new = aj - y[j] * (Ei - Ej) / eta
        aj_new = min(H, max(L, aj_new))
        if abs(aj_new - aj) < MIN_ALPHA_STEP:
            return False
        ai_new = ai + y[i] * y[j] * (aj - aj_new)
        alphas[i], alphas[j] = ai_new, aj_new
        b1 = b - Ei - y[i] * (ai_new - ai) * K[i, i] - y[j] * (aj_new - aj) * K[i, j]
        b2 = b - Ej - y[i] * (ai_new - ai) * K[i, j] - y[j] * (aj_new - aj) * K[j, j]
        if 0.0 < ai_new < C:
            b = b1
        elif 0.0 < aj_new < C:
            b = b2
        else:
            b = (b1 + b2) / 2.0
        return True

    passes = 0
    sweeps = 0
    while passes < MAX_PASSES and sweeps < MAX_SWEEPS:
        changed = 0
        for i in range(n):
            Ei = f(i) - y[i]
            if not ((y[i] * Ei < -KKT_TOL and alphas[i] < C)
                    or (y[i] * Ei > KKT_TOL and alphas[i] > 0)):
                continue
            # random second choice, then exhaustive fallback: a no-change
            # sweep therefore certifies that no pair step can improve
            j0 = int(rng.integers(n - 1))
            if j0 >= i:
                j0 += 1
            if take_step(i, j0, Ei):
                changed += 1
                continue
            for j in range(n):
                if j in (i, j0):
                    continue
                if take_step(i, j, Ei):
                    changed += 1
                    break
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0

    sv = alphas > SV_ALPHA_FLOOR
    return BinarySvm(X[sv].copy(), alphas[sv].copy(), y[sv].copy(), float(b),
                     kernel.name, gamma, float(C))


def decision_value(model: BinarySvm, x: np.ndarray) -> float:
    """sum_i alpha_i y_i K(sv_i, x) + bias."""
    return float(decision_values(model, np.asarray(x, dtype=float)[None, :])[0])


def decision_values(model: BinarySvm, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if model.n_support == 0:
        return np.full(len(X), model.bias)
    K = _kernel_matrix(model.kernel, model.gamma, X, model.support_vectors)
    return K @ (model.alphas * model.labels) + model.bias


@dataclass(frozen=True)
class OvoSvmModel:
    """One binary SVM per unordered class pair, plus the shared scaler."""

    classes: tuple[str, ...]
    pairwise: dict[tuple[int, int], BinarySvm]
    standardization: StandardizationParams

    def __post_init__(self) -> None:
        k = len(self.classes)
        expected = {(i, j) for i in range(k) for j in range(i + 1, k)}
        if set(self.pairwise.keys()) != expected:
            raise ValueError("pairwise models must cover every class pair exactly once")

    @property
    def n_pairs(self) -> int:
        return len(self.pairwise)


def train_ovo(X: np.ndarray, y_labels: Sequence[str], C: float, kernel: Kernel,
              standardization: StandardizationParams,
              classes: Sequence[str] | None = None, seed: int = 0) -> OvoSvmModel:
    """Train k(k-1)/2 pairwise models; X must already be standardized."""
    X = np.asarray(X, dtype=float)
    y_labels = list(y_labels)
    if classes is None:
        classes = tuple(sorted(set(y_labels)))
    else:
        classes = tuple(classes)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    per_class = {c: np.array([lab == c for lab in y_labels]) for c in classes}
    for c in classes:
        if not per_class[c].any():
            raise ValueError(f"class with zero rows: {c}")
    pairwise = {}
    for i in range(len(classes)):
        for j in range(i + 1, len(classes)):
            mask = per_class[classes[i]] | per_class[classes[j]]
            Xp = X[mask]
            yp = np.where(per_class[classes[j]][mask], 1.0, -1.0)
            pairwise[(i, j)] = train_binary(Xp, yp, C, kernel, seed=[seed, i, j])
    return OvoSvmModel(classes, pairwise, standardization)


def ovo_votes(model: OvoSvmModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row vote counts and won-pair |decision| sums, per class."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    k = len(model.classes)
    votes = np.zeros((len(X), k), dtype=int)
    margins = np.zeros((len(X), k))
    for (i, j), binary in model.pairwise.items():
        d = decision_values(binary, X)
        to_j = d > 0
        votes[:, j] += to_j
        votes[:, i] += ~to_j
        margins[:, j] += np.where(to_j, np.abs(d), 0.0)
        margins[:, i] += np.where(to_j, 0.0, np.abs(d))
    return votes, margins


def predict_ovo(model: OvoSvmModel, x: np.ndarray) -> str:
    """Pairwise vote; ties broken by won-pair |decision| sums, then class order."""
    label, _ = predict_ovo_detail(model, x)
    return label


def predict_ovo_detail(model: OvoSvmModel, x: np.ndarray) -> tuple[str, float]:
    labels, margins = predict_ovo_batch(model, np.asarray(x, dtype=float)[None, :])
    return labels[0], float(margins[0])


def predict_ovo_batch(model: OvoSvmModel, X: np.ndarray) -> tuple[list[str], np.ndarray]:
    """Predict many rows at once; returns labels and the winner's margin sum."""
    votes, margins = ovo_votes(model, X)
    labels = []
    out_margin = np.zeros(len(votes))
    for r in range(len(votes)):
        best = votes[r].max()
        tied = np.nonzero(votes[r] == best)[0]
        if len(tied) > 1:
            # largest margin sum among tied classes; residual ties by class order
            tied = tied[margins[r, tied] == margins[r, tied].max()]
        winner = int(tied[0])
        labels.append(model.classes[winner])
        out_margin[r] = margins[r, winner]
    return labels, out_margin


def model_to_doc(model: OvoSvmModel) -> dict:
    """Versioned JSON-ready document; floats round-trip exactly."""
    pairs = []
    for (i, j), binary in sorted(model.pairwise.items()):
        pairs.append({
            "class_a": model.classes[i],
            "class_b": model.classes[j],
            "kernel": binary.kernel,
            "gamma": binary.gamma,
            "C": binary.C,
            "support_vectors": [[float(v) for v in row] for row in binary.support_vectors],
            "alphas": [float(a) for a in binary.alphas],
            "labels": [float(v) for v in binary.labels],
            "bias": binary.bias,
        })
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "classes": list(model.classes),
        "standardization": {
            "mean": [float(v) for v in model.standardization.mean],
            "std": [float(v) for v in model.standardization.std],
            "schema_id": model.standardization.schema_id,
        },
        "pairs": pairs,
    }


def model_from_doc(doc: dict) -> OvoSvmModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version: {doc.get('version')}")
    classes = tuple(doc["classes"])
    index = {c: i for i, c in enumerate(classes)}
    pairwise = {}
    for p in doc["pairs"]:
        i, j = index[p["class_a"]], index[p["class_b"]]
        sv = np.array(p["support_vectors"], dtype=float)
        if len(p["alphas"]) == 0:
            sv = sv.reshape(0, 0)
        pairwise[(i, j)] = BinarySvm(
            sv,
            np.array(p["alphas"], dtype=float),
            np.array(p["labels"], dtype=float),
            float(p["bias"]),
            p["kernel"],
            None if p["gamma"] is None else float(p["gamma"]),
            float(p["C"]),
        )
    st = doc["standardization"]
    params = StandardizationParams(np.array(st["mean"]), np.array(st["std"]),
                                   st["schema_id"])
    return OvoSvmModel(classes, pairwise, params)


def save_model(path, model: OvoSvmModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_doc(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> OvoSvmModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_doc(json.load(fh))
