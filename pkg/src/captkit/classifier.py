"""Intelligibility predictors: RBF-kernel SVM (SMO) and logistic baseline.

The SVM is trained by sequential minimal optimization with an error
cache and the classic two-loop outer structure; probabilities come from
a Platt sigmoid fitted by Newton's method on out-of-fold decision
values.  The baseline is a ridge-stabilized logistic regression fitted
by iteratively reweighted least squares.  Inputs are standardized
per-dimension with the training statistics stored in the model.

One model is trained per word type, so feature vectors within a model
share the 9*P+1 layout.  Models serialize to a lossless text format and
a directory of models is indexed by a JSON manifest.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import TrainingCorpus, accuracy_parts
from .errors import DataFormatError, DegenerateDataError, DomainError

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
MAX_PASSES = 10_000
RIDGE = 1e-6

_STD_FLOOR = 1e-12


def standardize_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < _STD_FLOOR, 1.0, std)
    return mean, std


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2) for all row pairs."""
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    d2 = np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)
    return np.exp(-gamma * d2)


def default_gamma(X_standardized: np.ndarray) -> float:
    d = X_standardized.shape[1]
    v = float(X_standardized.var())
    if v <= 0:
        return 1.0 / d
    return 1.0 / (d * v)


def _check_training_inputs(X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DomainError("X must be (n, d) with one label per row")
    if X.shape[0] < 2:
        raise DegenerateDataError("need at least two training rows")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DomainError("labels must be +1 or -1")
    if np.all(y > 0) or np.all(y < 0):
        raise DegenerateDataError("training data contains a single class")


# ---------------------------------------------------------------------------
# SMO


@dataclass
class SmoDiagnostics:
    alpha: np.ndarray
    iterations: int
    objective: float


class _Smo:
    """Sequential minimal optimization on a precomputed Gram matrix."""

    def __init__(self, K, y, C, tol, rng):
        self.K = K
        self.y = y
        self.C = C
        self.tol = tol
        self.rng = rng
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        # error cache: E_i = f(x_i) - y_i; starts at -y with alpha = 0
        self.E = -y.astype(np.float64).copy()
        self.eps = 1e-12
        self.steps = 0

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1_old, a2_old = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        E1, E2 = self.E[i1], self.E[i2]
        s = y1 * y2
        if s > 0:
            L = max(0.0, a1_old + a2_old - self.C)
            H = min(self.C, a1_old + a2_old)
        else:
            L = max(0.0, a2_old - a1_old)
            H = min(self.C, self.C + a2_old - a1_old)
        if L >= H:
            return False
        k11 = self.K[i1, i1]
        k12 = self.K[i1, i2]
        k22 = self.K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (E1 - E2) / eta
            a2 = min(max(a2, L), H)
        else:
            # objective is linear (or concave) in a2 on [L, H]: test the ends
            f1 = y1 * E1 - a1_old * k11 - s * a2_old * k12
            f2 = y2 * E2 - s * a1_old * k12 - a2_old * k22
            L1 = a1_old + s * (a2_old - L)
            H1 = a1_old + s * (a2_old - H)
            Lobj = (L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22
                    + s * L * L1 * k12)
            Hobj = (H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22
                    + s * H * H1 * k12)
            if Lobj < Hobj - self.eps:
                a2 = L
            elif Lobj > Hobj + self.eps:
                a2 = H
            else:
                return False
        if abs(a2 - a2_old) < self.eps * (a2 + a2_old + self.eps):
            return False
        a1 = a1_old + s * (a2_old - a2)
        if a1 < 0.0:
            a1 = 0.0
        elif a1 > self.C:
            a1 = self.C
        d1 = y1 * (a1 - a1_old)
        d2 = y2 * (a2 - a2_old)
        b1 = self.b - E1 - d1 * k11 - d2 * k12
        b2 = self.b - E2 - d1 * k12 - d2 * k22
        if 0.0 < a1 < self.C:
            new_b = b1
        elif 0.0 < a2 < self.C:
            new_b = b2
        else:
            new_b = 0.5 * (b1 + b2)
        self.E += d1 * self.K[i1] + d2 * self.K[i2] + (new_b - self.b)
        self.b = new_b
        self.alpha[i1] = a1
        self.alpha[i2] = a2
        self.steps += 1
        return True

    def _violates(self, i: int) -> bool:
        r = self.E[i] * self.y[i]
        return (r < -self.tol and self.alpha[i] < self.C) or \
               (r > self.tol and self.alpha[i] > 0.0)

    def examine(self, i2: int) -> bool:
        if not self._violates(i2):
            return False
        non_bound = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.C))
        if len(non_bound) > 1:
            # second-choice heuristic: maximize |E1 - E2|
            diffs = np.abs(self.E[non_bound] - self.E[i2])
            i1 = int(non_bound[int(np.argmax(diffs))])
            if self.take_step(i1, i2):
                return True
        if len(non_bound):
            start = int(self.rng.integers(len(non_bound)))
            for k in range(len(non_bound)):
                if self.take_step(int(non_bound[(start + k) % len(non_bound)]), i2):
                    return True
        start = int(self.rng.integers(self.n))
        for k in range(self.n):
            if self.take_step((start + k) % self.n, i2):
                return True
        return False

    def run(self) -> None:
        examine_all = True
        passes = 0
        while passes < MAX_PASSES:
            passes += 1
            changed = 0
            if examine_all:
                for i in range(self.n):
                    changed += self.examine(i)
            else:
                for i in np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.C)):
                    changed += self.examine(int(i))
            if examine_all:
                if changed == 0:
                    return
                examine_all = False
            elif changed == 0:
                examine_all = True

    def objective(self) -> float:
        ay = self.alpha * self.y
        return float(self.alpha.sum() - 0.5 * ay @ self.K @ ay)


# ---------------------------------------------------------------------------
# Platt calibration (Newton fit with smoothed targets)


def fit_platt(decision_values: np.ndarray, y: np.ndarray,
              max_iter: int = 100) -> tuple[float, float]:
    """Fit p(y=1|f) = 1/(1+exp(A f + B)); returns (A, B) with A < 0."""
    f = np.asarray(decision_values, dtype=np.float64)
    labels = np.asarray(y)
    prior1 = float(np.sum(labels > 0))
    prior0 = float(np.sum(labels <= 0))
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(labels > 0, hi, lo)
    A = 0.0
    B = math.log((prior0 + 1.0) / (prior1 + 1.0))
    sigma = 1e-12
    min_step = 1e-10

    def value(A, B):
        fApB = f * A + B
        pos = fApB >= 0
        out = np.empty_like(fApB)
        out[pos] = t[pos] * fApB[pos] + np.log1p(np.exp(-fApB[pos]))
        out[~pos] = (t[~pos] - 1.0) * fApB[~pos] + np.log1p(np.exp(fApB[~pos]))
        return float(out.sum())

    fval = value(A, B)
    for _ in range(max_iter):
        fApB = f * A + B
        pos = fApB >= 0
        p = np.empty_like(fApB)
        q = np.empty_like(fApB)
        e_neg = np.exp(-np.abs(fApB))
        p[pos] = e_neg[pos] / (1.0 + e_neg[pos])
        q[pos] = 1.0 / (1.0 + e_neg[pos])
        p[~pos] = 1.0 / (1.0 + e_neg[~pos])
        q[~pos] = e_neg[~pos] / (1.0 + e_neg[~pos])
        d1 = t - p
        d2 = p * q
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        h11 = float(np.sum(f * f * d2)) + sigma
        h22 = float(np.sum(d2)) + sigma
        h21 = float(np.sum(f * d2))
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= min_step:
            newA, newB = A + step * dA, B + step * dB
            newf = value(newA, newB)
            if newf < fval + 1e-4 * step * gd:
                A, B, fval = newA, newB, newf
                break
            step /= 2.0
        else:
            break
    if A >= 0.0:
        A = -1e-12  # enforce monotone-increasing probability in f
    return A, B


def _sigmoid_vec(f: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+exp(-f)) without overflow for large |f|."""
    out = np.empty_like(f, dtype=np.float64)
    pos = f >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-f[pos]))
    ef = np.exp(f[~pos])
    out[~pos] = ef / (1.0 + ef)
    return out


def _sigmoid_prob(decision: float, A: float, B: float) -> float:
    fApB = decision * A + B
    if fApB >= 0:
        e = math.exp(-fApB)
        p = e / (1.0 + e)
    else:
        p = 1.0 / (1.0 + math.exp(fApB))
    return min(max(p, 1e-300), 1.0 - 1e-16)


# ---------------------------------------------------------------------------
# Models


@dataclass
class SvmModel:
    word: str
    num_phonemes: int
    support_vectors: np.ndarray  # (n_sv, d), standardized rows
    dual_coef: np.ndarray  # (n_sv,) alpha_i * y_i
    bias: float
    gamma: float
    C: float
    platt_a: float
    platt_b: float
    mean: np.ndarray
    std: np.ndarray
    diagnostics: SmoDiagnostics | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.support_vectors = np.asarray(self.support_vectors, dtype=np.float64)
        self.dual_coef = np.asarray(self.dual_coef, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        self.bias = float(self.bias)
        self.gamma = float(self.gamma)
        self.C = float(self.C)
        self.platt_a = float(self.platt_a)
        self.platt_b = float(self.platt_b)
        if self.gamma <= 0 or self.C <= 0:
            raise DomainError("gamma and C must be positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DomainError(f"input dimension {x.shape[-1]} != model dim {self.dim}")
        return (x - self.mean) / self.std

    def decision_value(self, x):
        z = self._standardize(x)
        single = z.ndim == 1
        if single:
            z = z[None, :]
        k = rbf_kernel(z, self.support_vectors, self.gamma)
        out = k @ self.dual_coef + self.bias
        return float(out[0]) if single else out

    def predict_prob(self, x):
        f = self.decision_value(x)
        if isinstance(f, float):
            return _sigmoid_prob(f, self.platt_a, self.platt_b)
        return np.array([_sigmoid_prob(v, self.platt_a, self.platt_b) for v in f])


@dataclass
class LogisticModel:
    word: str
    num_phonemes: int
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise DomainError("logistic parameters must be finite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def decision_value(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DomainError(f"input dimension {x.shape[-1]} != model dim {self.dim}")
        z = (x - self.mean) / self.std
        return z @ self.weights + self.bias

    def predict_prob(self, x):
        f = self.decision_value(x)
        if np.ndim(f) == 0:
            return _sigmoid_prob(float(f), -1.0, 0.0)
        return np.array([_sigmoid_prob(float(v), -1.0, 0.0) for v in f])


def predict_prob(model, x):
    return model.predict_prob(x)


# ---------------------------------------------------------------------------
# Training


def _stratified_folds(y: np.ndarray, k: int, rng) -> list[np.ndarray]:
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y < 0)
    rng.shuffle(pos)
    rng.shuffle(neg)
    folds = [[] for _ in range(k)]
    for i, idx in enumerate(pos):
        folds[i % k].append(idx)
    for i, idx in enumerate(neg):
        folds[i % k].append(idx)
    return [np.array(sorted(f), dtype=int) for f in folds]


def train_svm(
    X,
    y,
    C: float = DEFAULT_C,
    gamma: float | None = None,
    tol: float = DEFAULT_TOL,
    word: str = "",
    num_phonemes: int = 0,
    seed: int = 0,
) -> SvmModel:
    """SMO-trained soft-margin RBF SVM with Platt probabilities.

    Deterministic for a fixed seed.  Platt's sigmoid is fitted on
    3-fold out-of-fold decision values (falling back to in-sample values
    when a class is too small to fold).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_training_inputs(X, y)
    mean, std = standardize_fit(X)
    Z = (X - mean) / std
    if gamma is None:
        gamma = default_gamma(Z)
    if gamma <= 0:
        raise DomainError("gamma must be positive")

    def solve(Zs, ys, rng):
        K = rbf_kernel(Zs, Zs, gamma)
        smo = _Smo(K, ys, C, tol, rng)
        smo.run()
        return smo

    rng = np.random.default_rng([seed, 1])
    smo = solve(Z, y, rng)

    # out-of-fold decision values for calibration
    n = len(y)
    kf = min(3, int(np.sum(y > 0)), int(np.sum(y < 0)))
    deci = np.empty(n)
    if kf >= 2:
        folds = _stratified_folds(y, kf, np.random.default_rng([seed, 2]))
        for fi, hold in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(n), hold)
            ys = y[train_idx]
            if np.all(ys > 0) or np.all(ys < 0):
                deci[hold] = 0.0
                continue
            sub = solve(Z[train_idx], ys, np.random.default_rng([seed, 3, fi]))
            ay = sub.alpha * ys
            keep = sub.alpha > 0
            kx = rbf_kernel(Z[hold], Z[train_idx][keep], gamma)
            deci[hold] = kx @ ay[keep] + sub.b
    else:
        ay = smo.alpha * y
        keep = smo.alpha > 0
        kx = rbf_kernel(Z, Z[keep], gamma)
        deci = kx @ ay[keep] + smo.b
    A, B = fit_platt(deci, y)

    keep = smo.alpha > 0
    return SvmModel(
        word=word, num_phonemes=num_phonemes,
        support_vectors=Z[keep].copy(), dual_coef=(smo.alpha * y)[keep],
        bias=smo.b, gamma=gamma, C=C, platt_a=A, platt_b=B,
        mean=mean, std=std,
        diagnostics=SmoDiagnostics(alpha=smo.alpha.copy(), iterations=smo.steps,
                                   objective=smo.objective()))


def logistic_objective(weights, bias, Z, y01, ridge: float = RIDGE):
    """Ridge-regularized negative log-likelihood and its gradients.

    Z is the standardized design matrix, y01 the {0,1} labels.  The
    ridge applies to the weights only, not the bias.
    """
    weights = np.asarray(weights, dtype=np.float64)
    f = Z @ weights + bias
    # log(1 + exp(f)) - y f, stably
    loss = float(np.sum(np.logaddexp(0.0, f) - y01 * f))
    loss += 0.5 * ridge * float(weights @ weights)
    p = _sigmoid_vec(f)
    r = p - y01
    grad_w = Z.T @ r + ridge * weights
    grad_b = float(np.sum(r))
    return loss, grad_w, grad_b


def train_logistic(
    X, y, ridge: float = RIDGE, word: str = "", num_phonemes: int = 0,
    max_iter: int = 200, grad_tol: float = 1e-6,
) -> LogisticModel:
    """Logistic regression by IRLS on standardized inputs."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_training_inputs(X, y)
    mean, std = standardize_fit(X)
    Z = (X - mean) / std
    y01 = (y > 0).astype(np.float64)
    d = Z.shape[1]
    w = np.zeros(d)
    b = 0.0
    loss, gw, gb = logistic_objective(w, b, Z, y01, ridge)
    for _ in range(max_iter):
        gnorm = math.sqrt(float(gw @ gw) + gb * gb)
        if gnorm < grad_tol:
            break
        f = Z @ w + b
        p = _sigmoid_vec(f)
        s = np.maximum(p * (1.0 - p), 1e-10)
        Za = np.hstack([Z, np.ones((Z.shape[0], 1))])
        H = (Za * s[:, None]).T @ Za
        H[:d, :d] += ridge * np.eye(d)
        g = np.append(gw, gb)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-8:
            w2 = w - t * step[:d]
            b2 = b - t * step[d]
            loss2, gw2, gb2 = logistic_objective(w2, b2, Z, y01, ridge)
            if loss2 <= loss:
                w, b, loss, gw, gb = w2, b2, loss2, gw2, gb2
                break
            t /= 2.0
        else:
            break
    return LogisticModel(word=word, num_phonemes=num_phonemes, weights=w,
                         bias=float(b), mean=mean, std=std)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class WordMetrics:
    raw: float
    max_achievable: float
    adjusted: float
    units: int


@dataclass
class EvalResult:
    raw: float
    max_achievable: float
    adjusted: float
    per_word: dict[str, WordMetrics]


def evaluate(models, corpus: TrainingCorpus, threshold: float = 0.5) -> EvalResult:
    """Score per-word models against every transcript label.

    ``models`` maps word -> trained model; predictions are
    predict_prob >= threshold.
    """
    if not corpus.words:
        raise DomainError("empty corpus")
    preds: dict = {}
    labels: dict = {}
    per_word: dict[str, WordMetrics] = {}
    for word, entries in sorted(corpus.words.items()):
        if word not in models:
            raise DomainError(f"no model for word {word!r}")
        model = models[word]
        wp: dict = {}
        wl: dict = {}
        for e in entries:
            p = model.predict_prob(e.vector.values())
            pred = int(p >= threshold)
            key = (word, e.unit_id)
            wp[key] = pred
            wl[key] = e.labels
        raw, best = accuracy_parts(wp, wl)
        per_word[word] = WordMetrics(raw=raw, max_achievable=best,
                                     adjusted=raw / best, units=len(entries))
        preds.update(wp)
        labels.update(wl)
    raw, best = accuracy_parts(preds, labels)
    return EvalResult(raw=raw, max_achievable=best, adjusted=raw / best,
                      per_word=per_word)


# ---------------------------------------------------------------------------
# Serialization


def _fmt_vec(v: np.ndarray) -> str:
    return " ".join(repr(float(x)) for x in v)


def _parse_vec(text: str, expect: int | None = None) -> np.ndarray:
    try:
        out = np.array([float(t) for t in text.split()], dtype=np.float64)
    except ValueError:
        raise DataFormatError("non-numeric value in model file") from None
    if expect is not None and out.shape[0] != expect:
        raise DataFormatError(f"expected {expect} values, got {out.shape[0]}")
    return out


def svm_to_text(m: SvmModel) -> str:
    lines = [
        "CAPTSVM 1",
        f"word {m.word}",
        f"phonemes {m.num_phonemes}",
        f"dim {m.dim}",
        f"C {float(m.C)!r}",
        f"gamma {float(m.gamma)!r}",
        f"A {float(m.platt_a)!r}",
        f"B {float(m.platt_b)!r}",
        f"bias {float(m.bias)!r}",
        f"mean {_fmt_vec(m.mean)}",
        f"std {_fmt_vec(m.std)}",
        f"nsv {len(m.dual_coef)}",
    ]
    for coef, row in zip(m.dual_coef, m.support_vectors):
        lines.append(f"{float(coef)!r} {_fmt_vec(row)}")
    return "\n".join(lines) + "\n"


def _read_kv(lines: list[str], i: int, key: str) -> str:
    if i >= len(lines):
        raise DataFormatError(f"model file truncated before {key!r}")
    parts = lines[i].split(None, 1)
    if parts[0] != key:
        raise DataFormatError(f"expected {key!r}, got {parts[0]!r}")
    return parts[1] if len(parts) > 1 else ""


def _read_float(lines: list[str], i: int, key: str) -> float:
    raw = _read_kv(lines, i, key)
    try:
        return float(raw)
    except ValueError:
        raise DataFormatError(f"non-numeric {key!r}: {raw!r}") from None


def _read_int(lines: list[str], i: int, key: str) -> int:
    raw = _read_kv(lines, i, key)
    try:
        return int(raw)
    except ValueError:
        raise DataFormatError(f"non-integer {key!r}: {raw!r}") from None


def svm_from_text(text: str) -> SvmModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "CAPTSVM 1":
        raise DataFormatError("not an SVM model file")
    word = _read_kv(lines, 1, "word")
    p = _read_int(lines, 2, "phonemes")
    d = _read_int(lines, 3, "dim")
    C = _read_float(lines, 4, "C")
    gamma = _read_float(lines, 5, "gamma")
    A = _read_float(lines, 6, "A")
    B = _read_float(lines, 7, "B")
    bias = _read_float(lines, 8, "bias")
    mean = _parse_vec(_read_kv(lines, 9, "mean"), d)
    std = _parse_vec(_read_kv(lines, 10, "std"), d)
    nsv = _read_int(lines, 11, "nsv")
    if len(lines) != 12 + nsv:
        raise DataFormatError(f"expected {nsv} support vectors, "
                              f"found {len(lines) - 12}")
    coefs = np.empty(nsv)
    sv = np.empty((nsv, d))
    for i in range(nsv):
        row = _parse_vec(lines[12 + i], d + 1)
        coefs[i] = row[0]
        sv[i] = row[1:]
    return SvmModel(word=word, num_phonemes=p, support_vectors=sv,
                    dual_coef=coefs, bias=bias, gamma=gamma, C=C,
                    platt_a=A, platt_b=B, mean=mean, std=std)


def logistic_to_text(m: LogisticModel) -> str:
    return "\n".join([
        "CAPTLOG 1",
        f"word {m.word}",
        f"phonemes {m.num_phonemes}",
        f"dim {m.dim}",
        f"bias {float(m.bias)!r}",
        f"weights {_fmt_vec(m.weights)}",
        f"mean {_fmt_vec(m.mean)}",
        f"std {_fmt_vec(m.std)}",
    ]) + "\n"


def logistic_from_text(text: str) -> LogisticModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "CAPTLOG 1":
        raise DataFormatError("not a logistic model file")
    word = _read_kv(lines, 1, "word")
    p = _read_int(lines, 2, "phonemes")
    d = _read_int(lines, 3, "dim")
    bias = _read_float(lines, 4, "bias")
    weights = _parse_vec(_read_kv(lines, 5, "weights"), d)
    mean = _parse_vec(_read_kv(lines, 6, "mean"), d)
    std = _parse_vec(_read_kv(lines, 7, "std"), d)
    return LogisticModel(word=word, num_phonemes=p, weights=weights,
                         bias=bias, mean=mean, std=std)


def model_to_text(m) -> str:
    if isinstance(m, SvmModel):
        return svm_to_text(m)
    if isinstance(m, LogisticModel):
        return logistic_to_text(m)
    raise DomainError(f"unknown model type {type(m).__name__}")


def model_from_text(text: str):
    head = text.lstrip().split(None, 1)[0] if text.strip() else ""
    if head == "CAPTSVM":
        return svm_from_text(text)
    if head == "CAPTLOG":
        return logistic_from_text(text)
    raise DataFormatError("unrecognized model file")


MANIFEST_NAME = "models.json"


def _safe_name(word: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]", "_", word)


def write_registry(directory: str | Path, models: dict) -> Path:
    """Write one model file per word plus the manifest; returns its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for word, model in sorted(models.items()):
        kind = "svm" if isinstance(model, SvmModel) else "logistic"
        fname = f"{_safe_name(word)}.{kind}.txt"
        (directory / fname).write_text(model_to_text(model))
        manifest[word] = {"path": fname, "kind": kind}
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_registry(directory: str | Path) -> dict:
    directory = Path(directory)
    path = directory / MANIFEST_NAME
    if not path.exists():
        raise DataFormatError(f"no model manifest at {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad model manifest: {exc}") from None
    models = {}
    for word, entry in manifest.items():
        models[word] = model_from_text((directory / entry["path"]).read_text())
    return models
