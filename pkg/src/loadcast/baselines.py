"""Classical baselines: weighted moving average, linear and quadratic
regression, a CART regression tree and a linear-kernel SVR.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from loadcast.features import COL, FeatureMatrix, Scaler, apply_scaler, fit_scaler, invert_target
from loadcast.forecaster import Forecaster
from loadcast.metrics import mape

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# weighted moving average


@dataclass(frozen=True)
class WmaCoefficients:
    alpha: float = 0.05
    beta: float = 0.95

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError(f"need alpha, beta >= 0 with alpha + beta = 1, got ({self.alpha}, {self.beta})")


def wma_predict(lag_1h, lag_7d_0h, c: WmaCoefficients):
    """``alpha * previous hour + beta * same hour one week back``."""
    return c.alpha * lag_1h + c.beta * lag_7d_0h


def wma_grid(step: float = 0.05) -> list[WmaCoefficients]:
    n = int(round(1 / step))
    return [WmaCoefficients(round(i * step, 10), round(1 - i * step, 10)) for i in range(n + 1)]


def wma_cross_validate(validation: FeatureMatrix, step: float = 0.05) -> tuple[WmaCoefficients, list[tuple[WmaCoefficients, float]]]:
    """Sweep alpha over ``0, step, ..., 1`` (beta = 1 - alpha) on validation MAPE.

    Ties go to the larger beta. Returns the winner and the full sweep.
    """
    if len(validation) == 0:
        raise ValueError("validation set is empty")
    lag1, lag168 = validation.X[:, COL["lag_1h"]], validation.X[:, COL["lag_7d_0h"]]
    sweep = [(c, mape(validation.y, wma_predict(lag1, lag168, c))) for c in wma_grid(step)]
    best, best_score = sweep[0]
    for c, score in sweep[1:]:
        if score < best_score:
            best, best_score = c, score
    return best, sweep


class WmaForecaster(Forecaster):
    """WMA baseline. Given validation rows, ``fit`` picks coefficients by sweep;
    otherwise it keeps the ones it was built with.
    """

    kind = "wma"

    def __init__(self, coefficients: WmaCoefficients = WmaCoefficients(), step: float = 0.05):
        super().__init__()
        self.coefficients = coefficients
        self.step = step
        self.sweep_seconds = 0.0
        self.sweep: list[tuple[WmaCoefficients, float]] = []

    def fit(self, train, validation=None):
        if validation is not None:
            t0 = time.perf_counter()
            self.coefficients, self.sweep = wma_cross_validate(validation, self.step)
            self.sweep_seconds = time.perf_counter() - t0
        # the final model is just the two weights: nothing left to train
        self.train_seconds = 0.0
        return self

    def predict(self, m):
        self._require_fitted()
        return wma_predict(m.X[:, COL["lag_1h"]], m.X[:, COL["lag_7d_0h"]], self.coefficients)

    def to_dict(self):
        return {"alpha": self.coefficients.alpha, "beta": self.coefficients.beta, "step": self.step}

    @classmethod
    def from_dict(cls, d):
        f = cls(WmaCoefficients(d["alpha"], d["beta"]), d.get("step", 0.05))
        f.train_seconds = 0.0
        return f


# --------------------------------------------------------------------------
# least squares


class RankDeficientError(np.linalg.LinAlgError):
    pass


RIDGE_LAMBDA = 1e-8


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    design: str = "linear"
    squared_columns: tuple[int, ...] = ()
    ridge: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    def design_matrix(self, X: np.ndarray) -> np.ndarray:
        return design_matrix(X, self.design, self.squared_columns)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.design_matrix(X) @ self.weights + self.intercept

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "design": self.design,
            "squared_columns": list(self.squared_columns),
            "ridge": self.ridge,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["weights"]), d["intercept"], d["design"], tuple(d["squared_columns"]), d["ridge"])


def squarable_columns(X: np.ndarray) -> tuple[int, ...]:
    """Columns whose square differs from the column itself (i.e. not 0/1 valued)."""
    return tuple(j for j in range(X.shape[1]) if not np.all((X[:, j] == 0) | (X[:, j] == 1)))


def design_matrix(X: np.ndarray, design: str, squared_columns=()) -> np.ndarray:
    if design == "linear":
        return X
    if design == "quadratic":
        return np.hstack([X, X[:, list(squared_columns)] ** 2])
    raise ValueError(f"unknown design {design!r}")


def fit_linear(X: np.ndarray, y: np.ndarray, design: str = "linear", *, ridge_fallback: bool = True,
               squared_columns=None) -> LinearModel:
    """Ordinary least squares with intercept on the chosen design.

    Columns are centred and scaled internally and solved by QR. If the design
    is rank deficient, the solve falls back to ridge with a tiny penalty
    (warning), or raises :class:`RankDeficientError` when
    ``ridge_fallback`` is off. The quadratic design appends squares of every
    column that is not 0/1 valued (squaring a binary column would duplicate it).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if design == "quadratic" and squared_columns is None:
        squared_columns = squarable_columns(X)
    squared_columns = tuple(squared_columns or ())
    D = design_matrix(X, design, squared_columns)
    n, p = D.shape
    if n <= p:
        raise ValueError(f"need more rows than design columns ({n} <= {p})")
    mu = D.mean(axis=0)
    sd = D.std(axis=0)
    sd[sd == 0] = 1.0
    A = (D - mu) / sd
    y_mean = y.mean()
    yc = y - y_mean

    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    ridge = bool(diag.min() <= 1e-9 * diag.max())
    if ridge:
        if not ridge_fallback:
            raise RankDeficientError("design matrix is rank deficient")
        warnings.warn("design matrix is rank deficient; using ridge fallback", RuntimeWarning, stacklevel=2)
        beta = np.linalg.solve(A.T @ A + RIDGE_LAMBDA * np.eye(p), A.T @ yc)
    else:
        beta = np.linalg.solve(R, Q.T @ yc)
    w = beta / sd
    b = float(y_mean - w @ mu)
    return LinearModel(w, b, design, squared_columns, ridge)


def fit_mlr(train: FeatureMatrix, **kw) -> LinearModel:
    return fit_linear(train.X, train.y, "linear", **kw)


def fit_mqr(train: FeatureMatrix, **kw) -> LinearModel:
    return fit_linear(train.X, train.y, "quadratic", **kw)


class LinearForecaster(Forecaster):
    kind = "linear"

    def __init__(self, design: str = "linear", ridge_fallback: bool = True):
        super().__init__()
        self.design = design
        self.ridge_fallback = ridge_fallback
        self.model: LinearModel | None = None

    def fit(self, train, validation=None):
        t0 = time.perf_counter()
        self.model = fit_linear(train.X, train.y, self.design, ridge_fallback=self.ridge_fallback)
        self.train_seconds = time.perf_counter() - t0
        return self

    def predict(self, m):
        self._require_fitted()
        return self.model.predict(m.X)

    def to_dict(self):
        return {"design": self.design, "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        f = cls(d["design"])
        f.model = LinearModel.from_dict(d["model"])
        f.train_seconds = 0.0
        return f


# --------------------------------------------------------------------------
# regression tree


@dataclass
class Leaf:
    value: float
    count: int

    def to_dict(self):
        return {"value": self.value, "count": self.count}


@dataclass
class Split:
    feature: int
    threshold: float
    left: "Leaf | Split"
    right: "Leaf | Split"
    count: int

    def to_dict(self):
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "count": self.count,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }


def tree_from_dict(d: dict) -> Leaf | Split:
    if "value" in d:
        return Leaf(d["value"], d["count"])
    return Split(d["feature"], d["threshold"], tree_from_dict(d["left"]), tree_from_dict(d["right"]), d["count"])


SPLIT_TIE_RTOL = 1e-10


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (feature, threshold, child SSE) over all features and midpoints.

    Candidates must leave ``min_leaf`` rows on each side. Among splits whose
    SSE is within a relative ``1e-10`` of the minimum, the lowest feature
    index and then the lowest threshold wins. Returns ``None`` if no split
    strictly lowers the SSE.
    """
    n, p = X.shape
    if n < 2 * min_leaf or n < 2:
        return None
    yc = y - y.mean()
    parent_sse = float(yc @ yc)
    if parent_sse <= 0:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = yc[order]
    cs = np.cumsum(ys, axis=0)
    cs2 = np.cumsum(ys * ys, axis=0)
    lo, hi = max(min_leaf, 1) - 1, n - max(min_leaf, 1) - 1  # split after row i, i in [lo, hi]
    i = np.arange(lo, hi + 1)
    nl = (i + 1)[:, None].astype(float)
    nr = n - nl
    sl = cs[lo : hi + 1]
    sr = cs[-1] - sl
    sse = (cs2[lo : hi + 1] - sl * sl / nl) + (cs2[-1] - cs2[lo : hi + 1] - sr * sr / nr)
    valid = xs[lo : hi + 1] < xs[lo + 1 : hi + 2]
    sse = np.where(valid, sse, np.inf).T  # (p, positions): feature-major order
    best = sse.min()
    if not best < parent_sse * (1 - 1e-12):
        return None
    k = int(np.argmax(sse.ravel() <= best + SPLIT_TIE_RTOL * parent_sse))
    j, pos = divmod(k, sse.shape[1])
    a, b = xs[lo + pos, j], xs[lo + pos + 1, j]
    thr = 0.5 * (a + b)
    if not a <= thr < b:
        thr = a
    return j, float(thr), float(sse[j, pos])


def fit_regression_tree(X: np.ndarray, y: np.ndarray, min_leaf: int = 8, max_depth: int | None = None) -> Leaf | Split:
    """Greedy CART on squared error; a node splits only if both children keep
    ``min_leaf`` rows and the SSE strictly drops. Built without recursion.
    """
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot fit a tree on zero rows")

    def make(idx, depth):
        split = None
        if max_depth is None or depth < max_depth:
            split = best_split(X[idx], y[idx], min_leaf)
        if split is None:
            return Leaf(float(y[idx].mean()), len(idx)), None
        j, thr, _ = split
        go_left = X[idx, j] <= thr
        return Split(j, thr, None, None, len(idx)), (idx[go_left], idx[~go_left])

    root, kids = make(np.arange(len(y)), 0)
    stack = [(root, kids, 0)] if kids else []
    while stack:
        node, (li, ri), depth = stack.pop()
        node.left, lk = make(li, depth + 1)
        node.right, rk = make(ri, depth + 1)
        if lk:
            stack.append((node.left, lk, depth + 1))
        if rk:
            stack.append((node.right, rk, depth + 1))
    return root


def tree_predict(node: Leaf | Split, row) -> float:
    while isinstance(node, Split):
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.value


def tree_predict_many(root: Leaf | Split, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if isinstance(node, Leaf):
            out[idx] = node.value
            continue
        left = X[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[left]))
        stack.append((node.right, idx[~left]))
    return out


def iter_leaves(node):
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Leaf):
            yield n
        else:
            stack.extend((n.right, n.left))


def tree_depth(node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


class TreeForecaster(Forecaster):
    kind = "tree"

    def __init__(self, min_leaf: int = 8, max_depth: int | None = None):
        super().__init__()
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.root: Leaf | Split | None = None

    def fit(self, train, validation=None):
        t0 = time.perf_counter()
        self.root = fit_regression_tree(train.X, train.y, self.min_leaf, self.max_depth)
        self.train_seconds = time.perf_counter() - t0
        return self

    def predict(self, m):
        self._require_fitted()
        return tree_predict_many(self.root, m.X)

    def to_dict(self):
        return {"min_leaf": self.min_leaf, "max_depth": self.max_depth, "tree": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d):
        f = cls(d["min_leaf"], d.get("max_depth"))
        f.root = tree_from_dict(d["tree"])
        f.train_seconds = 0.0
        return f


# --------------------------------------------------------------------------
# linear SVR


class SvrDivergenceError(FloatingPointError):
    pass


@dataclass
class SvrModel:
    weights: np.ndarray
    intercept: float
    epsilon: float
    C: float
    objective_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.C > 0:
            raise ValueError("C must be > 0")
        self.weights = np.asarray(self.weights, dtype=float)

    def predict(self, X):
        return X @ self.weights + self.intercept

    def to_dict(self):
        return {"weights": self.weights.tolist(), "intercept": self.intercept, "epsilon": self.epsilon, "C": self.C}


def svr_objective(w, b, X, y, epsilon, C) -> float:
    """``C * sum(max(0, |y - (Xw + b)| - eps)) + 0.5 * |w|^2``."""
    r = np.abs(y - (X @ w + b)) - epsilon
    return float(C * np.sum(np.maximum(r, 0.0)) + 0.5 * (w @ w))


def fit_svr(X, y, epsilon: float = 0.1, C: float = 1.0, epochs: int = 100, learning_rate: float = 0.01,
            batch_size: int = 64, seed: int = 0) -> SvrModel:
    """Primal epsilon-insensitive SVR by mini-batch subgradient descent.

    Each step follows the subgradient of the objective divided by ``n``, with
    the step size decaying as ``lr / sqrt(1 + t / steps_per_epoch)``. The
    sample order is one seeded permutation reused every epoch. Subgradient
    steps are not descent steps, so the returned weights are the best
    end-of-epoch iterate; ``objective_trace`` holds every epoch's objective.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    order = np.random.default_rng(seed).permutation(n)
    Xo, yo = X[order], y[order]
    w = np.zeros(p)
    b = 0.0
    steps_per_epoch = -(-n // batch_size)
    best = (svr_objective(w, b, X, y, epsilon, C), w.copy(), b)
    trace = []
    t = 0
    for epoch in range(epochs):
        for start in range(0, n, batch_size):
            xb, yb = Xo[start : start + batch_size], yo[start : start + batch_size]
            r = yb - (xb @ w + b)
            s = np.sign(r) * (np.abs(r) > epsilon)
            m = len(yb)
            gw = w / n - C * (s @ xb) / m
            gb = -C * s.sum() / m
            lr = learning_rate / np.sqrt(1.0 + t / steps_per_epoch)
            w -= lr * gw
            b -= lr * gb
            t += 1
        obj = svr_objective(w, b, X, y, epsilon, C)
        if not np.isfinite(obj) or obj > 1e12:
            raise SvrDivergenceError(f"SVR objective diverged at epoch {epoch + 1}: {obj:g}")
        trace.append(obj)
        if obj < best[0]:
            best = (obj, w.copy(), b)
    return SvrModel(best[1], float(best[2]), epsilon, C, trace)


class SvrForecaster(Forecaster):
    """Linear SVR on standardized features and standardized target."""

    kind = "svr"

    def __init__(self, epsilon: float = 0.1, C: float = 1.0, epochs: int = 50, learning_rate: float = 0.01,
                 batch_size: int = 64, seed: int = 0):
        super().__init__()
        self.epsilon, self.C, self.epochs = epsilon, C, epochs
        self.learning_rate, self.batch_size, self.seed = learning_rate, batch_size, seed
        self.scaler: Scaler | None = None
        self.model: SvrModel | None = None

    def fit(self, train, validation=None):
        t0 = time.perf_counter()
        self.scaler = fit_scaler(train, scale_target=True)
        s = apply_scaler(train, self.scaler)
        self.model = fit_svr(s.X, s.y, self.epsilon, self.C, self.epochs, self.learning_rate,
                             self.batch_size, self.seed)
        self.train_seconds = time.perf_counter() - t0
        return self

    def predict(self, m):
        self._require_fitted()
        s = apply_scaler(m, self.scaler)
        return invert_target(self.model.predict(s.X), self.scaler)

    def to_dict(self):
        return {
            "hyper": {"epsilon": self.epsilon, "C": self.C, "epochs": self.epochs,
                      "learning_rate": self.learning_rate, "batch_size": self.batch_size, "seed": self.seed},
            "scaler": self.scaler.to_dict(),
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        f = cls(**d["hyper"])
        f.scaler = Scaler.from_dict(d["scaler"])
        m = d["model"]
        f.model = SvrModel(np.asarray(m["weights"]), m["intercept"], m["epsilon"], m["C"])
        f.train_seconds = 0.0
        return f
