"""Kernel support-vector regression and a bagged regression forest.

SVR solves the epsilon-insensitive dual

    min_theta  0.5 * theta' K theta - y' theta + eps * ||theta||_1
    s.t.       |theta_i| <= C,  sum(theta) = 0

by sequential minimal optimization on the expanded (alpha, alpha*) variables,
always picking the maximally violating pair.  The forest grows bootstrap
trees on variance-reduction splits with a per-split feature subsample and
keeps vector-valued leaf means, so single- and multi-target fits share one
code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a - b||^2) for every row pair."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    d2 = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def resolve_gamma(gamma, X) -> float:
    """'scale' -> 1 / (d * var(X)); 'auto' -> 1 / d; numbers pass through."""
    if gamma == "scale":
        var = float(np.asarray(X, dtype=np.float64).var())
        if var == 0.0:
            var = 1.0
        return 1.0 / (X.shape[1] * var)
    if gamma == "auto":
        return 1.0 / X.shape[1]
    try:
        gamma = float(gamma)
    except (TypeError, ValueError):
        raise ValidationError(f"gamma must be 'scale', 'auto' or a number, "
                              f"got {gamma!r}") from None
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    return gamma


def svr_dual_objective(K, y, eps: float, theta) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    return float(
        0.5 * theta @ (K @ theta) - y @ theta + eps * np.abs(theta).sum()
    )


@dataclass
class SVRConfig:
    C: float = 1.0
    epsilon: float = 0.1
    gamma: float | str = "scale"
    tol: float = 1e-3
    max_iter: int = 100_000

    def __post_init__(self):
        if self.C <= 0 or self.epsilon < 0:
            raise ValidationError("need C > 0 and epsilon >= 0")


class SVR:
    """RBF-kernel regressor; fit() runs the pairwise dual solver.

    After fitting, ``theta`` holds the dual coefficients (alpha - alpha*),
    ``b`` the offset, ``kkt_gap_`` the final maximal-violation value and
    ``converged`` whether the gap closed below tol within max_iter steps.
    """

    def __init__(self, config: SVRConfig = SVRConfig()):
        self.config = config

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DimensionError(f"bad shapes {X.shape} / {y.shape}")
        cfg = self.config
        n = len(y)
        self._n_features = X.shape[1]
        self.gamma_ = resolve_gamma(cfg.gamma, X)
        K = rbf_kernel(X, X, self.gamma_)

        alpha = np.zeros(n)
        alpha_star = np.zeros(n)
        u = np.zeros(n)  # K @ theta, maintained incrementally
        eps, C = cfg.epsilon, cfg.C
        self.converged = False
        it = 0
        while it < cfg.max_iter:
            it += 1
            r = y - u
            va = r - eps  # alpha-side score
            vs = r + eps  # alpha*-side score
            up_a = np.where(alpha < C, va, -np.inf)
            up_s = np.where(alpha_star > 0, vs, -np.inf)
            lo_a = np.where(alpha > 0, va, np.inf)
            lo_s = np.where(alpha_star < C, vs, np.inf)

            ia, isr = int(np.argmax(up_a)), int(np.argmax(up_s))
            i, i_on_alpha = (ia, True) if up_a[ia] >= up_s[isr] else (isr, False)
            m = max(up_a[ia], up_s[isr])
            ja, js = int(np.argmin(lo_a)), int(np.argmin(lo_s))
            j, j_on_alpha = (ja, True) if lo_a[ja] <= lo_s[js] else (js, False)
            M = min(lo_a[ja], lo_s[js])

            self.kkt_gap_ = float(m - M)
            if self.kkt_gap_ <= cfg.tol:
                self.converged = True
                break

            eta = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
            step = (m - M) / eta
            step = min(step, C - alpha[i] if i_on_alpha else alpha_star[i])
            step = min(step, alpha[j] if j_on_alpha else C - alpha_star[j])
            if i_on_alpha:
                alpha[i] += step
            else:
                alpha_star[i] -= step
            if j_on_alpha:
                alpha[j] -= step
            else:
                alpha_star[j] += step
            u += step * (K[:, i] - K[:, j])

        self.n_iter_ = it
        self.theta = alpha - alpha_star
        r = y - u
        free = ((alpha > 0) & (alpha < C), (alpha_star > 0) & (alpha_star < C))
        pulls = np.concatenate([(r - eps)[free[0]], (r + eps)[free[1]]])
        self.b = float(pulls.mean()) if pulls.size else 0.5 * (m + M)
        self.support_ = np.nonzero(self.theta != 0.0)[0]
        self._sv_X = X[self.support_]
        self._sv_theta = self.theta[self.support_]
        self._train_K = K
        self._train_y = y
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self._n_features:
            raise DimensionError(
                f"predict input shape {X.shape}, expected (*, {self._n_features})"
            )
        if self._sv_theta.size == 0:
            return np.full(len(X), self.b)
        return rbf_kernel(X, self._sv_X, self.gamma_) @ self._sv_theta + self.b

    def dual_objective(self) -> float:
        return svr_dual_objective(
            self._train_K, self._train_y, self.config.epsilon, self.theta
        )


# ---------------------------------------------------------------------------
# random forest


@dataclass
class _Node:
    value: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self):
        return self.left is None


@dataclass
class ForestConfig:
    """n_features=None means ceil(d / 3) candidate features per split."""

    n_trees: int = 10
    max_depth: int = 5
    min_split: int = 2
    n_features: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_split < 2:
            raise ValidationError(
                "need n_trees >= 1, max_depth >= 0 and min_split >= 2"
            )


def _sse(Y) -> float:
    """Total squared deviation from the mean, summed over all target columns."""
    mu = Y.mean(axis=0)
    d = Y - mu
    return float((d * d).sum())


def _best_split(X, Y, idx, feats):
    """Lowest child-SSE split among the candidate features.

    Ties resolve to the lowest feature index (features are scanned in
    ascending order) and then the lowest threshold (argmin takes the first
    minimum, and thresholds ascend within a feature).
    """
    best = None  # (score, feature, threshold)
    for f in feats:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cuts = np.nonzero(xs[:-1] < xs[1:])[0]
        if cuts.size == 0:
            continue
        Ys = Y[idx][order]
        csum = np.cumsum(Ys, axis=0)
        csq = np.cumsum(Ys * Ys, axis=0)
        nl = cuts + 1.0
        nr = len(xs) - nl
        sl, sl2 = csum[cuts], csq[cuts]
        sse_l = sl2.sum(axis=1) - (sl * sl).sum(axis=1) / nl
        sse_r = (csq[-1] - sl2).sum(axis=1) - ((csum[-1] - sl) ** 2).sum(axis=1) / nr
        scores = sse_l + sse_r
        k = int(np.argmin(scores))
        if best is None or scores[k] < best[0]:
            best = (float(scores[k]), int(f), 0.5 * (xs[cuts[k]] + xs[cuts[k] + 1]))
    return best


def _grow(X, Y, idx, depth, rng, cfg, m_features):
    node = _Node(value=Y[idx].mean(axis=0))
    if depth >= cfg.max_depth or len(idx) < cfg.min_split:
        return node
    feats = np.sort(rng.choice(X.shape[1], size=m_features, replace=False))
    best = _best_split(X, Y, idx, feats)
    if best is None or _sse(Y[idx]) - best[0] <= 0.0:
        return node
    _, node.feature, node.threshold = best
    mask = X[idx, node.feature] <= node.threshold
    node.left = _grow(X, Y, idx[mask], depth + 1, rng, cfg, m_features)
    node.right = _grow(X, Y, idx[~mask], depth + 1, rng, cfg, m_features)
    return node


def _tree_apply(node, X, out, idx):
    if node.is_leaf:
        out[idx] = node.value
        return
    mask = X[idx, node.feature] <= node.threshold
    _tree_apply(node.left, X, out, idx[mask])
    _tree_apply(node.right, X, out, idx[~mask])


class RandomForest:
    """Bagging ensemble of depth-limited trees with vector leaf means.

    Tree t draws its bootstrap sample and every split's feature subsample
    from ``default_rng([seed, t])``, consumed in depth-first, left-first
    order, so fits are reproducible tensor by tensor.  Out-of-bag row
    indices are kept per tree in ``oob_indices``.
    """

    def __init__(self, config: ForestConfig = ForestConfig()):
        self.config = config

    def fit(self, X, Y):
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if len(X) != len(Y) or len(X) == 0:
            raise DimensionError(f"bad shapes {X.shape} / {Y.shape}")
        self._single = Y.ndim == 1
        if self._single:
            Y = Y[:, None]
        n, d = X.shape
        cfg = self.config
        m_features = cfg.n_features or int(np.ceil(d / 3))
        if not 1 <= m_features <= d:
            raise ValidationError(f"n_features {m_features} outside 1..{d}")
        self.trees: list[_Node] = []
        self.oob_indices: list[np.ndarray] = []
        for t in range(cfg.n_trees):
            rng = np.random.default_rng([cfg.seed, t])
            boot = rng.integers(0, n, size=n)
            self.oob_indices.append(np.setdiff1d(np.arange(n), boot))
            self.trees.append(_grow(X, Y, boot, 0, rng, cfg, m_features))
        self._n_outputs = Y.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        total = np.zeros((len(X), self._n_outputs))
        scratch = np.empty_like(total)
        for tree in self.trees:
            _tree_apply(tree, X, scratch, np.arange(len(X)))
            total += scratch
        total /= len(self.trees)
        return total[:, 0] if self._single else total

    def predict_tree(self, t: int, X) -> np.ndarray:
        """Output of tree ``t`` alone (useful for out-of-bag accounting)."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((len(X), self._n_outputs))
        _tree_apply(self.trees[t], X, out, np.arange(len(X)))
        return out[:, 0] if self._single else out
