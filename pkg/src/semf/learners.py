"""Weighted point regressors and their pinball-loss quantile counterparts.

Every learner follows one small protocol::

    learner.fit(X, T, w=None, monitor=None) -> learner
    learner.predict(X) -> array shaped like T's rows
    learner.clone() -> unfitted copy with the same hyper-parameters

``T`` may be a vector (decoder, outcome) or a matrix (encoder, one column per
latent coordinate).  ``monitor`` is an optional ``(X, T, w)`` hold-out used by
learners that early stop.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, DataError

FAMILIES = ("ridge", "boosted", "randomized", "mlp")


def _as_2d(T):
    T = np.asarray(T, dtype=float)
    return (T[:, None], True) if T.ndim == 1 else (T, False)


def _check_xy(X, T, w):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T2, vector = _as_2d(T)
    n = X.shape[0]
    if T2.shape[0] != n:
        raise DataError(f"X has {n} rows but targets have {T2.shape[0]}")
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise DataError(f"weights shape {w.shape} does not match {n} rows")
    if not (np.isfinite(X).all() and np.isfinite(T2).all() and np.isfinite(w).all()):
        raise DataError("non-finite value in learner inputs")
    if (w < 0).any():
        raise DataError("negative sample weight")
    if not w.sum() > 0:
        raise DataError("all sample weights are zero")
    return X, T2, vector, w


def weighted_quantile(values, weights, tau):
    """Lower weighted quantile: smallest value whose cumulative weight reaches ``tau``."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, dtype=float)[order]
    cw = np.cumsum(np.asarray(weights, dtype=float)[order])
    k = np.searchsorted(cw, tau * cw[-1] * (1 - 1e-12), side="left")
    return float(v[min(k, len(v) - 1)])


def grouped_weighted_quantile(groups, values, weights, tau, n_groups):
    """Per-group lower weighted quantile; groups absent from ``groups`` get 0."""
    order = np.lexsort((values, groups))
    g, v, w = groups[order], values[order], weights[order]
    cw = np.cumsum(w)
    totals = np.bincount(g, weights=w, minlength=n_groups)
    starts = np.searchsorted(g, np.arange(n_groups), side="left")
    base = np.where(starts > 0, cw[np.maximum(starts - 1, 0)], 0.0)
    target = base + tau * totals * (1 - 1e-12)
    # first position in each group whose running weight reaches target
    pos = np.searchsorted(cw, target, side="left")
    ends = np.searchsorted(g, np.arange(n_groups), side="right") - 1
    pos = np.clip(pos, starts, np.maximum(ends, starts))
    out = np.zeros(n_groups)
    present = ends >= starts
    out[present] = v[np.minimum(pos[present], len(v) - 1)]
    return out


def pinball_loss(y, q, tau):
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    return (y - q) * (tau - (y <= q))


class WeightedRegressor:
    """Base class; subclasses implement ``_fit`` and ``_predict`` on 2-D targets."""

    family = "base"
    early_stopping = False

    def __init__(self, **params):
        self.params = params
        self.n_outputs_ = None
        self._vector = False

    def clone(self):
        return type(self)(**self.params)

    def fit(self, X, T, w=None, monitor=None):
        X, T2, vector, w = _check_xy(X, T, w)
        mon = None
        if monitor is not None and self.early_stopping:
            mX, mT, mw = monitor
            mX, mT2, _, mw = _check_xy(mX, mT, mw)
            mon = (mX, mT2, mw)
        self._vector = vector
        self.n_outputs_ = T2.shape[1]
        self._fit(X, T2, w, mon)
        return self

    def predict(self, X):
        if self.n_outputs_ is None:
            raise RuntimeError(f"{type(self).__name__} is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = self._predict(X)
        return out[:, 0] if self._vector else out

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"


def fit_weighted(learner, X, T, w=None, monitor=None):
    """Fit a fresh clone of ``learner`` under per-row weights ``w``."""
    return learner.clone().fit(X, T, w, monitor=monitor)


# --------------------------------------------------------------------------
# ridge


class RidgeRegressor(WeightedRegressor):
    """Closed-form weighted ridge with an unpenalized intercept.

    Weights are rescaled to mean one before solving, so the fit is invariant to
    a common factor on all weights and ``penalty`` keeps a per-row meaning.
    """

    family = "ridge"

    def __init__(self, penalty=1e-6, seed=0):
        if penalty < 0:
            raise ConfigError("ridge penalty must be >= 0")
        super().__init__(penalty=penalty, seed=seed)

    def _fit(self, X, T, w, monitor):
        w = w / w.mean()
        Xa = np.column_stack([np.ones(len(X)), X])
        sw = np.sqrt(w)[:, None]
        P = np.sqrt(self.params["penalty"]) * np.eye(Xa.shape[1])[1:]
        A = np.vstack([Xa * sw, P])
        B = np.vstack([T * sw, np.zeros((P.shape[0], T.shape[1]))])
        self.coef_, *_ = np.linalg.lstsq(A, B, rcond=None)

    def _predict(self, X):
        return self.coef_[0] + X @ self.coef_[1:]


# --------------------------------------------------------------------------
# histogram gradient-boosted trees


def _bin_edges(X, max_bins):
    edges = []
    for j in range(X.shape[1]):
        u = np.unique(X[:, j])
        if len(u) <= max_bins:
            thr = (u[:-1] + u[1:]) / 2
        else:
            qs = np.quantile(u, np.linspace(0, 1, max_bins + 1)[1:-1])
            thr = np.unique(qs)
        edges.append(thr)
    return edges


def _apply_bins(X, edges):
    B = np.empty(X.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        B[:, j] = np.searchsorted(e, X[:, j], side="left")
    return B


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value", "depth")

    def predict(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        for _ in range(self.depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            xv = X[rows, np.where(internal, f, 0)]
            go_left = xv <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]


def _grow_tree(B, edges, G, H, max_depth, reg_lambda, min_gain):
    """Level-wise exact-on-bins growth for weighted squared loss.

    ``G`` is the (n, m) matrix of weighted targets, ``H`` the weights.  Gains
    sum over output columns, so one tree serves all latent coordinates.
    Returns the tree and the leaf index of every training row.
    """
    n, d = B.shape
    m = G.shape[1]
    nb = max((len(e) for e in edges), default=0) + 1
    feature, threshold, left, right = [-1], [np.nan], [-1], [-1]
    Gs = [G.sum(axis=0)]
    Hs = [H.sum()]
    node_of = np.zeros(n, dtype=np.int64)
    frontier = [0]
    boff = B + np.arange(d) * nb if d else B
    for _ in range(max_depth):
        if not frontier or d == 0 or nb < 2:
            break
        lookup = np.full(len(feature), -1, dtype=np.int64)
        lookup[frontier] = np.arange(len(frontier))
        local = lookup[node_of]
        act = np.flatnonzero(local >= 0)
        nn = len(frontier)
        size = nn * d * nb
        idx = (local[act, None] * (d * nb) + boff[act]).ravel()
        Ha = np.repeat(H[act], d)
        Hh = np.bincount(idx, weights=Ha, minlength=size).reshape(nn, d, nb)
        HL = np.cumsum(Hh, axis=2)[:, :, :-1]
        Gp = np.array([Gs[k] for k in frontier])
        Hp = np.array([Hs[k] for k in frontier])
        HR = Hp[:, None, None] - HL
        score = np.zeros_like(HL)
        with np.errstate(divide="ignore", invalid="ignore"):
            for c in range(m):
                Gh = np.bincount(idx, weights=np.repeat(G[act, c], d), minlength=size).reshape(nn, d, nb)
                GL = np.cumsum(Gh, axis=2)[:, :, :-1]
                GR = Gp[:, c][:, None, None] - GL
                score += GL ** 2 / (HL + reg_lambda) + GR ** 2 / (HR + reg_lambda)
            parent = (Gp ** 2).sum(axis=1) / (Hp + reg_lambda)
        gain = score - parent[:, None, None]
        tiny = 1e-12 * Hp[:, None, None]
        gain[(HL <= tiny) | (HR <= tiny)] = -np.inf
        flat = gain.reshape(nn, -1)
        best = np.argmax(flat, axis=1)
        best_gain = flat[np.arange(nn), best]
        split_feat = np.full(len(feature), -1, dtype=np.int64)
        split_bin = np.zeros(len(feature), dtype=np.int64)
        new_frontier = []
        for li, node in enumerate(frontier):
            if not best_gain[li] > min_gain:
                continue
            j, b = divmod(int(best[li]), nb - 1)
            lid = len(feature)
            feature[node] = j
            threshold[node] = float(edges[j][b])
            left[node], right[node] = lid, lid + 1
            feature += [-1, -1]
            threshold += [np.nan, np.nan]
            left += [-1, -1]
            right += [-1, -1]
            split_feat[node] = j
            split_bin[node] = b
            new_frontier += [lid, lid + 1]
        if not new_frontier:
            break
        rows = np.flatnonzero(split_feat[node_of] >= 0)
        cur = node_of[rows]
        go_left = B[rows, split_feat[cur]] <= split_bin[cur]
        left_arr = np.asarray(left)
        node_of[rows] = np.where(go_left, left_arr[cur], left_arr[cur] + 1)
        n_nodes = len(feature)
        Hsum = np.bincount(node_of, weights=H, minlength=n_nodes)
        Gsum = np.stack([np.bincount(node_of, weights=G[:, c], minlength=n_nodes) for c in range(m)], axis=1)
        for k in new_frontier:
            Gs.append(Gsum[k])
            Hs.append(Hsum[k])
        frontier = new_frontier
    tree = _Tree()
    tree.feature = np.asarray(feature, dtype=np.int64)
    tree.threshold = np.asarray(threshold, dtype=float)
    tree.left = np.asarray(left, dtype=np.int64)
    tree.right = np.asarray(right, dtype=np.int64)
    Hn = np.asarray(Hs)
    denom = Hn + reg_lambda
    tree.value = np.stack(Gs) / np.where(denom > 0, denom, 1.0)[:, None]
    tree.depth = max_depth
    return tree, node_of


class TreeEnsembleRegressor(WeightedRegressor):
    """Tree ensemble in one of two modes.

    ``boosted``: gradient boosting of histogram trees under weighted squared
    loss, multi-output leaves, optional early stopping on a monitor set.
    ``randomized``: extremely randomized trees (random thresholds drawn
    uniformly within each node's feature range), fit on all rows.
    """

    def __init__(self, mode="boosted", n_trees=100, max_depth=None, learning_rate=0.3,
                 early_stopping_rounds=10, max_bins=64, reg_lambda=0.0, seed=0):
        if mode not in ("boosted", "randomized"):
            raise ConfigError(f"unknown tree mode {mode!r}")
        if max_depth is None:
            max_depth = 6 if mode == "boosted" else 10
        super().__init__(mode=mode, n_trees=n_trees, max_depth=max_depth, learning_rate=learning_rate,
                         early_stopping_rounds=early_stopping_rounds, max_bins=max_bins,
                         reg_lambda=reg_lambda, seed=seed)

    @property
    def family(self):
        return self.params["mode"]

    @property
    def early_stopping(self):
        return self.params["mode"] == "boosted" and bool(self.params["early_stopping_rounds"])

    def _fit(self, X, T, w, monitor):
        if self.params["mode"] == "randomized":
            self._fit_randomized(X, T, w)
        else:
            self._fit_boosted(X, T, w, monitor)

    def _fit_randomized(self, X, T, w):
        from sklearn.ensemble import ExtraTreesRegressor

        p = self.params
        self.forest_ = ExtraTreesRegressor(n_estimators=p["n_trees"], max_depth=p["max_depth"],
                                           random_state=p["seed"], n_jobs=1)
        Xf = X if X.shape[1] else np.zeros((len(X), 1))
        self.forest_.fit(Xf, T[:, 0] if T.shape[1] == 1 else T, sample_weight=w)

    def _fit_boosted(self, X, T, w, monitor):
        p = self.params
        w = w / w.mean()
        edges = _bin_edges(X, p["max_bins"])
        B = _apply_bins(X, edges)
        self.base_ = (w[:, None] * T).sum(axis=0) / w.sum()
        F = np.broadcast_to(self.base_, T.shape).copy()
        lr = p["learning_rate"]
        self.trees_ = []
        if monitor is not None:
            mX, mT, mw = monitor
            Fm = np.broadcast_to(self.base_, mT.shape).copy()
            best_loss, best_n, stale = np.inf, 0, 0
        for _ in range(p["n_trees"]):
            R = T - F
            tol = 1e-12 * float((w[:, None] * R ** 2).sum())
            tree, leaf = _grow_tree(B, edges, w[:, None] * R, w, p["max_depth"], p["reg_lambda"], tol)
            F += lr * tree.value[leaf]
            self.trees_.append(tree)
            if monitor is not None:
                Fm += lr * tree.predict(mX)
                loss = float((mw[:, None] * (mT - Fm) ** 2).sum() / mw.sum())
                if loss < best_loss - 1e-15:
                    best_loss, best_n, stale = loss, len(self.trees_), 0
                else:
                    stale += 1
                    if stale >= p["early_stopping_rounds"]:
                        break
        if monitor is not None:
            self.trees_ = self.trees_[:max(best_n, 1)]

    def _predict(self, X):
        if self.params["mode"] == "randomized":
            Xf = X if X.shape[1] else np.zeros((len(X), 1))
            out = self.forest_.predict(Xf)
            return out[:, None] if out.ndim == 1 else out
        F = np.broadcast_to(self.base_, (len(X), len(self.base_))).copy()
        lr = self.params["learning_rate"]
        for tree in self.trees_:
            F += lr * tree.predict(X)
        return F


# --------------------------------------------------------------------------
# multilayer perceptron


class _Net:
    """Fully connected ReLU network with Adam updates, float64 numpy."""

    def __init__(self, sizes, rng):
        self.W, self.b = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.W.append(rng.normal(0.0, math.sqrt(2.0 / max(a, 1)), size=(a, b)))
            self.b.append(np.zeros(b))
        self._m = [np.zeros_like(p) for p in self.params()]
        self._v = [np.zeros_like(p) for p in self.params()]
        self._t = 0

    def params(self):
        return self.W + self.b

    def snapshot(self):
        return [p.copy() for p in self.params()]

    def restore(self, snap):
        k = len(self.W)
        self.W = [p.copy() for p in snap[:k]]
        self.b = [p.copy() for p in snap[k:]]

    def forward(self, X, keep=False):
        acts = [X]
        h = X
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            h = h @ W + b
            if i < len(self.W) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return (h, acts) if keep else h

    def step(self, acts, grad_out, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        gW, gb = [None] * len(self.W), [None] * len(self.W)
        g = grad_out
        for i in range(len(self.W) - 1, -1, -1):
            gW[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.W[i].T) * (acts[i] > 0)
        self._t += 1
        grads = gW + gb
        new = []
        for p, gr, m, v in zip(self.params(), grads, self._m, self._v):
            m *= beta1
            m += (1 - beta1) * gr
            v *= beta2
            v += (1 - beta2) * gr * gr
            mhat = m / (1 - beta1 ** self._t)
            vhat = v / (1 - beta2 ** self._t)
            new.append(p - lr * mhat / (np.sqrt(vhat) + eps))
        k = len(self.W)
        self.W, self.b = new[:k], new[k:]


def _mse_loss(pred, T, w):
    diff = pred - T
    sw = w.sum()
    return float((w[:, None] * diff ** 2).sum() / sw), 2.0 * w[:, None] * diff / sw


def _train_net(net, X, T, w, loss_fn, epochs, lr, patience, monitor):
    best, best_snap, stale = np.inf, net.snapshot(), 0
    for _ in range(epochs):
        out, acts = net.forward(X, keep=True)
        loss, grad = loss_fn(out, T, w)
        if monitor is not None:
            mX, mT, mw = monitor
            loss, _ = loss_fn(net.forward(mX), mT, mw)
        if not np.isfinite(loss):
            break
        if loss < best - 1e-12:
            best, best_snap, stale = loss, net.snapshot(), 0
        else:
            stale += 1
            if stale >= patience:
                break
        net.step(acts, grad, lr)
    net.restore(best_snap)


class MlpRegressor(WeightedRegressor):
    """Two hidden ReLU layers trained full-batch on weighted MSE with Adam.

    Early stopping watches the monitor loss when one is given, otherwise the
    training loss; the best-epoch parameters are restored.
    """

    family = "mlp"
    early_stopping = True

    def __init__(self, hidden_layers=2, width=100, epochs=1000, learning_rate=1e-3, patience=100, seed=0):
        super().__init__(hidden_layers=hidden_layers, width=width, epochs=epochs,
                         learning_rate=learning_rate, patience=patience, seed=seed)

    def _fit(self, X, T, w, monitor):
        p = self.params
        rng = np.random.default_rng(p["seed"])
        sizes = [X.shape[1]] + [p["width"]] * p["hidden_layers"] + [T.shape[1]]
        self.net_ = _Net(sizes, rng)
        _train_net(self.net_, X, T, w, _mse_loss, p["epochs"], p["learning_rate"], p["patience"], monitor)

    def _predict(self, X):
        return self.net_.forward(X)


# --------------------------------------------------------------------------
# quantile regressors


class _QuantileBoosted:
    """Gradient boosting under pinball loss; leaf values are the weighted
    tau-quantile of the current residuals of the rows in each leaf."""

    def __init__(self, tau, n_trees, max_depth, learning_rate, early_stopping_rounds, max_bins):
        self.tau = tau
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.rounds = early_stopping_rounds
        self.max_bins = max_bins

    def fit(self, X, y, w, monitor=None):
        tau, lr = self.tau, self.learning_rate
        w = w / w.mean()
        edges = _bin_edges(X, self.max_bins)
        B = _apply_bins(X, edges)
        self.base_ = weighted_quantile(y, w, tau)
        F = np.full(len(y), self.base_)
        self.trees_ = []
        if monitor is not None:
            mX, my, mw = monitor
            Fm = np.full(len(my), self.base_)
            best_loss, best_n, stale = np.inf, 0, 0
        for _ in range(self.n_trees):
            grad = tau - (y <= F)
            tree, leaf = _grow_tree(B, edges, (w * grad)[:, None], w, self.max_depth, 0.0, 1e-12 * w.sum())
            n_nodes = len(tree.feature)
            vals = grouped_weighted_quantile(leaf, y - F, w, tau, n_nodes)
            tree.value = vals[:, None]
            F += lr * vals[leaf]
            self.trees_.append(tree)
            if monitor is not None:
                Fm += lr * tree.predict(mX)[:, 0]
                loss = float((mw * pinball_loss(my, Fm, tau)).sum() / mw.sum())
                if loss < best_loss - 1e-15:
                    best_loss, best_n, stale = loss, len(self.trees_), 0
                else:
                    stale += 1
                    if stale >= self.rounds:
                        break
        if monitor is not None:
            self.trees_ = self.trees_[:max(best_n, 1)]
        return self

    def predict(self, X):
        F = np.full(len(X), self.base_)
        for tree in self.trees_:
            F += self.learning_rate * tree.predict(X)[:, 0]
        return F


def _pinball_pair_loss(taus):
    taus = np.asarray(taus, dtype=float)

    def loss_fn(pred, T, w):
        y = T[:, :1]
        below = (y <= pred).astype(float)
        sw = w.sum()
        loss = float((w[:, None] * (y - pred) * (taus - below)).sum() / sw)
        grad = w[:, None] * (below - taus) / sw
        return loss, grad

    return loss_fn


class QuantileRegressor:
    """Predicts a (lower, upper) pair at levels ``(tau_low, tau_high)``.

    Each family is fit under pinball loss: two linear quantile programs for
    ridge, two pinball boosters for boosted trees, leaf quantiles averaged
    over the trees of one forest for randomized trees, and a single network
    with a two-unit head on summed pinball losses for the MLP.  Crossed
    predictions are swapped.
    """

    def __init__(self, family, tau_low=0.025, tau_high=0.975, seed=0, **params):
        if family not in FAMILIES:
            raise ConfigError(f"unknown learner family {family!r}")
        if not 0 < tau_low < tau_high < 1:
            raise ConfigError(f"need 0 < tau_low < tau_high < 1, got {tau_low}, {tau_high}")
        self.family = family
        self.tau_low = tau_low
        self.tau_high = tau_high
        self.seed = seed
        self.params = params

    @property
    def early_stopping(self):
        if self.family == "boosted":
            return bool(self.params.get("early_stopping_rounds", 10))
        return self.family == "mlp"

    def fit(self, X, y, w=None, monitor=None):
        X, Y, _, w = _check_xy(X, y, w)
        y = Y[:, 0]
        if y.size == 0:
            raise DataError("empty outcome")
        if monitor is not None and self.early_stopping:
            mX, my, mw = monitor
            mX, mY, _, mw = _check_xy(mX, my, mw)
            monitor = (mX, mY[:, 0], mw)
        else:
            monitor = None
        getattr(self, "_fit_" + self.family)(X, y, w, monitor)
        return self

    def _fit_ridge(self, X, y, w, monitor):
        from sklearn.linear_model import QuantileRegressor as LinearQR

        alpha = self.params.get("penalty", 0.0)
        self.models_ = [LinearQR(quantile=t, alpha=alpha, solver="highs").fit(
            X if X.shape[1] else np.zeros((len(X), 1)), y, sample_weight=w) for t in (self.tau_low, self.tau_high)]

    def _fit_boosted(self, X, y, w, monitor):
        p = dict(n_trees=100, max_depth=6, learning_rate=0.3, early_stopping_rounds=10, max_bins=64)
        p.update({k: v for k, v in self.params.items() if k in p})
        self.models_ = [_QuantileBoosted(t, **p).fit(X, y, w, monitor) for t in (self.tau_low, self.tau_high)]

    def _fit_randomized(self, X, y, w, monitor):
        p = {k: v for k, v in self.params.items() if k in ("n_trees", "max_depth")}
        self.forest_ = TreeEnsembleRegressor("randomized", seed=self.seed, **p).fit(X, y, w)
        Xf = X if X.shape[1] else np.zeros((len(X), 1))
        self.leaf_q_ = []
        for est in self.forest_.forest_.estimators_:
            leaf = est.apply(Xf.astype(np.float32))
            n_nodes = est.tree_.node_count
            self.leaf_q_.append(tuple(grouped_weighted_quantile(leaf, y, w, t, n_nodes)
                                      for t in (self.tau_low, self.tau_high)))

    def _fit_mlp(self, X, y, w, monitor):
        p = dict(hidden_layers=2, width=100, epochs=1000, learning_rate=1e-3, patience=100)
        p.update({k: v for k, v in self.params.items() if k in p})
        rng = np.random.default_rng(self.seed)
        self.net_ = _Net([X.shape[1]] + [p["width"]] * p["hidden_layers"] + [2], rng)
        # start both heads flat at the marginal quantiles
        self.net_.W[-1][:] = 0.0
        self.net_.b[-1] = np.array([weighted_quantile(y, w, self.tau_low), weighted_quantile(y, w, self.tau_high)])
        mon = None if monitor is None else (monitor[0], monitor[1][:, None], monitor[2])
        _train_net(self.net_, X, y[:, None], w, _pinball_pair_loss((self.tau_low, self.tau_high)),
                   p["epochs"], p["learning_rate"], p["patience"], mon)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.family == "ridge":
            Xf = X if X.shape[1] else np.zeros((len(X), 1))
            lo, hi = (m.predict(Xf) for m in self.models_)
        elif self.family == "boosted":
            lo, hi = (m.predict(X) for m in self.models_)
        elif self.family == "randomized":
            Xf = (X if X.shape[1] else np.zeros((len(X), 1))).astype(np.float32)
            lo = np.zeros(len(X))
            hi = np.zeros(len(X))
            for est, (ql, qh) in zip(self.forest_.forest_.estimators_, self.leaf_q_):
                leaf = est.apply(Xf)
                lo += ql[leaf]
                hi += qh[leaf]
            lo /= len(self.leaf_q_)
            hi /= len(self.leaf_q_)
        else:
            out = self.net_.forward(X)
            lo, hi = out[:, 0], out[:, 1]
        return np.minimum(lo, hi), np.maximum(lo, hi)


def fit_quantile(family, X, y, tau_low, tau_high, w=None, monitor=None, seed=0, **params):
    return QuantileRegressor(family, tau_low, tau_high, seed=seed, **params).fit(X, y, w, monitor)


# --------------------------------------------------------------------------
# factories


def make_learner(family, seed=0, **params) -> WeightedRegressor:
    if family == "ridge":
        return RidgeRegressor(seed=seed, **params)
    if family in ("boosted", "randomized"):
        return TreeEnsembleRegressor(mode=family, seed=seed, **params)
    if family == "mlp":
        return MlpRegressor(seed=seed, **params)
    raise ConfigError(f"unknown learner family {family!r}; choose from {FAMILIES}")


def fit_residual_scale_models(encoders, X_sources, Z_targets, weights, prototypes=None):
    """Fit one regressor per source to the absolute encoder residuals.

    Parameters
    ----------
    encoders : list of fitted WeightedRegressor
        Encoder of each source, already refit this M-step.
    X_sources : list of (n, d_k) arrays
        Inputs of each source, one row per buffer entry.
    Z_targets : list of (n, m_k) arrays
        Sampled latents paired with those inputs.
    weights : (n,) array
    prototypes : list of WeightedRegressor, optional
        Learner to clone per source; defaults to each source's encoder.

    Returns
    -------
    list of fitted WeightedRegressor predicting ``|z_k - g_k(x_k)|`` per
    latent coordinate.  Callers floor the predictions before use.
    """
    prototypes = encoders if prototypes is None else prototypes
    models = []
    for enc, base, Xk, Zk in zip(encoders, prototypes, X_sources, Z_targets):
        resid = np.abs(np.asarray(Zk) - enc.predict(Xk).reshape(np.shape(Zk)))
        models.append(fit_weighted(base, Xk, resid, weights))
    return models
