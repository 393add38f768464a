"""Second-order gradient-boosted regression trees with exact greedy splits.

Squared-error objective: per round g_i = pred_i - y_i and h_i = 1. A split
is scored by

    gain = 0.5 * (G_L^2 / (H_L + lam) + G_R^2 / (H_R + lam) - G^2 / (H + lam))

and a leaf carries w = -G / (H + lam). Trees grow level by level; every
level is one pass over the presorted rows of each feature.
"""

import itertools
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import InvalidInput, MalformedFile
from .numerics import as_matrix, make_rng


@dataclass(frozen=True)
class GbmConfig:
    n_rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    l2_leaf: float = 1.0
    min_child_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidInput("learning_rate must lie in (0, 1]")
        if self.max_depth < 0 or self.n_rounds < 0:
            raise InvalidInput("max_depth and n_rounds must be >= 0")
        if self.l2_leaf < 0 or self.min_child_weight < 0:
            raise InvalidInput("l2_leaf and min_child_weight must be >= 0")

    def to_dict(self):
        return asdict(self)


def default_grid():
    """max_depth {2,4,6} x eta {0.05,0.1,0.3} x rounds {50,200}, lambda 1."""
    return [GbmConfig(n_rounds=r, max_depth=d, learning_rate=eta, l2_leaf=1.0)
            for d, eta, r in itertools.product((2, 4, 6), (0.05, 0.1, 0.3), (50, 200))]


@dataclass
class Tree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf; rows go left when x < threshold."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray
    grad_sum: np.ndarray
    hess_sum: np.ndarray
    gain: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    def leaves(self):
        return np.flatnonzero(self.feature < 0)

    def max_depth(self):
        return int(self.depth.max())


@dataclass
class GbmModel:
    base_score: float
    learning_rate: float
    l2_leaf: float
    n_features: int
    trees: list = field(default_factory=list)


@numba.njit(cache=True)
def _score(g, h, lam):
    return g * g / (h + lam)


@numba.njit(cache=True)
def _grow(x, order, grad, hess, max_depth, lam, min_child):
    n, d = x.shape
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    gs = np.zeros(cap)
    hs = np.zeros(cap)
    gain = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)
    node_of = np.zeros(n, dtype=np.int64)
    for i in range(n):
        gs[0] += grad[i]
        hs[0] += hess[i]
    n_nodes = 1
    level_start, level_end = 0, 1
    for lvl in range(max_depth):
        m = level_end - level_start
        best_gain = np.zeros(m)
        best_feat = np.full(m, -1, dtype=np.int64)
        best_thr = np.zeros(m)
        for f in range(d):
            cg = np.zeros(m)
            ch = np.zeros(m)
            last = np.zeros(m)
            seen = np.zeros(m, dtype=np.bool_)
            for t in range(n):
                i = order[f, t]
                nd = node_of[i]
                if nd < level_start:
                    continue
                k = nd - level_start
                v = x[i, f]
                if seen[k] and v != last[k]:
                    hl = ch[k]
                    hr = hs[nd] - hl
                    if hl >= min_child and hr >= min_child:
                        gl = cg[k]
                        gr = gs[nd] - gl
                        cand = 0.5 * (_score(gl, hl, lam) + _score(gr, hr, lam) - _score(gs[nd], hs[nd], lam))
                        if cand > best_gain[k]:
                            best_gain[k] = cand
                            best_feat[k] = f
                            best_thr[k] = 0.5 * (last[k] + v)
                            if not (last[k] < best_thr[k] < v):
                                best_thr[k] = v
                cg[k] += grad[i]
                ch[k] += hess[i]
                last[k] = v
                seen[k] = True
        any_split = False
        for k in range(m):
            nd = level_start + k
            if best_feat[k] >= 0:
                any_split = True
                feature[nd] = best_feat[k]
                threshold[nd] = best_thr[k]
                gain[nd] = best_gain[k]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                depth[n_nodes] = lvl + 1
                depth[n_nodes + 1] = lvl + 1
                n_nodes += 2
        if not any_split:
            break
        for i in range(n):
            nd = node_of[i]
            if nd >= level_start and feature[nd] >= 0:
                if x[i, feature[nd]] < threshold[nd]:
                    child = left[nd]
                else:
                    child = right[nd]
                node_of[i] = child
                gs[child] += grad[i]
                hs[child] += hess[i]
            elif nd >= level_start:
                node_of[i] = -1  # settled in a leaf on this level
        level_start, level_end = level_end, n_nodes
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], \
        gs[:n_nodes], hs[:n_nodes], gain[:n_nodes], depth[:n_nodes]


@numba.njit(cache=True)
def _tree_apply(x, feature, threshold, left, right, weight, scale, out):
    for i in range(x.shape[0]):
        nd = 0
        while feature[nd] >= 0:
            if x[i, feature[nd]] < threshold[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] += scale * weight[nd]


def build_tree(x, grad, hess, max_depth, l2_leaf, min_child_weight, order=None):
    """One exact-greedy tree on gradients ``grad`` and hessians ``hess``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if order is None:
        order = presort(x)
    feat, thr, lo, hi, gs, hs, gain, depth = _grow(
        x, order, np.ascontiguousarray(grad, dtype=np.float64), np.ascontiguousarray(hess, dtype=np.float64),
        int(max_depth), float(l2_leaf), float(min_child_weight))
    weight = np.where(feat < 0, -gs / (hs + l2_leaf), 0.0)
    return Tree(feat, thr, lo, hi, weight, gs, hs, gain, depth)


def presort(x):
    return np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T)


def tree_predict(tree, x):
    out = np.zeros(x.shape[0])
    _tree_apply(x, tree.feature, tree.threshold, tree.left, tree.right, tree.weight, 1.0, out)
    return out


def _check_xy(x, y):
    x = as_matrix(x, "x")
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != x.shape[0]:
        raise InvalidInput(f"x has {x.shape[0]} rows but y has {len(y)} values")
    if x.shape[0] < 2:
        raise InvalidInput("need at least two rows")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("y contains non-finite values")
    return x, y


def gbm_fit(x, y, cfg=None):
    """Boost ``cfg.n_rounds`` trees on the squared error starting from mean(y)."""
    cfg = cfg or GbmConfig()
    x, y = _check_xy(x, y)
    # a constant target must be reproduced exactly, so avoid rounding in the mean
    base = float(y[0]) if np.ptp(y) == 0.0 else float(np.mean(y))
    model = GbmModel(base, cfg.learning_rate, cfg.l2_leaf, x.shape[1])
    order = presort(x)
    pred = np.full(len(y), base)
    hess = np.ones(len(y))
    for _ in range(cfg.n_rounds):
        tree = build_tree(x, pred - y, hess, cfg.max_depth, cfg.l2_leaf, cfg.min_child_weight, order)
        _tree_apply(x, tree.feature, tree.threshold, tree.left, tree.right, tree.weight,
                    cfg.learning_rate, pred)
        model.trees.append(tree)
    return model


def gbm_staged_predict(model, x, rounds):
    """Predictions after each round count in ``rounds`` (ascending), as a dict."""
    x = as_matrix(x, "x")
    if x.shape[1] != model.n_features:
        raise InvalidInput(f"expected {model.n_features} columns, got {x.shape[1]}")
    x = np.ascontiguousarray(x)
    pred = np.full(x.shape[0], model.base_score)
    out, done = {}, 0
    for r in sorted(rounds):
        for tree in model.trees[done:r]:
            _tree_apply(x, tree.feature, tree.threshold, tree.left, tree.right, tree.weight,
                        model.learning_rate, pred)
        done = max(done, r)
        out[r] = pred.copy()
    return out


def gbm_predict(model, x, n_rounds=None):
    n = len(model.trees) if n_rounds is None else min(int(n_rounds), len(model.trees))
    return gbm_staged_predict(model, x, [n])[n]


def fold_indices(n, folds, seed):
    """Validation rows of each fold; a function of ``(n, folds, seed)`` only."""
    if folds < 2 or folds > n:
        raise InvalidInput(f"cannot make {folds} folds from {n} rows")
    perm = make_rng(seed, "gbm-folds").permutation(n)
    return [np.sort(p) for p in np.array_split(perm, folds)]


@dataclass
class GridSearchResult:
    best_config: GbmConfig
    cv_table: list
    model: GbmModel

    def __iter__(self):
        return iter((self.best_config, self.cv_table))


def gbm_grid_search(x_train, y_train, grid=None, folds=5, seed=0):
    """Pick the config with the lowest mean validation RMSE, then refit on all rows.

    Ties go to fewer rounds, then shallower trees, then earlier grid position.
    Configs that differ only in ``n_rounds`` share one boosting run per fold,
    since the shorter model is a prefix of the longer one.
    """
    grid = list(default_grid() if grid is None else grid)
    if not grid:
        raise InvalidInput("grid is empty")
    x, y = _check_xy(x_train, y_train)
    parts = fold_indices(len(y), folds, seed)
    families = {}
    for i, c in enumerate(grid):
        families.setdefault((c.max_depth, c.learning_rate, c.l2_leaf, c.min_child_weight), []).append(i)
    fold_rmse = np.zeros((len(grid), folds))
    for key, members in families.items():
        rounds = sorted({grid[i].n_rounds for i in members})
        longest = GbmConfig(rounds[-1], *key)
        for f, val in enumerate(parts):
            tr = np.setdiff1d(np.arange(len(y)), val)
            model = gbm_fit(x[tr], y[tr], longest)
            staged = gbm_staged_predict(model, x[val], rounds)
            for i in members:
                resid = staged[grid[i].n_rounds] - y[val]
                fold_rmse[i, f] = np.sqrt(np.mean(resid ** 2))
    mean = fold_rmse.mean(axis=1)
    table = [dict(grid[i].to_dict(), index=i, mean_rmse=float(mean[i]),
                  fold_rmse=[float(v) for v in fold_rmse[i]]) for i in range(len(grid))]
    best = min(range(len(grid)), key=lambda i: (mean[i], grid[i].n_rounds, grid[i].max_depth, i))
    return GridSearchResult(grid[best], table, gbm_fit(x, y, grid[best]))


def dump_model(model):
    """Text dump; every node line carries its G and H so leaf weights can be audited."""
    lines = [f"base_score={float(model.base_score)!r}", f"learning_rate={float(model.learning_rate)!r}",
             f"l2_leaf={float(model.l2_leaf)!r}", f"n_features={model.n_features}"]
    for t, tree in enumerate(model.trees):
        lines.append(f"booster[{t}]")
        stack = [0]
        while stack:
            nd = stack.pop()
            pad = "\t" * int(tree.depth[nd])
            gh = f"G={float(tree.grad_sum[nd])!r},H={float(tree.hess_sum[nd])!r}"
            if tree.feature[nd] < 0:
                lines.append(f"{pad}{nd}:leaf={float(tree.weight[nd])!r},{gh}")
            else:
                lines.append(f"{pad}{nd}:[f{tree.feature[nd]}<{float(tree.threshold[nd])!r}] "
                             f"yes={tree.left[nd]},no={tree.right[nd]},gain={float(tree.gain[nd])!r},{gh}")
                stack.extend((tree.right[nd], tree.left[nd]))
    return "\n".join(lines) + "\n"


def parse_dump(text):
    """Header values and one record per node: (tree, node, feature, threshold, weight, G, H)."""
    header, nodes, tree = {}, [], -1
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("booster["):
            tree = int(line[8:-1])
            continue
        if tree < 0:
            key, _, val = line.partition("=")
            header[key] = float(val)
            continue
        try:
            nid, _, body = line.partition(":")
            fields = dict(kv.split("=", 1) for kv in body.replace(" ", ",").split(",") if "=" in kv)
            if body.startswith("leaf="):
                nodes.append((tree, int(nid), None, None, float(fields["leaf"]),
                              float(fields["G"]), float(fields["H"])))
            else:
                cond = body[1:body.index("]")]
                feat, thr = cond.split("<", 1)
                nodes.append((tree, int(nid), int(feat[1:]), float(thr), None,
                              float(fields["G"]), float(fields["H"])))
        except (ValueError, KeyError) as exc:
            raise MalformedFile(f"bad model dump line {raw!r}") from exc
    return header, nodes
