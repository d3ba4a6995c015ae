"""Feature selection: importance-elbow track and chi-square + wrapper track.

Track A trains a bagged forest, ranks columns by mean out-of-bag accuracy
drop under per-column permutation, builds an incremental cross-validated F1
curve over ranking prefixes, and cuts at the marginal-gain elbow.  Track B
prunes pairwise-correlated columns, ranks the survivors by a chi-square
statistic on MinMax-scaled per-class mass, and picks the prefix length that
maximizes cross-validated defender utility.  Both tracks are deterministic
under their seeds; folds are partitioned by session so windows of one
session never straddle a fold boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CurveTooShort, InvalidRange, NoOOBSamples
from .evalkit import ConfusionCounts, macro_f1, utility
from .features import apply_minmax, fit_minmax
from .trees import ForestModel, train_forest


@dataclass
class ImportanceRanking:
    items: list[tuple[str, float]]   # descending score, ties in schema order

    def columns(self) -> list[str]:
        return [c for c, _ in self.items]

    def scores(self) -> list[float]:
        return [s for _, s in self.items]


@dataclass
class ScoreCurve:
    s: list[float]
    g: list[float]

    @classmethod
    def from_scores(cls, s: list[float]) -> "ScoreCurve":
        s = [float(v) for v in s]
        g = [s[0]] + [s[i] - s[i - 1] for i in range(1, len(s))] if s else []
        return cls(s, g)


@dataclass
class SelectionResult:
    track: str                      # "A" or "B"
    chosen_k: int
    columns: list[str]
    curve: dict
    dropped: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# track A: permutation importance + elbow
# ---------------------------------------------------------------------------

def permutation_importance(model: ForestModel, X, y, n_rep: int = 20,
                           seed: int = 0) -> ImportanceRanking:
    """Mean OOB-accuracy drop per column over n_rep seeded permutations.

    Only trees that actually consult a column are re-applied for it; the
    votes of unaffected trees are reused from the baseline pass.
    """
    X = np.array(X, np.float64, copy=True, order="C")  # permuted in place below
    ybool = np.asarray(y).astype(np.int8) == 1
    n = X.shape[0]
    oob = model.oob_mask()
    cnt = oob.sum(axis=0).astype(np.float64)
    valid = cnt > 0
    if not valid.any():
        raise NoOOBSamples("no row is out-of-bag for any tree")
    probs = np.zeros((len(model.trees), n))
    for t, tree in enumerate(model.trees):
        rows = np.nonzero(oob[t])[0]
        if rows.size:
            probs[t, rows] = tree.p1(X[rows])
    sum_p = probs.sum(axis=0)
    base_pred = (sum_p[valid] / cnt[valid]) >= 0.5
    base_acc = float((base_pred == ybool[valid]).mean())

    trees_by_col: dict[int, list[int]] = {}
    for t, tree in enumerate(model.trees):
        for c in tree.used_columns():
            trees_by_col.setdefault(int(c), []).append(t)

    scores = np.zeros(X.shape[1])
    for ci in range(X.shape[1]):
        affected = trees_by_col.get(ci, [])
        if not affected:
            continue   # no tree reads the column: permuting it changes nothing
        rng = np.random.default_rng([seed, ci])
        col_saved = X[:, ci].copy()
        drops = []
        for _ in range(n_rep):
            perm = rng.permutation(n)
            X[:, ci] = col_saved[perm]
            delta = np.zeros(n)
            for t in affected:
                rows = np.nonzero(oob[t])[0]
                if rows.size == 0:
                    continue
                tree = model.trees[t]
                delta[rows] += tree.p1(X[rows]) - probs[t, rows]
            perturbed = sum_p + delta
            pred = (perturbed[valid] / cnt[valid]) >= 0.5
            drops.append(base_acc - float((pred == ybool[valid]).mean()))
        X[:, ci] = col_saved
        scores[ci] = float(np.mean(drops))

    order = sorted(range(X.shape[1]), key=lambda i: (-scores[i], i))
    return ImportanceRanking([(model.schema[i], float(scores[i])) for i in order])


def elbow(curve: ScoreCurve, rel: float = 0.01) -> int:
    """Smallest prefix length k with g_{k+1} < rel * s_{k+1}, else len(s)."""
    if len(curve.s) < 2:
        raise CurveTooShort(f"curve has {len(curve.s)} points, need at least 2")
    for k in range(1, len(curve.s)):
        if curve.g[k] < rel * curve.s[k]:
            return k
    return len(curve.s)


def _fold_assignment(y, session_ids, folds: int, seed: int) -> np.ndarray:
    """Per-row fold ids: stratified by label, partitioned by session."""
    ybool = np.asarray(y).astype(np.int8) == 1
    n = ybool.size
    fold = np.zeros(n, np.int64)
    if session_ids is None:
        units = {label: sorted(np.nonzero(ybool == label)[0].tolist())
                 for label in (False, True)}
        for li, label in enumerate(sorted(units)):
            idx = list(units[label])
            np.random.default_rng([seed, li]).shuffle(idx)
            for pos, row in enumerate(idx):
                fold[row] = pos % folds
        return fold
    sess_label: dict[str, bool] = {}
    rows_by_sess: dict[str, list[int]] = {}
    for i, sid in enumerate(session_ids):
        rows_by_sess.setdefault(sid, []).append(i)
        sess_label[sid] = sess_label.get(sid, False) or bool(ybool[i])
    groups = {False: [], True: []}
    for sid in sorted(rows_by_sess):
        groups[sess_label[sid]].append(sid)
    for li, label in enumerate(sorted(groups)):
        sids = list(groups[label])
        np.random.default_rng([seed, li]).shuffle(sids)
        for pos, sid in enumerate(sids):
            for row in rows_by_sess[sid]:
                fold[row] = pos % folds
    return fold


def _cv_eval(X, y, schema, cols, fold, folds, seed, n_trees):
    """One scale->subset->forest CV pass; returns (mean F1, mean utility)."""
    names = tuple(schema)
    idx = [names.index(c) for c in cols]
    y01 = np.asarray(y).astype(np.int8)
    f1s, utils = [], []
    for f in range(folds):
        tr = fold != f
        va = ~tr
        if not va.any() or not tr.any():
            continue
        Xtr = X[np.nonzero(tr)[0]][:, idx]
        Xva = X[np.nonzero(va)[0]][:, idx]
        scaler = fit_minmax(Xtr, cols)
        model = train_forest(apply_minmax(Xtr, scaler), y01[tr],
                             list(cols), n_trees=n_trees, seed=seed)
        p = model.predict_proba(apply_minmax(Xva, scaler))
        pred = p >= 0.5
        yva = y01[va] == 1
        f1s.append(macro_f1(yva, pred))
        c = ConfusionCounts(
            tp=int((pred & yva).sum()), fp=int((pred & ~yva).sum()),
            tn=int((~pred & ~yva).sum()), fn=int((~pred & yva).sum()))
        utils.append(utility(c))
    if not f1s:
        return 0.0, 0.0
    return float(np.mean(f1s)), float(np.mean(utils))


def incremental_f1_curve(ranking: ImportanceRanking, X, y, schema,
                         session_ids=None, folds: int = 5, seed: int = 0,
                         n_trees: int = 400) -> ScoreCurve:
    X = np.ascontiguousarray(X, np.float64)
    fold = _fold_assignment(y, session_ids, folds, seed)
    ordered = ranking.columns()
    scores = []
    for k in range(1, len(ordered) + 1):
        f1, _ = _cv_eval(X, y, schema, ordered[:k], fold, folds, seed, n_trees)
        scores.append(f1)
    return ScoreCurve.from_scores(scores)


def track_a(X, y, schema, session_ids=None, n_rep: int = 20, folds: int = 5,
            seed: int = 42, rel: float = 0.01, n_trees: int = 400
            ) -> tuple[SelectionResult, ImportanceRanking]:
    X = np.ascontiguousarray(X, np.float64)
    forest = train_forest(X, np.asarray(y).astype(np.int8), list(schema),
                          n_trees=n_trees, seed=seed)
    ranking = permutation_importance(forest, X, y, n_rep=n_rep, seed=seed)
    curve = incremental_f1_curve(ranking, X, y, schema, session_ids,
                                 folds=folds, seed=seed, n_trees=n_trees)
    k_star = elbow(curve, rel=rel)
    result = SelectionResult(
        track="A", chosen_k=k_star, columns=ranking.columns()[:k_star],
        curve={"s": curve.s, "g": curve.g})
    return result, ranking


# ---------------------------------------------------------------------------
# track B: correlation pruning + chi-square ranking + utility wrapper
# ---------------------------------------------------------------------------

def prune_correlated(X, columns, cutoff: float = 0.90):
    """Drop the later member of each |r| > cutoff pair, in schema order."""
    X = np.asarray(X, np.float64)
    d = X.shape[1]
    means = X.mean(axis=0)
    centered = X - means
    norms = np.sqrt((centered * centered).sum(axis=0))
    dropped_idx: set[int] = set()
    for i in range(d):
        if i in dropped_idx:
            continue
        for j in range(i + 1, d):
            if j in dropped_idx:
                continue
            if norms[i] == 0.0 or norms[j] == 0.0:
                continue   # constant column: correlation undefined, keep both
            r = float((centered[:, i] * centered[:, j]).sum()) / (norms[i] * norms[j])
            if abs(r) > cutoff:
                dropped_idx.add(j)
    kept = [i for i in range(d) if i not in dropped_idx]
    kept_cols = [columns[i] for i in kept]
    dropped_cols = [columns[i] for i in sorted(dropped_idx)]
    return X[:, kept], kept_cols, dropped_cols


@dataclass
class ChiSquareRanking:
    ordered: list[str]    # scored columns first, bypass appended
    bypass: list[str]
    scores: dict[str, float]


def chi2_rank(X, y, columns, secondary: ImportanceRanking | None = None
              ) -> ChiSquareRanking:
    """Rank by chi-square of per-class scaled mass against class priors.

    Columns holding any negative value cannot be treated as mass; they skip
    scoring and are appended after the scored columns, ordered by the
    secondary ranking when one is given, else by schema order.
    """
    X = np.asarray(X, np.float64)
    ybool = np.asarray(y).astype(np.int8) == 1
    n = ybool.size
    priors = (float((~ybool).sum()) / n, float(ybool.sum()) / n)
    scored: list[tuple[str, float, int]] = []
    bypass: list[str] = []
    scores: dict[str, float] = {}
    for i, col in enumerate(columns):
        v = X[:, i]
        if np.any(v < 0):
            bypass.append(col)
            continue
        lo, hi = float(v.min()), float(v.max())
        sv = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
        observed = (float(sv[~ybool].sum()), float(sv[ybool].sum()))
        total = observed[0] + observed[1]
        stat = 0.0
        for o, p in zip(observed, priors):
            e = total * p
            if e > 0:
                stat += (o - e) ** 2 / e
        scored.append((col, stat, i))
        scores[col] = stat
    scored.sort(key=lambda t: (-t[1], t[2]))
    if secondary is not None:
        pos = {c: k for k, c in enumerate(secondary.columns())}
        bypass.sort(key=lambda c: pos.get(c, len(pos)))
    return ChiSquareRanking([c for c, _, _ in scored] + bypass, bypass, scores)


def utility_wrapper_search(ordered_columns, X, y, schema, session_ids=None,
                           k_values=None, folds: int = 5, seed: int = 42,
                           n_trees: int = 400) -> SelectionResult:
    """Argmax of cross-validated defender utility over prefix lengths."""
    X = np.ascontiguousarray(X, np.float64)
    width = len(ordered_columns)
    if k_values is None:
        k_values = [k for k in (2, 4, 8, 12, 16, 20, 24, 28, 32, 36) if k <= width]
        if not k_values or k_values[-1] != width:
            k_values.append(width)
    k_values = list(k_values)
    for k in k_values:
        if k < 1 or k > width:
            raise InvalidRange(f"prefix length {k} outside [1, {width}]")
    fold = _fold_assignment(y, session_ids, folds, seed)
    f1s, utils = [], []
    for k in k_values:
        f1, ut = _cv_eval(X, y, schema, ordered_columns[:k], fold, folds,
                          seed, n_trees)
        f1s.append(f1)
        utils.append(ut)
    best = max(range(len(k_values)), key=lambda i: (utils[i], -k_values[i]))
    k_star = k_values[best]
    return SelectionResult(
        track="B", chosen_k=k_star, columns=list(ordered_columns[:k_star]),
        curve={"k": k_values, "f1": f1s, "utility": utils})


def track_b(X, y, schema, session_ids=None, prior: ImportanceRanking | None = None,
            cutoff: float = 0.90, k_values=None, folds: int = 5,
            seed: int = 42, n_trees: int = 400) -> SelectionResult:
    X2, kept, dropped = prune_correlated(X, list(schema), cutoff=cutoff)
    ranking = chi2_rank(X2, y, kept, secondary=prior)
    result = utility_wrapper_search(ranking.ordered, X2, y, kept,
                                    session_ids=session_ids, k_values=k_values,
                                    folds=folds, seed=seed, n_trees=n_trees)
    result.dropped = dropped
    return result


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def selection_to_json(result: SelectionResult) -> str:
    obj = {
        "track": result.track,
        "chosen_k": result.chosen_k,
        "columns": result.columns,
        "curve": result.curve,
        "dropped": result.dropped,
    }
    return json.dumps(obj, sort_keys=True, indent=1)
