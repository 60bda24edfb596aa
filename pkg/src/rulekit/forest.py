"""Random forest over categorical records with permutation importance.

Trees split on category subsets: each internal node sends a subset of one
variable's categories left and the rest (plus anything unseen) right. Splits
are chosen by Gini impurity decrease, with the subset search exhaustive up
to 12 present categories and greedy beyond that.

Importance is Mean Decrease Accuracy: for every tree, the accuracy on its
out-of-bag records is compared with the accuracy after permuting one
feature's column within those records; the per-feature mean over trees is
the mda, reported with its standard deviation. A feature no tree ever
splits on scores exactly 0.

Everything is deterministic for a given seed: each tree draws from its own
RNG stream keyed by (seed, purpose, tree index), so results do not depend
on thread count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .io_utils import write_csv, write_json
from .parallel import run_ordered
from .schema import DataDictionary, RecordSet

logger = logging.getLogger(__name__)

# Exhaustive binary-subset search enumerates 2^(m-1) - 1 partitions; 12
# present categories cap that at 2047 candidates per node and feature.
_EXHAUSTIVE_MAX_CATEGORIES = 12


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    mtry: int | None = None  # None resolves to floor(sqrt(#features))
    min_node_size: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValidationError(f"n_trees {self.n_trees} must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValidationError(f"mtry {self.mtry} must be >= 1")
        if self.min_node_size < 1:
            raise ValidationError(f"min_node_size {self.min_node_size} must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError(f"max_depth {self.max_depth} must be >= 1")


@dataclass(frozen=True)
class TreeNode:
    """Internal node (feature >= 0) or leaf (feature == -1).

    left_categories holds the category indices of the split feature routed
    to the left child; any other index, seen in training or not, goes right.
    """

    feature: int
    left_categories: frozenset[int]
    left: int
    right: int
    class_index: int
    class_counts: tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True, eq=False)
class DecisionTree:
    nodes: tuple[TreeNode, ...]
    in_bag: np.ndarray  # per-record bootstrap multiplicity
    oob_indices: np.ndarray


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[DecisionTree, ...]
    response_variable: str
    features: tuple[str, ...]
    class_labels: tuple[str, ...]
    dictionary: DataDictionary
    n_records: int
    config: ForestConfig
    mtry: int


@dataclass(frozen=True)
class OobPrediction:
    """Out-of-bag majority votes; None where a record was never out-of-bag."""

    predictions: tuple[str | None, ...]
    accuracy: float

    @property
    def coverage(self) -> float:
        covered = sum(1 for p in self.predictions if p is not None)
        return covered / len(self.predictions) if self.predictions else 0.0


@dataclass(frozen=True)
class ImportanceEntry:
    variable: str
    mda: float
    sd: float


@dataclass(frozen=True)
class ImportanceReport:
    entries: tuple[ImportanceEntry, ...]
    oob_accuracy: float


def best_partition(
    counts: np.ndarray, min_node_size: int = 1
) -> tuple[float, frozenset[int]] | None:
    """Best binary category partition of one feature by Gini decrease.

    counts is the (category x class) contingency of the node's in-bag
    records. Returns (impurity decrease, category indices routed left), or
    None when no partition with both children >= min_node_size improves on
    the parent. With m present categories the 2^(m-1) - 1 unordered
    partitions are scored exactly for m <= 12; beyond that a forward greedy
    pass moves one category at a time and keeps the best valid split seen.
    """
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=1)
    present = np.flatnonzero(totals > 0)
    if len(present) < 2:
        return None
    cp = counts[present]
    class_totals = cp.sum(axis=0)
    n_t = float(class_totals.sum())
    parent_gini = 1.0 - float((class_totals**2).sum()) / (n_t * n_t)
    m = len(present)

    if m <= _EXHAUSTIVE_MAX_CATEGORIES:
        # Fix the last present category on the right so each unordered
        # partition is enumerated exactly once.
        masks = np.arange(1, 1 << (m - 1), dtype=np.uint32)
        bits = ((masks[:, None] >> np.arange(m - 1)) & 1).astype(np.float64)
        left = bits @ cp[:-1]
        right = class_totals - left
        nl = left.sum(axis=1)
        nr = n_t - nl
        with np.errstate(divide="ignore", invalid="ignore"):
            child = (
                nl - (left**2).sum(axis=1) / nl + nr - (right**2).sum(axis=1) / nr
            ) / n_t
        decrease = parent_gini - child
        valid = (nl >= min_node_size) & (nr >= min_node_size)
        decrease = np.where(valid, decrease, -np.inf)
        best = int(np.argmax(decrease))  # first index wins ties
        if decrease[best] <= 0.0:
            return None
        chosen = bits[best].astype(bool)
        left_cats = frozenset(int(c) for c in present[:-1][chosen])
        return float(decrease[best]), left_cats

    # Greedy path: grow the left side one category at a time, always taking
    # the locally best addition, and remember the best valid partition.
    in_left = np.zeros(m, dtype=bool)
    left_counts = np.zeros_like(class_totals)
    best_overall: tuple[float, frozenset[int]] | None = None
    for _ in range(m - 1):
        step: tuple[float, int] | None = None
        for pos in range(m):
            if in_left[pos]:
                continue
            cand = left_counts + cp[pos]
            nl = float(cand.sum())
            nr = n_t - nl
            if nr <= 0.0:
                continue
            child = (
                nl
                - float((cand**2).sum()) / nl
                + nr
                - float(((class_totals - cand) ** 2).sum()) / nr
            ) / n_t
            dec = parent_gini - child
            if step is None or dec > step[0]:
                step = (dec, pos)
        if step is None:
            break
        dec, pos = step
        in_left[pos] = True
        left_counts = left_counts + cp[pos]
        nl = float(left_counts.sum())
        nr = n_t - nl
        if dec > 0.0 and nl >= min_node_size and nr >= min_node_size:
            if best_overall is None or dec > best_overall[0]:
                best_overall = (dec, frozenset(int(c) for c in present[in_left]))
    return best_overall


def _encode_columns(rs: RecordSet, variables: Sequence[str]) -> np.ndarray:
    """Category-index matrix, one column per variable in the given order."""
    cols = []
    for name in variables:
        var = rs.dictionary.variable(name)
        index = {c: i for i, c in enumerate(var.categories)}
        cols.append([index[r.values[name]] for r in rs.records])
    return np.array(cols, dtype=np.int64).transpose().copy()


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_cats: np.ndarray,
    n_classes: int,
    mtry: int,
    cfg: ForestConfig,
    rng: np.random.Generator,
) -> tuple[tuple[TreeNode, ...], np.ndarray]:
    n = len(y)
    n_features = X.shape[1]
    boot = rng.integers(0, n, size=n)
    nodes: list[TreeNode | None] = [None]
    stack: list[tuple[int, np.ndarray, int]] = [(0, boot, 0)]
    while stack:
        nid, rows, depth = stack.pop()
        counts = np.bincount(y[rows], minlength=n_classes)
        class_index = int(np.argmax(counts))
        pure = int((counts > 0).sum()) <= 1
        capped = cfg.max_depth is not None and depth >= cfg.max_depth
        too_small = len(rows) < 2 * cfg.min_node_size
        split: tuple[float, int, frozenset[int]] | None = None
        if not (pure or capped or too_small):
            feats = np.sort(rng.choice(n_features, size=mtry, replace=False))
            for f in feats:
                f = int(f)
                cont = np.bincount(
                    X[rows, f] * n_classes + y[rows], minlength=n_cats[f] * n_classes
                ).reshape(n_cats[f], n_classes)
                found = best_partition(cont, cfg.min_node_size)
                if found is not None and (split is None or found[0] > split[0]):
                    split = (found[0], f, found[1])
        if split is None:
            nodes[nid] = TreeNode(
                feature=-1,
                left_categories=frozenset(),
                left=-1,
                right=-1,
                class_index=class_index,
                class_counts=tuple(int(c) for c in counts),
            )
            continue
        _, f, left_cats = split
        lut = np.zeros(n_cats[f], dtype=bool)
        lut[list(left_cats)] = True
        mask = lut[X[rows, f]]
        left_id = len(nodes)
        nodes.append(None)
        right_id = len(nodes)
        nodes.append(None)
        nodes[nid] = TreeNode(
            feature=f,
            left_categories=left_cats,
            left=left_id,
            right=right_id,
            class_index=class_index,
            class_counts=tuple(int(c) for c in counts),
        )
        stack.append((right_id, rows[~mask], depth + 1))
        stack.append((left_id, rows[mask], depth + 1))
    assert all(node is not None for node in nodes)
    return tuple(nodes), boot


def train(
    rs: RecordSet,
    response: str,
    features: Sequence[str],
    cfg: ForestConfig | None = None,
    threads: int = 1,
) -> Forest:
    """Grow a forest of bootstrap trees predicting response from features.

    Every feature and the response must be dictionary variables; the
    response must take at least two distinct values in the data. Each tree
    samples n records with replacement and, at every node, examines mtry
    features drawn without replacement.
    """
    cfg = cfg if cfg is not None else ForestConfig()
    features = tuple(features)
    if not features:
        raise ValidationError("features must be nonempty")
    if response in features:
        raise ValidationError(f"response {response!r} cannot also be a feature")
    if len(rs) < 2:
        raise ValidationError("training needs at least 2 records")
    X = _encode_columns(rs, features)
    y = _encode_columns(rs, (response,))[:, 0]
    class_labels = rs.dictionary.variable(response).categories
    if len(np.unique(y)) < 2:
        raise ValidationError(
            f"response {response!r} takes a single value; nothing to learn"
        )
    mtry = cfg.mtry if cfg.mtry is not None else math.isqrt(len(features))
    if not 1 <= mtry <= len(features):
        raise ValidationError(f"mtry {mtry} out of range [1, {len(features)}]")
    n = len(rs)
    n_cats = np.array(
        [len(rs.dictionary.variable(v).categories) for v in features], dtype=np.int64
    )
    n_classes = len(class_labels)

    def build(i: int) -> DecisionTree:
        rng = np.random.default_rng([cfg.seed % 2**64, 0, i])
        nodes, boot = _grow_tree(X, y, n_cats, n_classes, mtry, cfg, rng)
        in_bag = np.bincount(boot, minlength=n)
        in_bag.setflags(write=False)
        oob = np.flatnonzero(in_bag == 0)
        oob.setflags(write=False)
        return DecisionTree(nodes=nodes, in_bag=in_bag, oob_indices=oob)

    trees = run_ordered(build, range(cfg.n_trees), threads=threads)
    return Forest(
        trees=tuple(trees),
        response_variable=response,
        features=features,
        class_labels=class_labels,
        dictionary=rs.dictionary,
        n_records=n,
        config=cfg,
        mtry=mtry,
    )


def _tree_predict(tree: DecisionTree, Xm: np.ndarray, n_cats: np.ndarray) -> np.ndarray:
    out = np.zeros(len(Xm), dtype=np.int64)
    if len(Xm) == 0:
        return out
    stack: list[tuple[int, np.ndarray]] = [(0, np.arange(len(Xm)))]
    while stack:
        nid, rows = stack.pop()
        node = tree.nodes[nid]
        if node.is_leaf:
            out[rows] = node.class_index
            continue
        lut = np.zeros(n_cats[node.feature], dtype=bool)
        lut[list(node.left_categories)] = True
        mask = lut[Xm[rows, node.feature]]
        left_rows = rows[mask]
        right_rows = rows[~mask]
        if len(left_rows):
            stack.append((node.left, left_rows))
        if len(right_rows):
            stack.append((node.right, right_rows))
    return out


def _check_match(forest: Forest, rs: RecordSet) -> None:
    if rs.dictionary != forest.dictionary or len(rs) != forest.n_records:
        raise ValidationError(
            "record set does not match the forest's training data "
            "(dictionary or record count differs)"
        )


def oob_predict(forest: Forest, rs: RecordSet) -> OobPrediction:
    """Majority vote per record over the trees where it was out-of-bag.

    Records in-bag for every tree get prediction None and are left out of
    the accuracy denominator. Vote ties break toward the class listed first
    in the dictionary.
    """
    _check_match(forest, rs)
    X = _encode_columns(rs, forest.features)
    y = _encode_columns(rs, (forest.response_variable,))[:, 0]
    n = forest.n_records
    n_cats = np.array(
        [len(forest.dictionary.variable(v).categories) for v in forest.features],
        dtype=np.int64,
    )
    votes = np.zeros((n, len(forest.class_labels)), dtype=np.int64)
    for tree in forest.trees:
        oob = tree.oob_indices
        if len(oob) == 0:
            continue
        preds = _tree_predict(tree, X[oob], n_cats)
        np.add.at(votes, (oob, preds), 1)
    covered = votes.sum(axis=1) > 0
    winner = np.argmax(votes, axis=1)
    if covered.any():
        accuracy = float(np.mean(winner[covered] == y[covered]))
    else:
        logger.warning("no record was out-of-bag for any tree; accuracy undefined")
        accuracy = float("nan")
    predictions = tuple(
        forest.class_labels[int(w)] if c else None for w, c in zip(winner, covered)
    )
    return OobPrediction(predictions=predictions, accuracy=accuracy)


def mda_importance(
    forest: Forest, rs: RecordSet, seed: int, threads: int = 1
) -> ImportanceReport:
    """Mean Decrease Accuracy per feature, averaged over trees.

    For each tree, each feature's column is permuted within the tree's
    out-of-bag rows (one fresh permutation per tree and feature) and the
    accuracy drop recorded; trees with no out-of-bag rows are skipped. The
    report is sorted by descending mda, ties by dictionary variable order.
    """
    _check_match(forest, rs)
    X = _encode_columns(rs, forest.features)
    y = _encode_columns(rs, (forest.response_variable,))[:, 0]
    n_features = len(forest.features)
    n_cats = np.array(
        [len(forest.dictionary.variable(v).categories) for v in forest.features],
        dtype=np.int64,
    )

    def tree_drops(t: int) -> np.ndarray | None:
        tree = forest.trees[t]
        oob = tree.oob_indices
        if len(oob) == 0:
            return None
        rng = np.random.default_rng([seed % 2**64, 1, t])
        Xo = X[oob]
        yo = y[oob]
        base = float(np.mean(_tree_predict(tree, Xo, n_cats) == yo))
        drops = np.zeros(n_features, dtype=np.float64)
        Xp = Xo.copy()
        for f in range(n_features):
            perm = rng.permutation(len(oob))
            Xp[:, f] = Xo[perm, f]
            permuted = float(np.mean(_tree_predict(tree, Xp, n_cats) == yo))
            Xp[:, f] = Xo[:, f]
            drops[f] = base - permuted
        return drops

    per_tree = run_ordered(tree_drops, range(len(forest.trees)), threads=threads)
    included = [d for d in per_tree if d is not None]
    if not included:
        raise ValidationError(
            "every record was in-bag for every tree; importance is undefined"
        )
    matrix = np.vstack(included)
    mda = matrix.mean(axis=0)
    sd = matrix.std(axis=0)  # population sd over trees
    order = sorted(
        range(n_features),
        key=lambda f: (-mda[f], forest.dictionary.variable_index(forest.features[f])),
    )
    entries = tuple(
        ImportanceEntry(variable=forest.features[f], mda=float(mda[f]), sd=float(sd[f]))
        for f in order
    )
    accuracy = oob_predict(forest, rs).accuracy
    return ImportanceReport(entries=entries, oob_accuracy=accuracy)


def select_top_k(report: ImportanceReport, k: int) -> tuple[str, ...]:
    """First k variables of the report (already sorted by descending mda)."""
    if not 1 <= k <= len(report.entries):
        raise ValidationError(f"k {k} out of range [1, {len(report.entries)}]")
    return tuple(entry.variable for entry in report.entries[:k])


def export_importance_csv(report: ImportanceReport, sink: str | Path) -> Path:
    rows = [
        [entry.variable, repr(entry.mda), repr(entry.sd), rank]
        for rank, entry in enumerate(report.entries, start=1)
    ]
    return write_csv(sink, ["variable", "mda", "sd", "rank"], rows)


def export_importance_json(report: ImportanceReport, sink: str | Path) -> Path:
    payload = {
        "oob_accuracy": report.oob_accuracy,
        "entries": [
            {"rank": rank, "variable": e.variable, "mda": e.mda, "sd": e.sd}
            for rank, e in enumerate(report.entries, start=1)
        ],
    }
    return write_json(sink, payload)
