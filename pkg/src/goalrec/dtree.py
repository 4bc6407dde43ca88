"""Per-goal-type decision trees that stay defined under occlusion.

Trees are grown top-down on class-weighted entropy.  Potentially missing
features are never tested directly: they may only appear below the false
branch of their indicator feature, so inference can always evaluate the
node it reaches.  Because an informative base feature can hide behind an
uninformative indicator, the grower looks ahead one level when scoring
indicator splits, charging the usual complexity penalty lambda for the
extra node it is implicitly considering.  After growth the tree is
pruned bottom-up (weakest link, cost = leaf impurity + lambda * leaves)
and every node receives a Laplace-smoothed, class-weighted likelihood;
edge weights are child/parent likelihood ratios so a leaf value can be
read off as 0.5 times the product of the weights along its path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FeatureConsistencyError, ModelFormatError
from .features import DEFAULT_CATALOG, FeatureCatalog, FeatureVector, assemble
from .scene import GoalType

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters shared by growth, lookahead, and pruning.

    `oracle` trains on fully revealed data: potentially missing features
    become ordinary candidates, indicators and the lookahead are dropped.
    Such trees skip the gating rule and demand revealed vectors forever.
    """

    lam: float = 1e-4
    max_depth: int = 7
    min_samples_leaf: int = 10
    laplace_alpha: float = 1.0
    oracle: bool = False

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.laplace_alpha < 0:
            raise ValueError("laplace_alpha must be >= 0")


class Dataset:
    """Labelled feature vectors plus the matrix view used for training.

    `x` has one column per catalog column (missing values as NaN,
    booleans as 0/1) and `y` is the true-goal label.  Class weights
    follow w_G = N / N_G so that a rare positive class is not drowned
    out; they are only defined when both classes are present.
    """

    def __init__(
        self,
        samples: list[tuple[FeatureVector, bool]],
        catalog: FeatureCatalog = DEFAULT_CATALOG,
    ) -> None:
        self.samples = list(samples)
        self.catalog = catalog
        for fv, _ in self.samples:
            assemble(fv.values, fv.indicators, catalog)
        n_cols = len(catalog.columns)
        x = np.full((len(self.samples), n_cols), np.nan)
        y = np.zeros(len(self.samples), dtype=bool)
        n_base = len(catalog.all_base)
        for j, (fv, label) in enumerate(self.samples):
            for i, fid in enumerate(catalog.all_base):
                v = fv.values[fid]
                if v is not None:
                    x[j, i] = v
            for i, ind in enumerate(catalog.indicators):
                x[j, n_base + i] = 1.0 if fv.indicators[ind] else 0.0
            y[j] = label
        self.x = x
        self.y = y

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def n_g(self) -> int:
        return int(self.y.sum())

    @property
    def n_ng(self) -> int:
        return self.n - self.n_g

    @property
    def w_g(self) -> float:
        return self.n / self.n_g

    @property
    def w_ng(self) -> float:
        return self.n / self.n_ng

    def column(self, feature_id: str) -> np.ndarray:
        return self.x[:, self.catalog.columns.index(feature_id)]


@dataclass
class DecisionNode:
    """Internal test (feature, threshold) or leaf; always carries the
    per-node likelihood, sample counts and weighted impurity share."""

    likelihood: float
    n_g: int
    n_ng: int
    impurity: float
    feature: str | None = None
    threshold: float = 0.0
    true_child: "DecisionNode | None" = None
    false_child: "DecisionNode | None" = None
    weight_true: float | None = None
    weight_false: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class GoalTree:
    goal_type: GoalType | None
    root: DecisionNode
    catalog: FeatureCatalog
    config: TrainingConfig

    def iter_nodes(self):
        """Yield (node, depth) in preorder."""
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if not node.is_leaf:
                stack.append((node.false_child, depth + 1))
                stack.append((node.true_child, depth + 1))

    @property
    def depth(self) -> int:
        return max(d for _, d in self.iter_nodes())

    @property
    def n_leaves(self) -> int:
        return sum(1 for node, _ in self.iter_nodes() if node.is_leaf)


def _entropy(k_pos: float, k_neg: float, w_g: float, w_ng: float) -> float:
    """Binary entropy of the class-weighted positive fraction, in bits."""
    wp = w_g * k_pos
    wn = w_ng * k_neg
    if wp == 0.0 or wn == 0.0:
        return 0.0
    p = wp / (wp + wn)
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def _entropy_vec(pos: np.ndarray, neg: np.ndarray, w_g: float, w_ng: float) -> np.ndarray:
    wp = w_g * pos
    wn = w_ng * neg
    with np.errstate(divide="ignore", invalid="ignore"):
        p = wp / (wp + wn)
        # mirror the scalar path (1 - p, not wn/tot): split ties must
        # resolve the same way in the vectorised and one-off scans
        h = -(p * np.log2(p) + (1.0 - p) * np.log2(1.0 - p))
    return np.where((wp == 0.0) | (wn == 0.0), 0.0, h)


def _scan(
    values: np.ndarray,
    labels: np.ndarray,
    w_g: float,
    w_ng: float,
    min_side: int,
) -> tuple[float, float] | None:
    """Best (decrease, threshold) for one feature over one node's samples.

    Candidate thresholds are midpoints of consecutive distinct sorted
    values; candidates leaving fewer than min_side samples on either
    side are skipped.  Returns None when no candidate has a positive
    decrease.  Ties keep the smallest threshold.
    """
    order = np.argsort(values, kind="stable")
    vs = values[order]
    ys = labels[order]
    cut = np.nonzero(vs[:-1] != vs[1:])[0]
    if cut.size == 0:
        return None
    left_n = cut + 1
    keep = (left_n >= min_side) & (vs.size - left_n >= min_side)
    cut = cut[keep]
    if cut.size == 0:
        return None
    cum_pos = np.cumsum(ys)
    t_pos = int(cum_pos[-1])
    t_neg = vs.size - t_pos
    h_parent = _entropy(t_pos, t_neg, w_g, w_ng)
    if h_parent == 0.0:
        return None
    l_pos = cum_pos[cut]
    l_neg = (cut + 1) - l_pos
    r_pos = t_pos - l_pos
    r_neg = t_neg - l_neg
    w_l = w_g * l_pos + w_ng * l_neg
    w_r = w_g * r_pos + w_ng * r_neg
    w_all = w_l + w_r
    dec = h_parent - (w_l / w_all * _entropy_vec(l_pos, l_neg, w_g, w_ng)
                      + w_r / w_all * _entropy_vec(r_pos, r_neg, w_g, w_ng))
    best = int(np.argmax(dec))
    if dec[best] <= 0.0:
        return None
    c = 0.5 * (vs[cut[best]] + vs[cut[best] + 1])
    return float(dec[best]), float(c)


def impurity_decrease(threshold: float, feature_id: str, dataset: Dataset) -> float:
    """Entropy decrease of splitting the dataset on feature > threshold.

    Every sample must have a known value for the feature.  A threshold
    that leaves one side empty changes nothing and scores exactly 0.
    """
    col = dataset.column(feature_id)
    if np.isnan(col).any():
        raise FeatureConsistencyError(f"{feature_id} has missing values in this split set")
    y = dataset.y
    t_pos, t_neg = dataset.n_g, dataset.n_ng
    if t_pos == 0 or t_neg == 0:
        return 0.0
    w_g, w_ng = dataset.w_g, dataset.w_ng
    true_side = col > threshold
    r_pos = int(y[true_side].sum())
    r_neg = int(true_side.sum()) - r_pos
    l_pos = t_pos - r_pos
    l_neg = t_neg - r_neg
    w_l = w_g * l_pos + w_ng * l_neg
    w_r = w_g * r_pos + w_ng * r_neg
    w_all = w_l + w_r
    return _entropy(t_pos, t_neg, w_g, w_ng) - (
        w_l / w_all * _entropy(l_pos, l_neg, w_g, w_ng)
        + w_r / w_all * _entropy(r_pos, r_neg, w_g, w_ng)
    )


def best_split(
    dataset: Dataset, allowed_features: list[str] | set[str]
) -> tuple[str, float, float] | None:
    """Maximising (feature, threshold, decrease) over the allowed features.

    Ties are broken toward earlier catalog order, then smaller
    threshold.  Returns None when every candidate decrease is 0.
    """
    allowed = set(allowed_features)
    unknown = allowed - set(dataset.catalog.columns)
    if unknown:
        raise ValueError(f"unknown feature ids: {sorted(unknown)}")
    if dataset.n_g == 0 or dataset.n_ng == 0:
        return None
    w_g, w_ng = dataset.w_g, dataset.w_ng
    best: tuple[str, float, float] | None = None
    for i, fid in enumerate(dataset.catalog.columns):
        if fid not in allowed:
            continue
        col = dataset.x[:, i]
        if np.isnan(col).any():
            raise FeatureConsistencyError(f"{fid} has missing values in this split set")
        got = _scan(col, dataset.y, w_g, w_ng, 1)
        if got is not None and (best is None or got[0] > best[2]):
            best = (fid, got[1], got[0])
    return best


def lookahead_split(
    dataset: Dataset, feature_id: str, config: TrainingConfig | None = None
) -> tuple[float, float | None] | None:
    """Score an indicator split together with the best child split on the
    potentially missing feature underneath its false branch.

    Returns (decrease(indicator) + best child decrease - lam, child
    threshold); the child search respects min_samples_leaf.  Returns
    None when no sample has the feature present, and a None threshold
    when the indicator part stands alone.
    """
    cfg = config or TrainingConfig()
    cat = dataset.catalog
    if feature_id not in cat.base_missing:
        raise ValueError(f"{feature_id} is not a potentially missing feature")
    if dataset.n_g == 0 or dataset.n_ng == 0:
        return None
    indicator = cat.indicator_of(feature_id)
    present = dataset.column(indicator) < 0.5
    if not present.any():
        return None
    dec_ind = impurity_decrease(0.5, indicator, dataset)
    child = _scan(
        dataset.column(feature_id)[present],
        dataset.y[present],
        dataset.w_g,
        dataset.w_ng,
        cfg.min_samples_leaf,
    )
    if child is None:
        return dec_ind - cfg.lam, None
    return dec_ind + child[0] - cfg.lam, child[1]


def leaf_likelihood(n_g: int, n_ng: int, w_g: float, w_ng: float, alpha: float) -> float:
    """Class-weighted positive fraction with alpha added to each count."""
    wp = w_g * (n_g + alpha)
    wn = w_ng * (n_ng + alpha)
    if wp + wn == 0.0:
        return 0.5
    return wp / (wp + wn)


def train(
    dataset: Dataset,
    config: TrainingConfig | None = None,
    goal_type: GoalType | None = None,
) -> GoalTree:
    """Grow, prune, and weight one tree.

    Growth follows the lookahead rule: plain splits compete on raw
    impurity decrease against indicator splits scored together with
    their best child split (penalised by lam), but a winning lookahead
    still places only the indicator node; the recursion rediscovers the
    child once the indicator is pinned false on that branch.  A dataset
    with a single class yields a single leaf.
    """
    cfg = config or TrainingConfig()
    cat = dataset.catalog
    x, y = dataset.x, dataset.y
    n = dataset.n
    n_g, n_ng = dataset.n_g, dataset.n_ng
    both = 0 < n_g < n
    w_g = dataset.w_g if both else 1.0
    w_ng = dataset.w_ng if both else 1.0
    w_root = w_g * n_g + w_ng * n_ng
    # likelihood weights use Laplace pseudo-counts throughout, which
    # pins the root likelihood at exactly 0.5
    a = cfg.laplace_alpha
    lw_g = (n + 2 * a) / (n_g + a) if n_g + a > 0 else 1.0
    lw_ng = (n + 2 * a) / (n_ng + a) if n_ng + a > 0 else 1.0

    n_b = len(cat.base_always)
    n_m = len(cat.base_missing)
    ind_col = {n_b + j: n_b + n_m + j for j in range(n_m)}
    if cfg.oracle and np.isnan(x[:, : n_b + n_m]).any():
        raise ValueError("oracle training needs every base feature revealed")

    def make_node(idx: np.ndarray) -> tuple[DecisionNode, float]:
        k_pos = int(y[idx].sum())
        k_neg = idx.size - k_pos
        h = _entropy(k_pos, k_neg, w_g, w_ng)
        q = 0.0 if h == 0.0 else (w_g * k_pos + w_ng * k_neg) / w_root * h
        node = DecisionNode(
            likelihood=leaf_likelihood(k_pos, k_neg, lw_g, lw_ng, a),
            n_g=k_pos,
            n_ng=k_neg,
            impurity=q,
        )
        return node, h

    def grow(idx: np.ndarray, depth: int, ct: frozenset, cf: frozenset) -> DecisionNode:
        node, h = make_node(idx)
        if depth >= cfg.max_depth or idx.size < cfg.min_samples_leaf or h == 0.0:
            return node
        best_score = 0.0
        best: tuple[int, float] | None = None
        for col in range(x.shape[1]):
            if cfg.oracle:
                if col >= n_b + n_m:
                    continue  # constant-false indicators carry nothing
            elif col in ind_col and ind_col[col] not in cf:
                continue  # gated feature without a false indicator above
            got = _scan(x[idx, col], y[idx], w_g, w_ng, cfg.min_samples_leaf)
            if got is not None and got[0] > best_score:
                best_score, best = got[0], (col, got[1])
        lookahead = {} if cfg.oracle else ind_col
        for col, icol in lookahead.items():
            if icol in ct or icol in cf:
                continue
            missing = x[idx, icol] > 0.5
            n_t = int(missing.sum())
            if n_t < cfg.min_samples_leaf or idx.size - n_t < cfg.min_samples_leaf:
                continue
            sub = idx[~missing]
            child = _scan(x[sub, col], y[sub], w_g, w_ng, cfg.min_samples_leaf)
            child_dec = child[0] if child is not None else 0.0
            dec_ind = _split_decrease(y, idx, missing, w_g, w_ng)
            score = dec_ind + child_dec - cfg.lam
            if score > best_score:
                best_score, best = score, (icol, 0.5)
        if best is None:
            return node
        col, c = best
        mask = x[idx, col] > c
        ct_true, cf_false = ct, cf
        if col >= n_b + n_m:
            ct_true = ct | {col}
            cf_false = cf | {col}
        node.feature = cat.columns[col]
        node.threshold = c
        node.true_child = grow(idx[mask], depth + 1, ct_true, cf)
        node.false_child = grow(idx[~mask], depth + 1, ct, cf_false)
        return node

    root = grow(np.arange(n), 0, frozenset(), frozenset())
    tree = GoalTree(goal_type=goal_type, root=root, catalog=cat, config=cfg)
    return prune(tree, cfg.lam)


def _split_decrease(
    y: np.ndarray, idx: np.ndarray, true_side: np.ndarray, w_g: float, w_ng: float
) -> float:
    t_pos = int(y[idx].sum())
    t_neg = idx.size - t_pos
    r_pos = int(y[idx[true_side]].sum())
    r_neg = int(true_side.sum()) - r_pos
    l_pos = t_pos - r_pos
    l_neg = t_neg - r_neg
    w_l = w_g * l_pos + w_ng * l_neg
    w_r = w_g * r_pos + w_ng * r_neg
    w_all = w_l + w_r
    return _entropy(t_pos, t_neg, w_g, w_ng) - (
        w_l / w_all * _entropy(l_pos, l_neg, w_g, w_ng)
        + w_r / w_all * _entropy(r_pos, r_neg, w_g, w_ng)
    )


def _copy_nodes(node: DecisionNode) -> DecisionNode:
    clone = replace(node)
    if not node.is_leaf:
        clone.true_child = _copy_nodes(node.true_child)
        clone.false_child = _copy_nodes(node.false_child)
    return clone


def _leaf_stats(node: DecisionNode) -> tuple[float, int]:
    """(sum of leaf impurities, leaf count) under a node."""
    if node.is_leaf:
        return node.impurity, 1
    q_t, n_t = _leaf_stats(node.true_child)
    q_f, n_f = _leaf_stats(node.false_child)
    return q_t + q_f, n_t + n_f


def tree_cost(tree: GoalTree, lam: float) -> float:
    """Cost-complexity objective: total leaf impurity + lam * leaf count."""
    q, leaves = _leaf_stats(tree.root)
    return q + lam * leaves


def prune(tree: GoalTree, lam: float, trace: list[float] | None = None) -> GoalTree:
    """Weakest-link pruning of a copy of the tree.

    Repeatedly collapses the internal node whose removal increases the
    total leaf impurity least per leaf removed, while that rate stays
    within lam.  When trace is given, the cost after every collapse
    (including the starting cost) is appended to it.
    """
    root = _copy_nodes(tree.root)
    if trace is not None:
        q, leaves = _leaf_stats(root)
        trace.append(q + lam * leaves)
    while True:
        weakest: DecisionNode | None = None
        weakest_g = math.inf
        stack = [root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            stack.append(node.false_child)
            stack.append(node.true_child)
            q_sub, n_sub = _leaf_stats(node)
            g = (node.impurity - q_sub) / (n_sub - 1)
            if g < weakest_g:
                weakest_g, weakest = g, node
        if weakest is None or weakest_g > lam:
            break
        weakest.feature = None
        weakest.true_child = None
        weakest.false_child = None
        weakest.weight_true = None
        weakest.weight_false = None
        if trace is not None:
            q, leaves = _leaf_stats(root)
            trace.append(q + lam * leaves)
    _assign_edge_weights(root)
    return replace(tree, root=root)


def _assign_edge_weights(node: DecisionNode) -> None:
    if node.is_leaf:
        return
    node.weight_true = node.true_child.likelihood / node.likelihood
    node.weight_false = node.false_child.likelihood / node.likelihood
    _assign_edge_weights(node.true_child)
    _assign_edge_weights(node.false_child)


def infer_likelihood(tree: GoalTree, x: FeatureVector) -> float:
    """Walk the tree and return the leaf likelihood.

    Indicator nodes branch on the indicator flag; other nodes on
    value > threshold.  A missing value can only be reached through a
    corrupted tree, never through a vector satisfying the catalog
    invariants, and raises.
    """
    cat = tree.catalog
    node = tree.root
    while not node.is_leaf:
        fid = node.feature
        if fid in cat.indicators:
            branch = x.indicators[fid]
        else:
            v = x.values[fid]
            if v is None:
                why = (
                    "oracle trees need fully revealed vectors"
                    if tree.config.oracle
                    else "the model violates the gating rule"
                )
                raise FeatureConsistencyError(f"tree tested {fid} where it is missing; {why}")
            branch = v > node.threshold
        node = node.true_child if branch else node.false_child
    return node.likelihood


# --- model files ---


def _tree_to_dict(tree: GoalTree) -> dict:
    nodes: list[dict] = []

    def emit(node: DecisionNode) -> int:
        node_id = len(nodes)
        entry = {
            "id": node_id,
            "kind": "leaf" if node.is_leaf else "internal",
            "feature": node.feature,
            "threshold": node.threshold if not node.is_leaf else None,
            "true_child": None,
            "false_child": None,
            "likelihood": node.likelihood,
            "weight_true": node.weight_true,
            "weight_false": node.weight_false,
            "n_g": node.n_g,
            "n_ng": node.n_ng,
            "impurity": node.impurity,
        }
        nodes.append(entry)
        if not node.is_leaf:
            entry["true_child"] = emit(node.true_child)
            entry["false_child"] = emit(node.false_child)
        return node_id

    emit(tree.root)
    cfg = tree.config
    return {
        "goal_type": tree.goal_type.value if tree.goal_type is not None else None,
        "config": {
            "lambda": cfg.lam,
            "max_depth": cfg.max_depth,
            "min_samples_leaf": cfg.min_samples_leaf,
            "laplace_alpha": cfg.laplace_alpha,
            "oracle": cfg.oracle,
        },
        "nodes": nodes,
    }


def save_model(models: dict[GoalType, GoalTree], path: str) -> None:
    """Write all trees to one JSON file, ordered by goal type."""
    trees = [_tree_to_dict(models[gt]) for gt in GoalType if gt in models]
    payload = {"format_version": MODEL_FORMAT_VERSION, "trees": trees}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)


def _dict_to_tree(entry: dict, catalog: FeatureCatalog) -> GoalTree:
    cfg = TrainingConfig(
        lam=entry["config"]["lambda"],
        max_depth=entry["config"]["max_depth"],
        min_samples_leaf=entry["config"]["min_samples_leaf"],
        laplace_alpha=entry["config"]["laplace_alpha"],
        oracle=entry["config"].get("oracle", False),
    )
    by_id: dict[int, dict] = {}
    for raw in entry["nodes"]:
        if raw["id"] in by_id:
            raise ModelFormatError(f"duplicate node id {raw['id']}")
        by_id[raw["id"]] = raw
    if 0 not in by_id:
        raise ModelFormatError("missing root node (id 0)")

    binary = set(catalog.indicators) | {
        fid for fid in catalog.all_base if catalog.kinds[fid] == "binary"
    }

    def build(node_id: int, seen: set[int], gated_false: frozenset) -> DecisionNode:
        if node_id in seen:
            raise ModelFormatError(f"node {node_id} referenced twice")
        seen.add(node_id)
        raw = by_id.get(node_id)
        if raw is None:
            raise ModelFormatError(f"child id {node_id} not present")
        if raw["kind"] == "leaf":
            if not 0.0 < raw["likelihood"] < 1.0:
                raise ModelFormatError(f"leaf likelihood {raw['likelihood']} outside (0, 1)")
            return DecisionNode(
                likelihood=raw["likelihood"],
                n_g=raw["n_g"],
                n_ng=raw["n_ng"],
                impurity=raw["impurity"],
            )
        fid = raw["feature"]
        if fid not in catalog.columns:
            raise ModelFormatError(f"unknown feature id {fid!r}")
        if fid in binary and raw["threshold"] != 0.5:
            raise ModelFormatError(f"{fid} must be tested at threshold 0.5")
        if cfg.oracle:
            if fid in catalog.indicators:
                raise ModelFormatError(f"indicator {fid} tested in an oracle tree")
        elif fid in catalog.base_missing and catalog.indicator_of(fid) not in gated_false:
            raise ModelFormatError(
                f"{fid} tested without its indicator pinned false on the path"
            )
        child_gate = gated_false | {fid} if fid in catalog.indicators else gated_false
        return DecisionNode(
            likelihood=raw["likelihood"],
            n_g=raw["n_g"],
            n_ng=raw["n_ng"],
            impurity=raw["impurity"],
            feature=fid,
            threshold=raw["threshold"],
            true_child=build(raw["true_child"], seen, gated_false),
            false_child=build(raw["false_child"], seen, child_gate),
            weight_true=raw["weight_true"],
            weight_false=raw["weight_false"],
        )

    root = build(0, set(), frozenset())
    gt = GoalType.from_string(entry["goal_type"]) if entry["goal_type"] else None
    return GoalTree(goal_type=gt, root=root, catalog=catalog, config=cfg)


def load_model(path: str, catalog: FeatureCatalog = DEFAULT_CATALOG) -> dict[GoalType, GoalTree]:
    """Read a model file back into one GoalTree per stored goal type."""
    try:
        with open(path) as f:
            payload = json.load(f)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version!r}")
    models: dict[GoalType, GoalTree] = {}
    try:
        for entry in payload["trees"]:
            tree = _dict_to_tree(entry, catalog)
            if tree.goal_type in models:
                raise ModelFormatError(f"duplicate tree for {tree.goal_type.value}")
            models[tree.goal_type] = tree
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    return models
