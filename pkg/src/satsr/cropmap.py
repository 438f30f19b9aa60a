"""Crop-type mapping harness over multi-temporal pixel spectra.

Per-pixel features stack six bands over three summer months; classes are
weighted by inverse frequency; the classifier is a histogram gradient
boosted tree ensemble written here because no packaged implementation at
hand honors all four required knobs (depth, learning rate, bin count, row
subsample ratio) with per-sample weights.

Determinism: feature binning uses quantiles of the value multiset and all
boosting-side accumulation happens in a canonical sample order (lexsorted
bin codes + label), so permuting the training rows cannot change the
model, not even in the last float bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import ClassificationReport, ConfusionMatrix, classification_metrics
from .synth import CROP_CLASS_NAMES

N_MONTHS = 3
N_FEATURES = 6 * N_MONTHS

_REG_LAMBDA = 1.0  # leaf ridge term, the customary default
_MIN_GAIN = 1e-12
_MIN_CHILD_HESSIAN = 1e-6


@dataclass
class CropSample:
    features: np.ndarray  # (18,) float64
    label: int
    weight: float = 1.0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (N_FEATURES,):
            raise ValueError(
                f"features must have length {N_FEATURES}, "
                f"got {self.features.shape}"
            )
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")


@dataclass
class BoostConfig:
    max_depth: int = 20
    learning_rate: float = 0.05
    histogram_bins: int = 128
    subsample: float = 0.7
    rounds: int = 200
    seed: int = 0

    def __post_init__(self):
        if min(self.max_depth, self.histogram_bins, self.rounds) < 1:
            raise ValueError("max_depth, histogram_bins, rounds must be >= 1")
        if self.learning_rate <= 0 or not 0 < self.subsample <= 1:
            raise ValueError("learning_rate must be > 0 and subsample in (0, 1]")


def extract_features(stacks, labels: np.ndarray) -> list[CropSample]:
    """One sample per pixel, row-major.

    Feature order is band-major, month-minor: index b*3 + m holds band b
    in month m.  Exactly three co-registered months are required.
    """
    stacks = list(stacks)
    if len(stacks) != N_MONTHS:
        raise ValueError(f"expected {N_MONTHS} monthly grids, got {len(stacks)}")
    labels = np.asarray(labels)
    h, w = labels.shape
    for i, stack in enumerate(stacks):
        if stack.shape != (h, w, 6):
            raise ValueError(
                f"month {i} grid is {stack.shape}, labels are {(h, w)}"
            )
    cube = np.stack([np.asarray(s, np.float64) for s in stacks], axis=-1)
    feats = cube.reshape(h * w, 6, N_MONTHS).reshape(h * w, N_FEATURES)
    flat_labels = labels.reshape(-1)
    return [CropSample(feats[i], int(flat_labels[i])) for i in range(h * w)]


def class_weights(labels: np.ndarray) -> dict[int, float]:
    """Inverse-frequency weights w_k = N / (K * n_k) over present classes."""
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise ValueError("empty labels")
    values, counts = np.unique(labels, return_counts=True)
    n, k = labels.size, len(values)
    return {int(v): float(n / (k * c)) for v, c in zip(values, counts)}


def apply_class_weights(samples: list[CropSample]) -> list[CropSample]:
    weights = class_weights(np.array([s.label for s in samples]))
    return [CropSample(s.features, s.label, weights[s.label]) for s in samples]


# -- histogram gradient boosting -----------------------------------------


@dataclass
class _TreeNode:
    feature: int = -1
    threshold_bin: int = -1  # go left when code <= threshold_bin
    left: int = -1
    right: int = -1
    value: float = 0.0
    is_leaf: bool = True


@dataclass
class CropModel:
    classes: np.ndarray
    bin_edges: list[np.ndarray]
    trees: list[list[list[_TreeNode]]]  # [round][class] -> node list
    config: BoostConfig = field(default_factory=BoostConfig)


def _bin_codes(features: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    codes = np.empty(features.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        codes[:, j] = np.searchsorted(e, features[:, j], side="right")
    return codes


def _make_edges(features: np.ndarray, bins: int) -> list[np.ndarray]:
    edges = []
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    for j in range(features.shape[1]):
        edges.append(np.unique(np.quantile(features[:, j], qs)))
    return edges


def _grow_tree(codes: np.ndarray, g: np.ndarray, h: np.ndarray,
               n_bins: list[int], max_depth: int) -> list[_TreeNode]:
    nodes: list[_TreeNode] = []

    def build(rows: np.ndarray, depth: int) -> int:
        idx = len(nodes)
        nodes.append(_TreeNode())
        g_sum = float(g[rows].sum())
        h_sum = float(h[rows].sum())
        nodes[idx].value = -g_sum / (h_sum + _REG_LAMBDA)
        if depth >= max_depth or rows.size < 2:
            return idx
        parent_score = g_sum * g_sum / (h_sum + _REG_LAMBDA)
        best = (0.0, -1, -1)  # (gain, feature, threshold_bin)
        for j in range(codes.shape[1]):
            cj = codes[rows, j]
            hist_g = np.bincount(cj, weights=g[rows], minlength=n_bins[j])
            hist_h = np.bincount(cj, weights=h[rows], minlength=n_bins[j])
            gl = np.cumsum(hist_g)[:-1]
            hl = np.cumsum(hist_h)[:-1]
            gr = g_sum - gl
            hr = h_sum - hl
            ok = (hl > _MIN_CHILD_HESSIAN) & (hr > _MIN_CHILD_HESSIAN)
            if not ok.any():
                continue
            gains = np.where(
                ok,
                gl * gl / (hl + _REG_LAMBDA) + gr * gr / (hr + _REG_LAMBDA)
                - parent_score,
                -np.inf,
            )
            b = int(np.argmax(gains))  # first maximum: deterministic ties
            if gains[b] > best[0]:
                best = (float(gains[b]), j, b)
        gain, feat, thr = best
        if feat < 0 or gain <= _MIN_GAIN:
            return idx
        mask = codes[rows, feat] <= thr
        left_rows = rows[mask]
        right_rows = rows[~mask]
        if left_rows.size == 0 or right_rows.size == 0:
            return idx
        nodes[idx].is_leaf = False
        nodes[idx].feature = feat
        nodes[idx].threshold_bin = thr
        nodes[idx].left = build(left_rows, depth + 1)
        nodes[idx].right = build(right_rows, depth + 1)
        return idx

    build(np.arange(codes.shape[0]), 0)
    return nodes


def _tree_predict(nodes: list[_TreeNode], codes: np.ndarray) -> np.ndarray:
    out = np.zeros(codes.shape[0])
    stack = [(0, np.arange(codes.shape[0]))]
    while stack:
        idx, rows = stack.pop()
        node = nodes[idx]
        if node.is_leaf:
            out[rows] = node.value
            continue
        mask = codes[rows, node.feature] <= node.threshold_bin
        stack.append((node.left, rows[mask]))
        stack.append((node.right, rows[~mask]))
    return out


def _softmax(raw: np.ndarray) -> np.ndarray:
    shifted = raw - raw.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_classifier(samples: list[CropSample], config: BoostConfig | None = None
                     ) -> CropModel:
    """Fit the boosted ensemble; identical inputs (as a multiset) and seed
    give an identical model regardless of sample order."""
    config = config or BoostConfig()
    if not samples:
        raise ValueError("no training samples")
    features = np.stack([s.features for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    weights = np.array([s.weight for s in samples], dtype=np.float64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("training set must contain at least 2 classes")

    edges = _make_edges(features, config.histogram_bins)
    codes = _bin_codes(features, edges)
    n_bins = [e.size + 1 for e in edges]

    # canonical order: sort by (bin codes, label); ties are exact
    # duplicates with equal gradients, so accumulation order is pinned
    order = np.lexsort(tuple(codes[:, j] for j in range(codes.shape[1] - 1, -1, -1))
                       + (labels,))
    codes, labels, weights = codes[order], labels[order], weights[order]

    n, k = labels.size, classes.size
    y = np.zeros((n, k))
    for ki, c in enumerate(classes):
        y[labels == c, ki] = 1.0

    rng = np.random.default_rng(config.seed)
    raw = np.zeros((n, k))
    trees: list[list[list[_TreeNode]]] = []
    m = max(1, int(np.floor(config.subsample * n)))
    for _ in range(config.rounds):
        p = _softmax(raw)
        rows = np.sort(rng.choice(n, size=m, replace=False)) \
            if m < n else np.arange(n)
        round_trees = []
        for ki in range(k):
            g = (p[:, ki] - y[:, ki]) * weights
            h = np.maximum(p[:, ki] * (1.0 - p[:, ki]), 1e-12) * weights
            nodes = _grow_tree(codes[rows], g[rows], h[rows],
                               n_bins, config.max_depth)
            raw[:, ki] += config.learning_rate * _tree_predict(nodes, codes)
            round_trees.append(nodes)
        trees.append(round_trees)
    return CropModel(classes=classes, bin_edges=edges, trees=trees,
                     config=config)


def predict(model: CropModel, features: np.ndarray) -> np.ndarray:
    """Class label per row of an (N, 18) feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != N_FEATURES:
        raise ValueError(f"features must be (N, {N_FEATURES}), "
                         f"got {features.shape}")
    codes = _bin_codes(features, model.bin_edges)
    raw = np.zeros((features.shape[0], model.classes.size))
    for round_trees in model.trees:
        for ki, nodes in enumerate(round_trees):
            raw[:, ki] += model.config.learning_rate * _tree_predict(nodes, codes)
    return model.classes[np.argmax(raw, axis=1)]


# -- the comparison protocol ---------------------------------------------


@dataclass
class ComparisonRow:
    source: str
    class_name: str
    precision: float
    recall: float
    f1: float
    iou: float


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    def to_csv(self) -> str:
        lines = ["source,class,precision,recall,f1,iou"]
        for r in self.rows:
            lines.append(f"{r.source},{r.class_name},{r.precision:.6f},"
                         f"{r.recall:.6f},{r.f1:.6f},{r.iou:.6f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = ("source", "class", "precision", "recall", "f1", "iou")
        body = [(r.source, r.class_name, f"{r.precision:.4f}",
                 f"{r.recall:.4f}", f"{r.f1:.4f}", f"{r.iou:.4f}")
                for r in self.rows]
        widths = [max(len(row[i]) for row in [header] + body)
                  for i in range(len(header))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
        lines.extend(fmt.format(*row) for row in body)
        return "\n".join(lines) + "\n"

    def macro_f1(self, source: str) -> float:
        for r in self.rows:
            if r.source == source and r.class_name == "overall":
                return r.f1
        raise KeyError(f"no overall row for source {source!r}")


def source_report(stacks, labels: np.ndarray, train_idx: np.ndarray,
                  test_idx: np.ndarray, config: BoostConfig
                  ) -> ClassificationReport:
    """Train on one source's pixels and score the held-out pixels."""
    samples = extract_features(stacks, labels)
    train = apply_class_weights([samples[i] for i in train_idx])
    model = train_classifier(train, config)
    test_feats = np.stack([samples[i].features for i in test_idx])
    pred = predict(model, test_feats)
    true = np.array([samples[i].label for i in test_idx])
    cm = ConfusionMatrix.from_labels(true, pred, CROP_CLASS_NAMES)
    return classification_metrics(cm)


def resolution_comparison(runs, config: BoostConfig | None = None,
                          n_train: int = 2000, n_test: int = 1000,
                          seed: int = 0) -> ComparisonTable:
    """Per-source classification quality on a shared pixel split.

    `runs` is a list of (name, stacks, labels); every source must carry
    the same label grid so scores are comparable.  One classifier is
    trained per source.
    """
    config = config or BoostConfig()
    runs = list(runs)
    if not runs:
        raise ValueError("no input sources")
    ref_labels = np.asarray(runs[0][2])
    for name, _, labels in runs:
        if not np.array_equal(np.asarray(labels), ref_labels):
            raise ValueError(f"source {name!r} has a mismatched label grid")
    n_pixels = ref_labels.size
    if n_train + n_test > n_pixels:
        raise ValueError(
            f"{n_train}+{n_test} pixels requested, grid has {n_pixels}"
        )
    order = np.random.default_rng(seed).permutation(n_pixels)
    train_idx = order[:n_train]
    test_idx = order[n_train:n_train + n_test]

    rows = []
    for name, stacks, labels in runs:
        report = source_report(stacks, np.asarray(labels), train_idx,
                               test_idx, config)
        for ki, cname in enumerate(report.class_names):
            rows.append(ComparisonRow(name, cname,
                                      float(report.precision[ki]),
                                      float(report.recall[ki]),
                                      float(report.f1[ki]),
                                      float(report.iou[ki])))
        rows.append(ComparisonRow(name, "overall", report.macro_precision,
                                  report.macro_recall, report.macro_f1,
                                  report.macro_iou))
    return ComparisonTable(rows)
