"""Tree-structured Gaussian prior over head rows and the alternating trainer.

Every hierarchy node n carries a weight vector beta_n. The root is pinned
at zero; each other node is drawn around its parent with layer-dependent
precision lambda indexed by the parent's layer:

    beta_n ~ N(beta_parent, lambda[layer(parent)]^{-1} I)

Leaf vectors ARE the classifier head rows (views into net.head), so the
prior couples venue categories that share ancestors. Training alternates
a gradient step on (trunk, leaf betas) with exact coordinate updates of
the internal betas, each of which minimizes the penalty given the rest.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ._kernels import beta_sweeps
from .hierarchy import VenueHierarchy, internal_nodes
from .metrics import evaluate
from .network import FusionNetwork, backward, forward, sgd_step


@dataclass(frozen=True)
class HierPriorConfig:
    """Layer-indexed precisions plus convergence knobs for the sweeps."""

    lambdas: dict = field(default_factory=lambda: {0: 1.0, 1: 5.0, 2: 10.0})
    sweep_tol: float = 1e-8
    max_sweeps: int = 100

    def __post_init__(self):
        if not self.lambdas:
            raise ValueError("need at least one precision value")
        for layer, lam in self.lambdas.items():
            if layer < 0:
                raise ValueError("precision layers must be >= 0")
            if lam <= 0:
                raise ValueError(f"precision for layer {layer} must be positive, got {lam}")
        if self.sweep_tol <= 0 or self.max_sweeps < 1:
            raise ValueError("sweep_tol must be positive and max_sweeps >= 1")

    def precision(self, layer: int) -> float:
        """Precision for edges below a node on this layer; clamps past the deepest."""
        if layer in self.lambdas:
            return float(self.lambdas[layer])
        return float(self.lambdas[max(self.lambdas)])


class HeadState:
    """Per-node beta vectors bound to a network's head.

    Leaf rows are views into net.head, so a head update moves them with no
    copying; internal rows are owned by this object; the root row is zero
    and never written.
    """

    def __init__(self, hierarchy: VenueHierarchy, net: FusionNetwork):
        if net.shape.num_leaves != hierarchy.num_leaves:
            raise ValueError(
                f"head has {net.shape.num_leaves} rows but hierarchy has "
                f"{hierarchy.num_leaves} leaves"
            )
        self.hierarchy = hierarchy
        self.head = net.head
        self.node_ids = sorted(hierarchy.nodes, key=lambda n: (hierarchy.layer[n], n))
        self.node_index = {n: i for i, n in enumerate(self.node_ids)}
        d = net.shape.head_dim
        self.betas = []
        for n in self.node_ids:
            if n == hierarchy.root:
                self.betas.append(np.zeros(d))
            elif hierarchy.is_leaf(n):
                self.betas.append(net.head[hierarchy.leaf_index(n)])
            else:
                self.betas.append(np.zeros(d))

        # Static structure arrays consumed by the sweep kernel.
        sweep_nodes = [n for n in internal_nodes(hierarchy) if n != hierarchy.root]
        self.sweep_order = np.array(
            [self.node_index[n] for n in sweep_nodes], dtype=np.int64
        )
        self.parent_arr = np.array(
            [
                self.node_index[hierarchy.parent[n]] if n != hierarchy.root else -1
                for n in self.node_ids
            ],
            dtype=np.int64,
        )
        ptr = [0]
        idx = []
        for n in self.node_ids:
            idx.extend(self.node_index[c] for c in hierarchy.children.get(n, ()))
            ptr.append(len(idx))
        self.child_ptr = np.array(ptr, dtype=np.int64)
        self.child_idx = np.array(idx, dtype=np.int64)

    def beta(self, node_id: str) -> np.ndarray:
        return self.betas[self.node_index[node_id]]

    def check_bound(self, net: FusionNetwork) -> None:
        """Assert the leaf rows still alias this network's head storage."""
        if self.head is not net.head or not np.shares_memory(
            self.betas[self.node_index[self.hierarchy.leaves[0]]], net.head
        ):
            raise ValueError("head state is not bound to this network's head array")

    def _lambda_arrays(self, cfg: HierPriorConfig):
        h = self.hierarchy
        lam_child = np.array([cfg.precision(h.layer[n]) for n in self.node_ids])
        lam_parent = np.array(
            [
                cfg.precision(h.layer[h.parent[n]]) if n != h.root else 0.0
                for n in self.node_ids
            ]
        )
        return lam_child, lam_parent


def make_head_state(hierarchy: VenueHierarchy, net: FusionNetwork) -> HeadState:
    return HeadState(hierarchy, net)


def prior_penalty(state: HeadState, cfg: HierPriorConfig) -> float:
    """Sum over non-root nodes of lambda[parent layer]/2 * ||beta_n - beta_parent||^2."""
    h = state.hierarchy
    total = 0.0
    for n in state.node_ids:
        if n == h.root:
            continue
        diff = state.beta(n) - state.beta(h.parent[n])
        total += cfg.precision(h.layer[h.parent[n]]) / 2.0 * float(diff @ diff)
    return total


def leaf_prior_gradient(state: HeadState, cfg: HierPriorConfig, leaf_id: str) -> np.ndarray:
    """d penalty / d beta_leaf = lambda[parent layer] * (beta_leaf - beta_parent)."""
    h = state.hierarchy
    parent = h.parent[leaf_id]
    return cfg.precision(h.layer[parent]) * (state.beta(leaf_id) - state.beta(parent))


def leaf_prior_grad_matrix(state: HeadState, cfg: HierPriorConfig) -> np.ndarray:
    """Penalty gradient for every head row, aligned with net.head."""
    h = state.hierarchy
    out = np.empty_like(state.head)
    for leaf in h.leaves:
        out[h.leaf_index(leaf)] = leaf_prior_gradient(state, cfg, leaf)
    return out


def update_internal(state: HeadState, cfg: HierPriorConfig) -> int:
    """Exact coordinate sweeps over internal non-root betas; returns sweeps used.

    Each node update solves its stationarity condition given its neighbors,
    so the penalty never increases. Sweeps run deepest layer first and stop
    when the largest single-coordinate change drops to sweep_tol or below.
    """
    if state.sweep_order.size == 0:
        return 0
    stacked = np.stack(state.betas)
    lam_child, lam_parent = state._lambda_arrays(cfg)
    sweeps = beta_sweeps(
        stacked,
        state.sweep_order,
        state.parent_arr,
        state.child_ptr,
        state.child_idx,
        lam_child,
        lam_parent,
        cfg.sweep_tol,
        cfg.max_sweeps,
    )
    for i in state.sweep_order:
        state.betas[i][:] = stacked[i]
    return int(sweeps)


def total_loss(
    net: FusionNetwork,
    state,
    cfg: HierPriorConfig,
    X: np.ndarray,
    y: np.ndarray,
    sum_data_term: bool = False,
):
    """(data_nll, penalty, total); penalty is 0 when no prior state is given."""
    _, log_probs, _ = forward(net, X)
    picked = log_probs[np.arange(len(y)), np.asarray(y, dtype=np.int64)]
    data = float(-picked.sum() if sum_data_term else -picked.mean())
    if state is None:
        return data, 0.0, data
    state.check_bound(net)
    pen = prior_penalty(state, cfg)
    return data, pen, data + pen


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32  # None for full batch
    lr: float = 0.01
    lr_decay: float = 0.5
    lr_decay_every: int = 10
    use_prior: bool = True
    alternate_per_batch: bool = False
    sum_data_term: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 or None for full batch")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.lr_decay_every < 1:
            raise ValueError("lr_decay_every must be >= 1")


@dataclass
class FitResult:
    net: FusionNetwork
    state: object  # HeadState or None
    history: list  # one dict per epoch
    step_losses: list  # (phase, total_loss) pairs when tracked


def fit(
    net: FusionNetwork,
    X: np.ndarray,
    y: np.ndarray,
    hierarchy: VenueHierarchy = None,
    prior_cfg: HierPriorConfig = None,
    train_cfg: TrainConfig = TrainConfig(),
    X_val=None,
    y_val=None,
    state: HeadState = None,
    track_step_losses: bool = False,
) -> FitResult:
    """Alternating MAP training; without a prior it is plain mini-batch SGD.

    With use_prior, step (i) descends the data term plus the leaf penalty
    gradient, step (ii) re-solves the internal betas exactly. Labels are
    leaf indices into the hierarchy's sorted leaf order. Passing ``state``
    continues with existing internal betas (second training phase).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on sample count")
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty dataset")
    if y.min() < 0 or y.max() >= net.shape.num_leaves:
        raise ValueError("labels out of range for the network head")

    use_prior = train_cfg.use_prior and hierarchy is not None
    if train_cfg.use_prior and hierarchy is None and state is None:
        raise ValueError("use_prior requires a hierarchy")
    if use_prior:
        if prior_cfg is None:
            prior_cfg = HierPriorConfig()
        if state is None:
            state = make_head_state(hierarchy, net)
        else:
            state.check_bound(net)
    else:
        state = None

    rng = np.random.default_rng(train_cfg.seed)
    m = X.shape[0]
    batch = m if train_cfg.batch_size is None else min(train_cfg.batch_size, m)
    history = []
    step_losses = []

    def record_step(phase):
        if track_step_losses:
            _, _, tot = total_loss(net, state, prior_cfg, X, y, train_cfg.sum_data_term)
            step_losses.append((phase, tot))

    if track_step_losses:
        record_step("init")

    for epoch in range(train_cfg.epochs):
        lr = train_cfg.lr * train_cfg.lr_decay ** (epoch // train_cfg.lr_decay_every)
        order = rng.permutation(m)
        for start in range(0, m, batch):
            take = order[start : start + batch]
            prior_grad = leaf_prior_grad_matrix(state, prior_cfg) if use_prior else None
            grads = backward(
                net, X[take], y[take], head_prior_grad=prior_grad,
                sum_data_term=train_cfg.sum_data_term,
            )
            sgd_step(net, grads, lr)
            record_step("sgd")
            if use_prior and train_cfg.alternate_per_batch:
                update_internal(state, prior_cfg)
                record_step("sweep")
        if use_prior and not train_cfg.alternate_per_batch:
            update_internal(state, prior_cfg)
            record_step("sweep")

        data, pen, tot = total_loss(net, state, prior_cfg, X, y, train_cfg.sum_data_term)
        row = {
            "epoch": epoch + 1,
            "data_loss": data,
            "prior_penalty": pen,
            "total_loss": tot,
            "macro_f1_val": None,
            "micro_f1_val": None,
        }
        if X_val is not None and len(X_val):
            _, _, probs = forward(net, X_val)
            report = evaluate(np.asarray(y_val), probs.argmax(axis=1), net.shape.num_leaves)
            row["macro_f1_val"] = report.macro_f1
            row["micro_f1_val"] = report.micro_f1
        history.append(row)

    return FitResult(net=net, state=state, history=history, step_losses=step_losses)


_HISTORY_FIELDS = ("epoch", "data_loss", "prior_penalty", "total_loss",
                   "macro_f1_val", "micro_f1_val")


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HISTORY_FIELDS)
        for row in history:
            writer.writerow(
                ["" if row[k] is None else row[k] for k in _HISTORY_FIELDS]
            )
