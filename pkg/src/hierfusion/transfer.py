"""Two-phase cross-platform training with noisy-label filtering.

Phase 1 trains on the cleanly labeled source platform. The phase-1 model
then scores every target sample by the probability it assigns to the
sample's OWN label; samples that score well are kept, the rest dropped as
likely noise. Phase 2 continues training on the kept target samples,
reusing the internal prior state so the tree keeps its learned structure.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .features import labels_array, view_matrix
from .hierarchy import VenueHierarchy
from .network import NetworkShape, init_network, predict_proba
from .tree_prior import FitResult, HierPriorConfig, TrainConfig, fit

FILTER_SCOPES = ("per_category", "per_image")


@dataclass(frozen=True)
class FilterConfig:
    top_k: float = 100  # may be math.inf to keep everything
    scope: str = "per_category"

    def __post_init__(self):
        if self.scope not in FILTER_SCOPES:
            raise ValueError(f"scope must be one of {FILTER_SCOPES}, got {self.scope!r}")
        if self.top_k != math.inf and (self.top_k < 1 or int(self.top_k) != self.top_k):
            raise ValueError("top_k must be a positive integer or inf")


@dataclass(frozen=True)
class FilterReport:
    """Per-category keep/drop counts from one filtering pass."""

    rows: tuple  # (category, total, kept, dropped), sorted by category

    @property
    def total(self) -> int:
        return sum(r[1] for r in self.rows)

    @property
    def kept(self) -> int:
        return sum(r[2] for r in self.rows)

    @property
    def dropped(self) -> int:
        return sum(r[3] for r in self.rows)


def write_filter_csv(path, report: FilterReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "total", "kept", "dropped"])
        for row in report.rows:
            writer.writerow(row)


@dataclass
class TrainedModel:
    net: object
    view: str
    hierarchy: VenueHierarchy
    state: object = None  # HeadState when trained with the prior


def prepare_xy(samples, hierarchy: VenueHierarchy, view: str):
    """(X, y) for training: stacked view vectors and leaf-index labels."""
    X = view_matrix(samples, view)
    y = labels_array(samples, hierarchy._leaf_index)
    return X, y


def predict_labels(model: TrainedModel, samples) -> list:
    """Predicted leaf ids for a list of samples."""
    X = view_matrix(samples, model.view)
    picks = predict_proba(model.net, X).argmax(axis=1)
    return [model.hierarchy.leaves[i] for i in picks]


def filter_topk(model: TrainedModel, samples, cfg: FilterConfig):
    """Split target samples into (kept, report) by own-label confidence.

    per_category: within each category, keep the top_k samples whose own
    label gets the highest probability (all of them if fewer). Ties break
    toward the lexicographically smaller sample id.

    per_image: keep a sample if its own label ranks within the top_k most
    probable categories of its predicted distribution.
    """
    if not samples:
        return [], FilterReport(rows=())
    h = model.hierarchy
    X = view_matrix(samples, model.view)
    y = labels_array(samples, h._leaf_index)
    probs = predict_proba(model.net, X)
    own = probs[np.arange(len(samples)), y]

    kept_ids = set()
    if cfg.scope == "per_category":
        by_cat: dict[str, list[int]] = {}
        for i, s in enumerate(samples):
            by_cat.setdefault(s.label, []).append(i)
        for cat, members in by_cat.items():
            members.sort(key=lambda i: (-own[i], samples[i].sample_id))
            quota = len(members) if cfg.top_k == math.inf else int(cfg.top_k)
            kept_ids.update(samples[i].sample_id for i in members[:quota])
    else:
        ranks = (-probs).argsort(axis=1, kind="stable")
        for i in range(len(samples)):
            cutoff = probs.shape[1] if cfg.top_k == math.inf else int(cfg.top_k)
            position = int(np.nonzero(ranks[i] == y[i])[0][0])
            if position < cutoff:
                kept_ids.add(samples[i].sample_id)

    kept = [s for s in samples if s.sample_id in kept_ids]
    totals: dict[str, int] = {}
    kept_counts: dict[str, int] = {}
    for s in samples:
        totals[s.label] = totals.get(s.label, 0) + 1
        if s.sample_id in kept_ids:
            kept_counts[s.label] = kept_counts.get(s.label, 0) + 1
    rows = tuple(
        (cat, totals[cat], kept_counts.get(cat, 0), totals[cat] - kept_counts.get(cat, 0))
        for cat in sorted(totals)
    )
    return kept, FilterReport(rows=rows)


@dataclass(frozen=True)
class PhasePlan:
    """Both phases' training configs plus the network architecture."""

    view: str = "fused"
    fused_layers: int = 1
    fused_units: int = 64
    phase1: TrainConfig = field(default_factory=TrainConfig)
    phase2: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10))
    init_seed: int = 0

    def __post_init__(self):
        if self.view not in ("object", "scene", "fused"):
            raise ValueError(f"unknown view {self.view!r}")


@dataclass
class TransferResult:
    model: TrainedModel
    filter_report: object  # FilterReport or None when filtering is off
    kept_target: list
    phase1_history: list
    phase2_history: list


def two_phase_train(
    source_samples,
    target_samples,
    hierarchy: VenueHierarchy,
    plan: PhasePlan,
    prior_cfg: HierPriorConfig = None,
    filter_cfg: FilterConfig = None,
    val_samples=None,
) -> TransferResult:
    """Train on source, filter target by phase-1 confidence, train on the rest.

    Filtering only happens when filter_cfg is given; phase 2 is skipped when
    its epoch count is 0 or nothing survives the filter.
    """
    if not source_samples:
        raise ValueError("phase 1 needs source samples")
    X_s, y_s = prepare_xy(source_samples, hierarchy, plan.view)
    shape = NetworkShape(
        input_dim=X_s.shape[1],
        fused_layers=plan.fused_layers,
        fused_units=plan.fused_units,
        num_leaves=hierarchy.num_leaves,
    )
    net = init_network(shape, seed=plan.init_seed)

    X_val = y_val = None
    if val_samples:
        X_val, y_val = prepare_xy(val_samples, hierarchy, plan.view)

    result1 = fit(
        net, X_s, y_s,
        hierarchy=hierarchy, prior_cfg=prior_cfg, train_cfg=plan.phase1,
        X_val=X_val, y_val=y_val,
    )
    model = TrainedModel(net=net, view=plan.view, hierarchy=hierarchy, state=result1.state)

    kept = list(target_samples)
    report = None
    if filter_cfg is not None and target_samples:
        kept, report = filter_topk(model, target_samples, filter_cfg)

    history2 = []
    if plan.phase2.epochs > 0 and kept:
        X_t, y_t = prepare_xy(kept, hierarchy, plan.view)
        result2 = fit(
            net, X_t, y_t,
            hierarchy=hierarchy, prior_cfg=prior_cfg, train_cfg=plan.phase2,
            X_val=X_val, y_val=y_val, state=result1.state,
        )
        model.state = result2.state
        history2 = result2.history

    return TransferResult(
        model=model,
        filter_report=report,
        kept_target=kept,
        phase1_history=result1.history,
        phase2_history=history2,
    )
