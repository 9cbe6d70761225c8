"""Command line pipeline: keyframes, pooling, synthesis, training, evaluation.

Exit codes: 0 on success, 1 on usage errors (unknown flags, bad values),
2 on data errors (malformed files, label/hierarchy mismatches). All
outputs are deterministic functions of the inputs and seeds; nothing
embeds timestamps, so identical invocations produce identical bytes.
"""

import argparse
import csv
import json
import math
import struct
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .features import (
    FrameFeature,
    load_dataset,
    labels_array,
    pool_frame_features,
    save_dataset,
    split_dataset,
    view_matrix,
)
from .hierarchy import (
    HierarchyError,
    load_hierarchy,
    normalize_leaves,
    save_hierarchy,
    truncate_ancestry,
)
from .keyframes import KeyframeConfig, load_frames_dir, select_keyframes
from .metrics import evaluate, format_report_markdown, write_report_csv
from .network import load_checkpoint, predict_proba, save_checkpoint
from .synth import SynthSpec, generate, read_groundtruth, write_groundtruth
from .transfer import (
    FilterConfig,
    PhasePlan,
    TrainedModel,
    filter_topk,
    two_phase_train,
    write_filter_csv,
)
from .tree_prior import _HISTORY_FIELDS, HierPriorConfig, TrainConfig

_DATA_ERRORS = (HierarchyError, ValueError, OSError, FloatingPointError, struct.error)


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures exit 1 instead of 2."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Config resolution: flag > config file > builtin default


def _load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolver(args, config):
    def resolve(key, builtin):
        value = getattr(args, key, None)
        if value is not None:
            return value
        if key in config:
            return config[key]
        return builtin

    return resolve


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    return json.dumps(str(value))


def _write_run_config(path, mapping: dict) -> None:
    lines = [f"{key} = {_toml_value(val)}" for key, val in sorted(mapping.items())
             if val is not None]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_topk(raw):
    """'none' disables filtering; 'inf' keeps everything; else an integer."""
    if raw is None:
        return None
    text = str(raw).strip().lower()
    if text in ("none", "off"):
        return None
    if text == "inf":
        return math.inf
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"--topk must be an integer, 'inf', or 'none', got {raw!r}") from None


def _parse_lambdas(raw) -> dict:
    """'1,5,10' -> {0: 1.0, 1: 5.0, 2: 10.0}."""
    values = [float(part) for part in str(raw).split(",") if part.strip()]
    if not values:
        raise ValueError("--lambdas needs at least one value")
    return {i: v for i, v in enumerate(values)}


def _parse_batch(raw):
    if raw is None:
        return None
    text = str(raw).strip().lower()
    if text == "full":
        return None
    return int(text)


# ---------------------------------------------------------------------------
# Shared helpers


def _check_labels(samples, hierarchy, origin) -> None:
    bad = sorted({s.label for s in samples} - set(hierarchy.leaves))
    if bad:
        raise ValueError(f"{origin}: labels not in the hierarchy's leaves: {bad}")


def _score(model: TrainedModel, samples, truth=None):
    X = view_matrix(samples, model.view)
    preds = predict_proba(model.net, X).argmax(axis=1)
    h = model.hierarchy
    if truth is None:
        y = labels_array(samples, h._leaf_index)
    else:
        y = []
        for s in samples:
            if s.sample_id not in truth:
                raise ValueError(f"sample {s.sample_id!r} missing from the truth file")
            y.append(h.leaf_index(truth[s.sample_id]))
        y = np.array(y, dtype=np.int64)
    return evaluate(y, preds, h.num_leaves)


def _write_history(path, phase1, phase2) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("phase",) + _HISTORY_FIELDS)
        for phase, rows in ((1, phase1), (2, phase2)):
            for row in rows:
                writer.writerow(
                    [phase] + ["" if row[k] is None else row[k] for k in _HISTORY_FIELDS]
                )


def _training_hierarchy(hierarchy, prior_mode, hier_layers):
    """Returns (hierarchy for the prior, use_prior flag).

    prior 'flat' or a truncation depth of 0 disables the prior entirely;
    a depth of k >= 1 keeps each leaf's k nearest ancestor layers.
    """
    if prior_mode == "flat" or hier_layers == 0:
        return hierarchy, False
    if hier_layers is not None and hier_layers < hierarchy.max_layer:
        return truncate_ancestry(hierarchy, hier_layers), True
    return hierarchy, True


# ---------------------------------------------------------------------------
# Commands


def cmd_hierarchy_validate(args):
    h = load_hierarchy(args.file)
    print(
        f"ok: {len(h.nodes)} nodes, {h.num_leaves} leaves, max layer {h.max_layer}"
    )
    return 0


def cmd_hierarchy_normalize(args):
    h = load_hierarchy(args.file)
    labeled = set(args.labeled or [])
    normalized, renames = normalize_leaves(h, labeled)
    save_hierarchy(args.out, normalized)
    if args.rename_map:
        with open(args.rename_map, "w", encoding="utf-8") as fh:
            json.dump(renames, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"wrote {args.out}: {normalized.num_leaves} leaves ({len(renames)} spawned)")
    return 0


def cmd_keyframes(args):
    cfg = KeyframeConfig(
        bins_per_channel=args.bins,
        sigma_multiplier=args.sigma,
        candidate_cap=args.cap,
        keep_top=args.keep,
    )
    root = Path(args.frames_root)
    if not root.is_dir():
        raise ValueError(f"{root} is not a directory")
    videos = sorted(p for p in root.iterdir() if p.is_dir())
    if not videos:
        videos = [root]  # the root itself is a single video
    with open(args.out, "w", encoding="utf-8") as fh:
        for video_dir in videos:
            frames = load_frames_dir(video_dir)
            picks = select_keyframes(frames, cfg)
            fh.write(json.dumps({"video_id": video_dir.name, "keyframes": picks}) + "\n")
            print(f"{video_dir.name}: {len(frames)} frames -> {len(picks)} keyframes")
    return 0


def cmd_pool(args):
    frame_features = []
    with open(args.frame_features, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            missing = {"video_id", "label", "platform", "object", "scene"} - rec.keys()
            if missing:
                raise ValueError(
                    f"{args.frame_features}:{lineno}: missing fields {sorted(missing)}"
                )
            frame_features.append(
                FrameFeature(
                    video_id=str(rec["video_id"]),
                    label=str(rec["label"]),
                    platform=str(rec["platform"]),
                    object_feat=np.array(rec["object"], dtype=np.float64),
                    scene_feat=np.array(rec["scene"], dtype=np.float64),
                )
            )
    samples = pool_frame_features(frame_features)
    save_dataset(args.out, samples)
    print(f"pooled {len(frame_features)} frames into {len(samples)} samples")
    return 0


def cmd_synth(args):
    h = load_hierarchy(args.hierarchy)
    spec = SynthSpec(
        hierarchy=h,
        dim_object=args.dim_object,
        dim_scene=args.dim_scene,
        source_per_leaf=args.source_per_leaf,
        target_per_leaf=args.target_per_leaf,
        noise_rate=args.noise_rate,
        layer_scale=args.layer_scale,
        mean_decay=args.mean_decay,
        noise_sigma=args.noise_sigma,
        object_informativeness=args.object_informativeness,
        scene_informativeness=args.scene_informativeness,
        domain_shift=args.domain_shift,
        misspecified=bool(args.misspecified),
        seed=args.seed,
    )
    source, target, truth = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(out / "source.jsonl", source)
    if target:
        save_dataset(out / "target.jsonl", target)
    write_groundtruth(out / "groundtruth.jsonl", truth)
    print(f"wrote {len(source)} source and {len(target)} target samples to {out}")
    return 0


def _add_train_knobs(sub):
    sub.add_argument("--config", help="TOML file supplying defaults for these flags")
    sub.add_argument("--view", choices=("object", "scene", "fused"))
    sub.add_argument("--prior", choices=("hier", "flat"))
    sub.add_argument("--hier-layers", type=int, dest="hier_layers",
                     help="ancestor layers kept per leaf; 0 means no prior")
    sub.add_argument("--layers", type=int, help="trunk depth (0 for a linear head)")
    sub.add_argument("--units", type=int, help="trunk width")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--phase2-epochs", type=int, dest="phase2_epochs")
    sub.add_argument("--batch-size", dest="batch_size", help="integer or 'full'")
    sub.add_argument("--lr", type=float)
    sub.add_argument("--lr-decay", type=float, dest="lr_decay")
    sub.add_argument("--lr-decay-every", type=int, dest="lr_decay_every")
    sub.add_argument("--sum-data-term", action="store_true", default=None,
                     dest="sum_data_term")
    sub.add_argument("--topk", help="per-category keep count; 'inf' or 'none'")
    sub.add_argument("--filter-scope", choices=("per_category", "per_image"),
                     dest="filter_scope")
    sub.add_argument("--lambdas", help="comma-separated precisions per layer")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--split-seed", type=int, dest="split_seed")


def _resolve_training(args):
    """Returns a flat dict of every training knob after config resolution."""
    config = _load_config(args.config) if args.config else {}
    resolve = _resolver(args, config)
    knobs = {
        "view": resolve("view", "fused"),
        "prior": resolve("prior", "hier"),
        "hier_layers": resolve("hier_layers", None),
        "layers": resolve("layers", 1),
        "units": resolve("units", 64),
        "epochs": resolve("epochs", 30),
        "phase2_epochs": resolve("phase2_epochs", 10),
        "batch_size": _parse_batch(resolve("batch_size", 32)),
        "lr": resolve("lr", 0.01),
        "lr_decay": resolve("lr_decay", 0.5),
        "lr_decay_every": resolve("lr_decay_every", 10),
        "sum_data_term": bool(resolve("sum_data_term", False)),
        "topk": _parse_topk(resolve("topk", 100)),
        "filter_scope": resolve("filter_scope", "per_category"),
        "lambdas": resolve("lambdas", "1,5,10"),
        "seed": resolve("seed", 0),
    }
    knobs["split_seed"] = resolve("split_seed", knobs["seed"])
    if knobs["view"] not in ("object", "scene", "fused"):
        raise ValueError(f"unknown view {knobs['view']!r}")
    return knobs


def _build_plan(knobs) -> PhasePlan:
    common = dict(
        batch_size=knobs["batch_size"],
        lr=knobs["lr"],
        lr_decay=knobs["lr_decay"],
        lr_decay_every=knobs["lr_decay_every"],
        sum_data_term=knobs["sum_data_term"],
        seed=knobs["seed"],
        use_prior=knobs["use_prior"],
    )
    return PhasePlan(
        view=knobs["view"],
        fused_layers=knobs["layers"],
        fused_units=knobs["units"],
        phase1=TrainConfig(epochs=knobs["epochs"], **common),
        phase2=TrainConfig(epochs=knobs["phase2_epochs"], **common),
        init_seed=knobs["seed"],
    )


def cmd_train(args):
    knobs = _resolve_training(args)
    h = load_hierarchy(args.hierarchy)
    prior_h, use_prior = _training_hierarchy(h, knobs["prior"], knobs["hier_layers"])
    knobs["use_prior"] = use_prior
    prior_cfg = HierPriorConfig(lambdas=_parse_lambdas(knobs["lambdas"]))

    source = load_dataset(args.source)
    _check_labels(source, h, args.source)
    truth = read_groundtruth(args.truth) if args.truth else None

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.target:
        target = load_dataset(args.target)
        _check_labels(target, h, args.target)
        train_t, val_t, test_t = split_dataset(target, seed=knobs["split_seed"])
        phase1_source, phase2_pool = source, train_t
    else:
        train_s, val_t, test_t = split_dataset(source, seed=knobs["split_seed"])
        phase1_source, phase2_pool = train_s, []

    filter_cfg = None
    if knobs["topk"] is not None and args.target:
        filter_cfg = FilterConfig(top_k=knobs["topk"], scope=knobs["filter_scope"])

    plan = _build_plan(knobs)
    result = two_phase_train(
        phase1_source, phase2_pool, prior_h, plan,
        prior_cfg=prior_cfg, filter_cfg=filter_cfg, val_samples=val_t,
    )

    report = _score(result.model, test_t, truth)
    save_checkpoint(out / "model.ckpt", result.model.net)
    _write_history(out / "history.csv", result.phase1_history, result.phase2_history)
    if result.filter_report is not None:
        write_filter_csv(out / "filter_report.csv", result.filter_report)
    write_report_csv(out / "eval_report.csv", report, class_names=list(h.leaves))
    (out / "eval_report.md").write_text(
        format_report_markdown(report, class_names=list(h.leaves)), encoding="utf-8"
    )
    run_config = {k: v for k, v in knobs.items()}
    run_config["topk"] = "none" if knobs["topk"] is None else knobs["topk"]
    run_config["batch_size"] = "full" if knobs["batch_size"] is None else knobs["batch_size"]
    run_config["source"] = args.source
    run_config["target"] = args.target
    _write_run_config(out / "run_config.toml", run_config)
    print(
        f"test macro_f1={report.macro_f1:.6f} micro_f1={report.micro_f1:.6f} "
        f"({len(test_t)} samples)"
    )
    return 0


def cmd_filter(args):
    h = load_hierarchy(args.hierarchy)
    net = load_checkpoint(args.model)
    samples = load_dataset(args.dataset)
    _check_labels(samples, h, args.dataset)
    model = TrainedModel(net=net, view=args.view, hierarchy=h)
    cfg = FilterConfig(top_k=_parse_topk(args.topk) or math.inf, scope=args.scope)
    kept, report = filter_topk(model, samples, cfg)
    if not kept:
        raise ValueError("filtering dropped every sample; raise --topk")
    save_dataset(args.out, kept)
    if args.report:
        write_filter_csv(args.report, report)
    print(f"kept {report.kept} of {report.total} samples")
    return 0


def cmd_evaluate(args):
    h = load_hierarchy(args.hierarchy)
    net = load_checkpoint(args.model)
    samples = load_dataset(args.dataset)
    truth = read_groundtruth(args.truth) if args.truth else None
    if truth is None:
        _check_labels(samples, h, args.dataset)
    model = TrainedModel(net=net, view=args.view, hierarchy=h)
    report = _score(model, samples, truth)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_report_csv(out / "eval_report.csv", report, class_names=list(h.leaves))
        (out / "eval_report.md").write_text(
            format_report_markdown(report, class_names=list(h.leaves)), encoding="utf-8"
        )
    print(f"macro_f1={report.macro_f1:.6f} micro_f1={report.micro_f1:.6f}")
    return 0


_ABLATION_ROWS = (
    # (name, view, use hier prior, filter target)
    ("object", "object", False, False),
    ("object+filter", "object", False, True),
    ("scene", "scene", False, False),
    ("scene+filter", "scene", False, True),
    ("fused+filter", "fused", False, True),
    ("fused+filter+hier", "fused", True, True),
)


def cmd_ablation(args):
    knobs = _resolve_training(args)
    h = load_hierarchy(args.hierarchy)
    prior_h, prior_available = _training_hierarchy(h, knobs["prior"], knobs["hier_layers"])
    prior_cfg = HierPriorConfig(lambdas=_parse_lambdas(knobs["lambdas"]))
    source = load_dataset(args.source)
    target = load_dataset(args.target)
    _check_labels(source, h, args.source)
    _check_labels(target, h, args.target)
    truth = read_groundtruth(args.truth) if args.truth else None
    train_t, val_t, test_t = split_dataset(target, seed=knobs["split_seed"])
    topk = knobs["topk"] if knobs["topk"] is not None else 100

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for name, view, use_hier, use_filter in _ABLATION_ROWS:
        row_knobs = dict(knobs, view=view, use_prior=use_hier and prior_available)
        plan = _build_plan(row_knobs)
        filter_cfg = (
            FilterConfig(top_k=topk, scope=knobs["filter_scope"]) if use_filter else None
        )
        result = two_phase_train(
            source, train_t, prior_h, plan,
            prior_cfg=prior_cfg, filter_cfg=filter_cfg, val_samples=val_t,
        )
        report = _score(result.model, test_t, truth)
        results.append((name, view, use_hier, use_filter, report))
        print(
            f"{name}: macro_f1={report.macro_f1:.6f} micro_f1={report.micro_f1:.6f}"
        )

    with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["configuration", "view", "prior", "filter", "macro_f1", "micro_f1"])
        for name, view, use_hier, use_filter, report in results:
            writer.writerow(
                [
                    name,
                    view,
                    "hier" if use_hier else "flat",
                    "on" if use_filter else "off",
                    report.macro_f1,
                    report.micro_f1,
                ]
            )
    lines = [
        "| configuration | view | prior | filter | macro-F1 | micro-F1 |",
        "| --- | --- | --- | --- | ---: | ---: |",
    ]
    for name, view, use_hier, use_filter, report in results:
        lines.append(
            f"| {name} | {view} | {'hier' if use_hier else 'flat'} "
            f"| {'on' if use_filter else 'off'} "
            f"| {report.macro_f1:.4f} | {report.micro_f1:.4f} |"
        )
    (out / "ablation.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> _Parser:
    parser = _Parser(prog="hierfusion", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", metavar="command")

    p_hier = commands.add_parser("hierarchy", help="inspect or rewrite venue trees")
    hier_cmds = p_hier.add_subparsers(dest="subcommand", metavar="subcommand")
    p_val = hier_cmds.add_parser("validate", help="parse and summarize a hierarchy file")
    p_val.add_argument("file")
    p_val.set_defaults(func=cmd_hierarchy_validate)
    p_norm = hier_cmds.add_parser(
        "normalize", help="push labeled internal nodes down to spawned leaves"
    )
    p_norm.add_argument("file")
    p_norm.add_argument("--labeled", action="append", metavar="NODE",
                        help="internal node that carries training labels (repeatable)")
    p_norm.add_argument("--out", required=True)
    p_norm.add_argument("--rename-map", dest="rename_map",
                        help="where to write the old-to-new label JSON map")
    p_norm.set_defaults(func=cmd_hierarchy_normalize)

    p_kf = commands.add_parser("keyframes", help="select keyframes from frame folders")
    p_kf.add_argument("frames_root",
                      help="directory of per-video folders of numbered .ppm frames")
    p_kf.add_argument("--out", required=True, help="keyframes JSONL path")
    p_kf.add_argument("--bins", type=int, default=16)
    p_kf.add_argument("--sigma", type=float, default=3.0)
    p_kf.add_argument("--cap", type=int, default=20)
    p_kf.add_argument("--keep", type=int, default=10)
    p_kf.set_defaults(func=cmd_keyframes)

    p_pool = commands.add_parser("pool", help="mean-pool per-frame features per video")
    p_pool.add_argument("frame_features", help="JSONL of per-frame feature records")
    p_pool.add_argument("--out", required=True, help="pooled dataset JSONL path")
    p_pool.set_defaults(func=cmd_pool)

    p_synth = commands.add_parser("synth", help="generate synthetic two-platform data")
    p_synth.add_argument("--hierarchy", required=True)
    p_synth.add_argument("--out-dir", required=True, dest="out_dir")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--dim-object", type=int, default=32, dest="dim_object")
    p_synth.add_argument("--dim-scene", type=int, default=32, dest="dim_scene")
    p_synth.add_argument("--source-per-leaf", type=int, default=20, dest="source_per_leaf")
    p_synth.add_argument("--target-per-leaf", type=int, default=20, dest="target_per_leaf")
    p_synth.add_argument("--noise-rate", type=float, default=0.0, dest="noise_rate")
    p_synth.add_argument("--layer-scale", type=float, default=2.0, dest="layer_scale")
    p_synth.add_argument("--mean-decay", type=float, default=0.6, dest="mean_decay")
    p_synth.add_argument("--noise-sigma", type=float, default=1.0, dest="noise_sigma")
    p_synth.add_argument("--object-informativeness", type=float, default=1.0,
                         dest="object_informativeness")
    p_synth.add_argument("--scene-informativeness", type=float, default=1.0,
                         dest="scene_informativeness")
    p_synth.add_argument("--domain-shift", type=float, default=0.0, dest="domain_shift")
    p_synth.add_argument("--misspecified", action="store_true")
    p_synth.set_defaults(func=cmd_synth)

    p_train = commands.add_parser("train", help="two-phase training with the tree prior")
    p_train.add_argument("--hierarchy", required=True)
    p_train.add_argument("--source", required=True, help="clean-platform dataset JSONL")
    p_train.add_argument("--target", help="noisy-platform dataset JSONL")
    p_train.add_argument("--truth", help="groundtruth JSONL for test scoring")
    p_train.add_argument("--out-dir", required=True, dest="out_dir")
    _add_train_knobs(p_train)
    p_train.set_defaults(func=cmd_train)

    p_filter = commands.add_parser("filter", help="drop low-confidence noisy samples")
    p_filter.add_argument("--hierarchy", required=True)
    p_filter.add_argument("--model", required=True, help="checkpoint from train")
    p_filter.add_argument("--view", required=True, choices=("object", "scene", "fused"))
    p_filter.add_argument("--dataset", required=True)
    p_filter.add_argument("--topk", default="100")
    p_filter.add_argument("--scope", default="per_category",
                          choices=("per_category", "per_image"))
    p_filter.add_argument("--out", required=True, help="kept-samples JSONL path")
    p_filter.add_argument("--report", help="per-category keep/drop CSV path")
    p_filter.set_defaults(func=cmd_filter)

    p_eval = commands.add_parser("evaluate", help="score a checkpoint on a dataset")
    p_eval.add_argument("--hierarchy", required=True)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--view", required=True, choices=("object", "scene", "fused"))
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--truth", help="score against true labels instead of observed")
    p_eval.add_argument("--out-dir", dest="out_dir")
    p_eval.set_defaults(func=cmd_evaluate)

    p_abl = commands.add_parser("ablation", help="run the view/filter/prior grid")
    p_abl.add_argument("--hierarchy", required=True)
    p_abl.add_argument("--source", required=True)
    p_abl.add_argument("--target", required=True)
    p_abl.add_argument("--truth")
    p_abl.add_argument("--out-dir", required=True, dest="out_dir")
    _add_train_knobs(p_abl)
    p_abl.set_defaults(func=cmd_ablation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.error("a command is required")
    try:
        return args.func(args) or 0
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
