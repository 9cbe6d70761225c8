"""Multi-view sample representation, mean pooling, and dataset I/O.

A sample is one video reduced to a fixed-size vector per view: per-frame
feature vectors from the selected keyframes are mean-pooled within each
view. Datasets are stored as JSON Lines with a header line that fixes
the per-view dimensions; floats survive the round trip exactly.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VIEWS = ("object", "scene", "fused")


@dataclass(frozen=True)
class FrameFeature:
    """Feature vectors extracted from a single keyframe of a video."""

    video_id: str
    label: str
    platform: str
    object_feat: np.ndarray
    scene_feat: np.ndarray


@dataclass(frozen=True)
class MultiViewSample:
    """A video pooled down to one vector per view."""

    sample_id: str
    label: str
    platform: str
    object_feat: np.ndarray
    scene_feat: np.ndarray
    n_frames: int = 1

    def view(self, view: str) -> np.ndarray:
        if view == "object":
            return self.object_feat
        if view == "scene":
            return self.scene_feat
        if view == "fused":
            return np.concatenate([self.object_feat, self.scene_feat])
        raise ValueError(f"unknown view {view!r}, expected one of {VIEWS}")


def mean_pool(frame_vectors: np.ndarray) -> np.ndarray:
    """Mean over the frame axis of an (n_frames, d) feature stack."""
    frame_vectors = np.asarray(frame_vectors, dtype=np.float64)
    if frame_vectors.ndim != 2:
        raise ValueError(f"expected (n_frames, d) stack, got shape {frame_vectors.shape}")
    if frame_vectors.shape[0] < 1:
        raise ValueError("cannot pool zero frames")
    return frame_vectors.mean(axis=0)


def pool_frame_features(frame_features) -> list[MultiViewSample]:
    """Group per-frame features by video and mean-pool each view.

    Frames of one video must agree on label and platform; output order
    follows first appearance of each video id.
    """
    by_video: dict[str, list[FrameFeature]] = {}
    for ff in frame_features:
        by_video.setdefault(ff.video_id, []).append(ff)
    samples = []
    for video_id, group in by_video.items():
        labels = {ff.label for ff in group}
        platforms = {ff.platform for ff in group}
        if len(labels) > 1 or len(platforms) > 1:
            raise ValueError(f"video {video_id!r} has conflicting label or platform")
        samples.append(
            MultiViewSample(
                sample_id=video_id,
                label=group[0].label,
                platform=group[0].platform,
                object_feat=mean_pool(np.stack([ff.object_feat for ff in group])),
                scene_feat=mean_pool(np.stack([ff.scene_feat for ff in group])),
                n_frames=len(group),
            )
        )
    return samples


def view_matrix(samples, view: str) -> np.ndarray:
    """Stack one view of every sample into an (M, d) matrix."""
    if not samples:
        raise ValueError("empty sample list")
    return np.stack([s.view(view) for s in samples])


def labels_array(samples, index) -> np.ndarray:
    """Map sample labels through an index (label -> int) into an int64 array."""
    try:
        return np.array([index[s.label] for s in samples], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"sample label {exc.args[0]!r} is not an indexed category") from None


def split_dataset(samples, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle and split into (train, val, test) by the given fractions."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three values summing to 1")
    if min(fractions) < 0:
        raise ValueError("fractions must be non-negative")
    m = len(samples)
    order = np.random.default_rng(seed).permutation(m)
    cut1 = int(fractions[0] * m)
    cut2 = int((fractions[0] + fractions[1]) * m)
    train = [samples[i] for i in order[:cut1]]
    val = [samples[i] for i in order[cut1:cut2]]
    test = [samples[i] for i in order[cut2:]]
    return train, val, test


# ---------------------------------------------------------------------------
# JSON Lines persistence


def save_dataset(path, samples) -> None:
    """Write samples as JSONL: a dimension header line, then one record each."""
    if not samples:
        raise ValueError("refusing to save an empty dataset")
    dim_object = samples[0].object_feat.shape[0]
    dim_scene = samples[0].scene_feat.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim_object": int(dim_object), "dim_scene": int(dim_scene)}) + "\n")
        for s in samples:
            record = {
                "id": s.sample_id,
                "label": s.label,
                "platform": s.platform,
                "object": [float(x) for x in s.object_feat],
                "scene": [float(x) for x in s.scene_feat],
                "n_frames": int(s.n_frames),
            }
            fh.write(json.dumps(record) + "\n")


def load_dataset(path) -> list[MultiViewSample]:
    """Read a dataset written by save_dataset, validating shapes per record."""
    path = Path(path)
    samples = []
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ValueError(f"{path}: empty dataset file")
        header = json.loads(header_line)
        if "dim_object" not in header or "dim_scene" not in header:
            raise ValueError(f"{path}: first line must declare dim_object and dim_scene")
        dim_object, dim_scene = int(header["dim_object"]), int(header["dim_scene"])
        seen: set[str] = set()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            rec = json.loads(line)
            missing = {"id", "label", "platform", "object", "scene"} - rec.keys()
            if missing:
                raise ValueError(f"{path}:{lineno}: record missing fields {sorted(missing)}")
            obj = np.array(rec["object"], dtype=np.float64)
            scn = np.array(rec["scene"], dtype=np.float64)
            if obj.shape != (dim_object,):
                raise ValueError(
                    f"{path}:{lineno}: object vector has length {obj.shape}, expected {dim_object}"
                )
            if scn.shape != (dim_scene,):
                raise ValueError(
                    f"{path}:{lineno}: scene vector has length {scn.shape}, expected {dim_scene}"
                )
            if rec["id"] in seen:
                raise ValueError(f"{path}:{lineno}: duplicate sample id {rec['id']!r}")
            seen.add(rec["id"])
            samples.append(
                MultiViewSample(
                    sample_id=str(rec["id"]),
                    label=str(rec["label"]),
                    platform=str(rec["platform"]),
                    object_feat=obj,
                    scene_feat=scn,
                    n_frames=int(rec.get("n_frames", 1)),
                )
            )
    if not samples:
        raise ValueError(f"{path}: dataset has a header but no samples")
    return samples


def view_dim(samples, view: str) -> int:
    return samples[0].view(view).shape[0]
