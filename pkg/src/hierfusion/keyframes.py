"""Keyframe selection from frame sequences via color-histogram jumps.

Consecutive frames are compared by the L1 distance between per-channel
RGB histograms. A frame is a keyframe candidate when its distance to the
previous frame exceeds mean + sigma_multiplier * std of all consecutive
distances in the video; an overfull candidate set is cut down to the
frames with the largest distances.
"""

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import rgb_counts


@dataclass(frozen=True)
class KeyframeConfig:
    bins_per_channel: int = 16
    sigma_multiplier: float = 3.0
    candidate_cap: int = 20
    keep_top: int = 10

    def __post_init__(self):
        if self.bins_per_channel < 1 or self.bins_per_channel > 256:
            raise ValueError("bins_per_channel must be in 1..256")
        if self.sigma_multiplier <= 0:
            raise ValueError("sigma_multiplier must be positive")
        if self.keep_top > self.candidate_cap:
            raise ValueError("keep_top must not exceed candidate_cap")
        if self.keep_top < 1:
            raise ValueError("keep_top must be >= 1")


def rgb_histogram(frame: np.ndarray, cfg: KeyframeConfig = KeyframeConfig()) -> np.ndarray:
    """Normalized per-channel histogram, shape (3, bins); each row sums to 1.

    ``frame`` is an (H, W, 3) uint8 raster; bins are equal width over 0..255.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) raster, got shape {frame.shape}")
    if frame.shape[0] < 1 or frame.shape[1] < 1:
        raise ValueError("empty raster")
    if frame.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {frame.dtype}")
    counts = rgb_counts(frame, cfg.bins_per_channel)
    return counts / (frame.shape[0] * frame.shape[1])


def l1_distance(h1: np.ndarray, h2: np.ndarray) -> float:
    """Sum of absolute bin differences over all channels."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise ValueError(f"histogram shape mismatch: {h1.shape} vs {h2.shape}")
    return float(np.abs(h1 - h2).sum())


def consecutive_distances(frames, cfg: KeyframeConfig = KeyframeConfig()) -> np.ndarray:
    """L1 distances between each frame's histogram and its predecessor's.

    Entry i-1 corresponds to frame index i (distances exist for i >= 1).
    """
    hists = [rgb_histogram(f, cfg) for f in frames]
    if len(hists) < 2:
        return np.zeros(0)
    stacked = np.stack(hists)
    return np.abs(stacked[1:] - stacked[:-1]).sum(axis=(1, 2))


def select_keyframes(frames, cfg: KeyframeConfig = KeyframeConfig()) -> list[int]:
    """Indices of selected keyframes, ascending.

    Candidates are frames whose distance to the previous frame exceeds
    mean + sigma_multiplier * std (population std over the distances).
    More than ``candidate_cap`` candidates are reduced to the ``keep_top``
    largest distances, ties broken toward earlier frames. A video with no
    candidate at all (constant or single-frame input) falls back to its
    middle frame so that pooling always has at least one frame.
    """
    n = len(frames)
    if n < 1:
        raise ValueError("need at least one frame")
    dists = consecutive_distances(frames, cfg)
    if dists.size == 0:
        return [n // 2]
    mu = float(dists.mean())
    sigma = float(dists.std())
    threshold = mu + cfg.sigma_multiplier * sigma
    candidates = [i + 1 for i in range(dists.size) if dists[i] > threshold]
    if not candidates:
        return [n // 2]
    if len(candidates) > cfg.candidate_cap:
        candidates = sorted(candidates, key=lambda i: (-dists[i - 1], i))[: cfg.keep_top]
    return sorted(candidates)


# ---------------------------------------------------------------------------
# Frame I/O: binary PPM (P6), one numbered file per frame


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM file into an (H, W, 3) uint8 array."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0

    def next_field(pos):
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] not in (0x0A, 0x0D):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        return data[start:pos], pos

    for _ in range(4):
        token, pos = next_field(pos)
        fields.append(token)
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = height * width * 3
    if len(data) - pos < need:
        raise ValueError(f"{path}: truncated raster")
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return raster.reshape(height, width, 3).copy()


def write_ppm(path, frame: np.ndarray) -> None:
    frame = np.ascontiguousarray(frame, dtype=np.uint8)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) raster, got shape {frame.shape}")
    h, w = frame.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(frame.tobytes())


_NUM_RE = re.compile(r"(\d+)")


def load_frames_dir(directory) -> list[np.ndarray]:
    """Load all .ppm files in a directory, ordered by the number in the name."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.ppm"), key=_frame_sort_key)
    if not paths:
        raise ValueError(f"no .ppm frames in {directory}")
    return [read_ppm(p) for p in paths]


def _frame_sort_key(path: Path):
    m = _NUM_RE.search(path.stem)
    return (int(m.group(1)) if m else -1, path.name)
