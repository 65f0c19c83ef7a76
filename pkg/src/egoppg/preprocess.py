"""Model inputs: resized frames, standardized differences, labels, clips, augmentation."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .ingest import SyncedRecording, motion_magnitude, standardized_imu, to_grayscale
from .signal_core import Signal1D

log = logging.getLogger(__name__)

CLIP_T = 128
MODEL_H = 48
MODEL_W = 128
STD_EPS = 1e-6
FPS_MODES = ("30", "down10", "down10_up30")


class StaticVideoError(ValueError):
    pass


def to_model_frames(frames: np.ndarray, h: int = MODEL_H, w: int = MODEL_W,
                    chunk: int = 1024) -> np.ndarray:
    """Grayscale frames resized to ``(h, w)`` with antialiased bilinear interpolation."""
    frames = to_grayscale(np.asarray(frames))
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3 or min(frames.shape) == 0:
        raise ValueError(f"cannot resize frames of shape {frames.shape}")
    if frames.shape[1:] == (h, w):
        return frames.astype(np.float32, copy=True)
    out = np.empty((frames.shape[0], h, w), dtype=np.float32)
    for s in range(0, frames.shape[0], chunk):
        x = torch.from_numpy(np.ascontiguousarray(frames[s:s + chunk], dtype=np.float32))[:, None]
        y = F.interpolate(x, size=(h, w), mode="bilinear", align_corners=False, antialias=True)
        out[s:s + chunk] = y[:, 0].numpy()
    return out


def difference_std(frames: np.ndarray, chunk: int = 2048) -> float:
    """Pooled standard deviation of all consecutive frame differences."""
    n = frames.shape[0] - 1
    if n < 1:
        raise ValueError("need at least two frames")
    total = total_sq = 0.0
    count = 0
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        d = frames[s + 1:e + 1].astype(np.float64) - frames[s:e]
        total += d.sum()
        total_sq += (d ** 2).sum()
        count += d.size
    mean = total / count
    return float(math.sqrt(max(total_sq / count - mean ** 2, 0.0)))


def standardized_frame_differences(frames: np.ndarray, recording_std: float,
                                   eps: float = STD_EPS) -> np.ndarray:
    """``(f[t+1] - f[t]) / recording_std`` shaped ``(N-1, 1, h, w)``."""
    if frames.shape[0] < 2:
        raise ValueError("need at least two frames")
    if recording_std < eps:
        raise StaticVideoError(f"static video: difference STD {recording_std:.3g} < {eps}")
    d = np.diff(frames.astype(np.float32), axis=0) / np.float32(recording_std)
    return d[:, None]


def standardize_labels(ppg: Signal1D, frame_times: np.ndarray, eps: float = STD_EPS) -> np.ndarray:
    """First differences of the PPG sampled at the frame times, scaled to unit STD.

    Differences with zero spread (a linear ramp) are scaled by their RMS instead.
    """
    p = ppg.resample_at(np.asarray(frame_times, dtype=np.float64))
    d = np.diff(p)
    sd = d.std()
    if sd < eps:
        sd = float(np.sqrt(np.mean(d ** 2))) if d.size else 0.0
    if sd < eps:
        raise StaticVideoError("degenerate PPG: flat signal")
    return d / sd


@dataclass
class ClipMeta:
    participant: str
    activity: str
    window_start_s: float
    segment: int = 0
    index: int = 0
    fps: float = 30.0
    frame_start: int = 0
    recording: str = ""


@dataclass
class Clip:
    x: np.ndarray    # (T, 1, h, w)
    imu: np.ndarray  # (T, 1)
    y: np.ndarray    # (T,)
    meta: ClipMeta


@dataclass
class ClipBatch:
    x: torch.Tensor    # (B, T, 1, h, w)
    imu: torch.Tensor  # (B, T, 1)
    y: torch.Tensor    # (B, T)
    meta: List[ClipMeta] = field(default_factory=list)

    @classmethod
    def collate(cls, clips: Sequence[Clip]) -> "ClipBatch":
        return cls(torch.from_numpy(np.stack([c.x for c in clips]).astype(np.float32)),
                   torch.from_numpy(np.stack([c.imu for c in clips]).astype(np.float32)),
                   torch.from_numpy(np.stack([c.y for c in clips]).astype(np.float32)),
                   [c.meta for c in clips])


def window_clips(rec: SyncedRecording, T: int = CLIP_T, h: int = MODEL_H, w: int = MODEL_W,
                 include_excluded: bool = False, recording: Optional[str] = None) -> List[Clip]:
    """Non-overlapping ``T``-frame clips inside each (non-excluded) activity segment.

    The frame difference leaving a segment is zero-padded so that no clip
    mixes two activities; trailing remainders shorter than ``T`` are dropped.
    ``recording`` tags clips of distinct recordings of one participant.
    """
    recording = str(rec.meta.get("recording", "")) if recording is None else recording
    frames = to_model_frames(rec.frames, h, w)
    diffs = standardized_frame_differences(frames, difference_std(frames))
    labels = standardize_labels(rec.ppg, rec.frame_times).astype(np.float32)
    imu = standardized_imu(rec).astype(np.float32)
    clips: List[Clip] = []
    for si, seg in enumerate(rec.activities):
        if seg.excluded and not include_excluded:
            continue
        i0, i1 = rec.segment_frames(seg)
        n = i1 - i0
        if n < T:
            log.warning("segment %s of %s has %d < %d frames; no clips", seg.label, rec.participant, n, T)
            continue
        for k in range(n // T):
            a = i0 + k * T
            b = a + T
            x = np.zeros((T, 1, h, w), dtype=np.float32)
            y = np.zeros(T, dtype=np.float32)
            last = min(b, i1 - 1, diffs.shape[0])  # diff j needs frame j+1 inside the segment
            x[: last - a] = diffs[a:last]
            y[: last - a] = labels[a:last]
            meta = ClipMeta(rec.participant, seg.label, float(rec.frame_times[a]), si, k, rec.fps, a, recording)
            clips.append(Clip(x, imu[a:b, None].copy(), y, meta))
    return clips


# --- augmentation ---------------------------------------------------------------

def rotate_frames(x: torch.Tensor, degrees: float) -> torch.Tensor:
    """Rotate every frame of ``(T, C, h, w)`` by the same angle about the centre."""
    h, w = x.shape[-2:]
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    theta = torch.tensor([[c, -s * h / w, 0.0], [s * w / h, c, 0.0]], dtype=x.dtype)
    grid = F.affine_grid(theta.expand(x.shape[0], 2, 3), list(x.shape), align_corners=False)
    return F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros", align_corners=False)


def crop_horizontal(x: torch.Tensor, x0: int, width: int) -> torch.Tensor:
    h, w = x.shape[-2:]
    part = x[..., x0:x0 + width]
    return F.interpolate(part, size=(h, w), mode="bilinear", align_corners=False)


def hflip(x):
    return torch.flip(x, dims=[-1]) if isinstance(x, torch.Tensor) else x[..., ::-1].copy()


def vflip(x):
    return torch.flip(x, dims=[-2]) if isinstance(x, torch.Tensor) else x[..., ::-1, :].copy()


def augment(clip: Clip, rng: np.random.Generator, max_rotation: float = 20.0,
            min_crop: float = 0.5, p_flip: float = 0.5) -> Clip:
    """Random rotation, horizontal crop and flips shared by all frames of the clip."""
    x = torch.from_numpy(np.ascontiguousarray(clip.x, dtype=np.float32))
    w = x.shape[-1]
    angle = rng.uniform(-max_rotation, max_rotation)
    x = rotate_frames(x, angle)
    width = int(round(w * rng.uniform(min_crop, 1.0)))
    width = min(max(width, int(math.ceil(min_crop * w))), w)
    x0 = int(rng.integers(0, w - width + 1))
    x = crop_horizontal(x, x0, width)
    if rng.random() < p_flip:
        x = hflip(x)
    if rng.random() < p_flip:
        x = vflip(x)
    return replace(clip, x=x.numpy())


# --- frame-rate experiments --------------------------------------------------------

def _interp_up3(a: np.ndarray) -> np.ndarray:
    """Insert two linear interpolants between consecutive entries along axis 0."""
    m = a.shape[0]
    if m < 2:
        return a.copy()
    out = np.empty((3 * (m - 1) + 1,) + a.shape[1:], dtype=a.dtype)
    out[0::3] = a
    lo, hi = a[:-1], a[1:]
    out[1::3] = lo + (hi - lo) / 3.0
    out[2::3] = lo + 2.0 * (hi - lo) / 3.0
    return out


def resample_fps(rec: SyncedRecording, mode: str) -> SyncedRecording:
    """Frame-rate experiments on a 30 fps recording.

    ``down10`` keeps every third frame; ``down10_up30`` then linearly
    interpolates two frames between consecutive kept frames.
    """
    if mode in ("30", None):
        return rec
    if mode not in FPS_MODES:
        raise ValueError(f"unknown fps mode {mode!r}")
    if abs(rec.fps - 30.0) > 1e-6:
        raise ValueError(f"fps resampling expects a 30 fps source, got {rec.fps}")
    frames = rec.frames[::3]
    times = rec.frame_times[::3]
    fps = rec.fps / 3.0
    if mode == "down10_up30":
        frames = _interp_up3(frames.astype(np.float32))
        times = _interp_up3(times)
        fps = rec.fps
    return replace(rec, frames=frames, frame_times=times, fps=fps,
                   imu_mag=motion_magnitude(rec.imu, times))


# --- clip cache ---------------------------------------------------------------------

INDEX_FIELDS = ("participant", "activity", "window_start_s", "path", "segment", "index", "fps",
                "frame_start", "recording")


def save_clips(clips: Sequence[Clip], out_dir) -> Path:
    """Write clips as ``.npz`` tensors plus ``index.csv``."""
    out = Path(out_dir)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    index = out / "index.csv"
    with open(index, "w", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=INDEX_FIELDS)
        wr.writeheader()
        for c in clips:
            m = c.meta
            tag = f"{m.participant}_{m.recording}" if m.recording else m.participant
            rel = f"clips/{tag}_{m.segment:02d}_{m.activity}_{m.index:04d}.npz"
            np.savez(out / rel, x=c.x.astype(np.float32), imu=c.imu, y=c.y)
            wr.writerow({"participant": m.participant, "activity": m.activity,
                         "window_start_s": repr(float(m.window_start_s)), "path": rel,
                         "segment": m.segment, "index": m.index, "fps": m.fps,
                         "frame_start": m.frame_start, "recording": m.recording})
    return index


def load_clips(index_path, participants: Optional[Sequence[str]] = None) -> List[Clip]:
    index_path = Path(index_path)
    if index_path.is_dir():
        index_path = index_path / "index.csv"
    keep = None if participants is None else set(participants)
    clips = []
    with open(index_path, newline="") as f:
        for r in csv.DictReader(f):
            if keep is not None and r["participant"] not in keep:
                continue
            z = np.load(index_path.parent / r["path"])
            meta = ClipMeta(r["participant"], r["activity"], float(r["window_start_s"]),
                            int(r["segment"]), int(r["index"]), float(r["fps"]), int(r["frame_start"]),
                            r.get("recording", ""))
            clips.append(Clip(z["x"], z["imu"], z["y"], meta))
    return clips
