"""Loading, IMU-based synchronization, ECG validation and activity labels."""
from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signal_core import (
    DEFAULT_BAND,
    HRSeries,
    Signal1D,
    align_series,
    bandpass_butterworth,
    detect_peaks,
    hr_from_bvp,
    hr_from_peaks,
)

log = logging.getLogger(__name__)

ACTIVITIES = ("video", "office", "kitchen", "dancing", "bike", "walking")
VIDEO_FPS = (10.0, 30.0)
ARIA_EYE_RESOLUTION = (240, 320)  # (h, w) per eye


class SyncError(RuntimeError):
    pass


@dataclass
class ImuTrace:
    """3-axis accelerometer samples on one device clock."""

    samples: np.ndarray  # (n, 3)
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3 or self.samples.shape[0] < 2:
            raise ValueError(f"IMU samples must be (n>=2, 3), got {self.samples.shape}")
        if not self.fs > 0:
            raise ValueError("IMU fs must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.shape[0]) / self.fs

    def axis(self, i: int) -> Signal1D:
        return Signal1D(self.samples[:, i], self.fs, self.t0)


@dataclass
class Video:
    frames: np.ndarray  # (N, H, W) grayscale
    fps: float
    t0: float = 0.0
    device: str = "generic"

    def __post_init__(self):
        if self.frames.ndim == 4:
            self.frames = to_grayscale(self.frames)
        if self.frames.ndim != 3 or self.frames.shape[0] < 1:
            raise ValueError(f"video frames must be (N, H, W), got {self.frames.shape}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.frames.shape[0]) / self.fps


@dataclass
class ActivitySegment:
    label: str
    start_s: float
    end_s: float
    excluded: bool = False
    exclusion_mae_bpm: Optional[float] = None

    def __post_init__(self):
        if self.label not in ACTIVITIES:
            raise ValueError(f"unknown activity {self.label!r}")
        if not self.start_s < self.end_s:
            raise ValueError(f"segment {self.label} has start >= end")


@dataclass
class RawRecording:
    eye_video: Video
    imu: ImuTrace
    ppg_nose: Signal1D
    ecg_chest: Signal1D
    manifest: dict = field(default_factory=dict)
    device_imus: Dict[str, ImuTrace] = field(default_factory=dict)
    activities: List[ActivitySegment] = field(default_factory=list)

    def __post_init__(self):
        if float(self.eye_video.fps) not in VIDEO_FPS:
            raise ValueError(f"video fps must be one of {VIDEO_FPS}, got {self.eye_video.fps}")
        if self.eye_video.device == "aria" and self.eye_video.frames.shape[1:] != ARIA_EYE_RESOLUTION:
            raise ValueError("reference-device eye video must be 320x240 per eye")
        check_segments(self.activities)

    @property
    def participant(self) -> str:
        return str(self.manifest.get("participant", "unknown"))


@dataclass
class SyncedRecording:
    participant: str
    frames: np.ndarray
    fps: float
    frame_times: np.ndarray
    imu: ImuTrace
    imu_mag: Signal1D
    ppg: Signal1D
    ecg: Signal1D
    activities: List[ActivitySegment] = field(default_factory=list)
    offsets_s: Dict[str, float] = field(default_factory=dict)
    clock_scale: Dict[str, float] = field(default_factory=dict)
    residual_s: Dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def segment_frames(self, seg: ActivitySegment) -> Tuple[int, int]:
        """Frame index range ``[i0, i1)`` whose timestamps fall in the segment."""
        i0 = int(np.searchsorted(self.frame_times, seg.start_s - 1e-9, side="left"))
        i1 = int(np.searchsorted(self.frame_times, seg.end_s - 1e-9, side="left"))
        return i0, i1


def check_segments(segments: Sequence[ActivitySegment]) -> None:
    ordered = sorted(segments, key=lambda s: s.start_s)
    for a, b in zip(ordered, ordered[1:]):
        if b.start_s < a.end_s - 1e-9:
            raise ValueError(f"activity segments overlap: {a.label} and {b.label}")


def to_grayscale(frames: np.ndarray) -> np.ndarray:
    frames = np.asarray(frames)
    if frames.ndim == 4 and frames.shape[-1] == 3:
        w = np.array([0.299, 0.587, 0.114], dtype=np.float32)
        return (frames.astype(np.float32) @ w).astype(np.float32)
    if frames.ndim == 4 and frames.shape[-1] == 1:
        return frames[..., 0]
    return frames


# --- synchronization --------------------------------------------------------

def imu_activity(imu: ImuTrace, smooth_s: float = 0.05) -> Signal1D:
    """Orientation-invariant motion envelope: smoothed norm of the sample-to-sample jerk."""
    jerk = np.linalg.norm(np.diff(imu.samples, axis=0), axis=1) * imu.fs
    jerk = np.concatenate([[jerk[0]], jerk])
    k = max(1, int(round(smooth_s * imu.fs)))
    if k > 1:
        jerk = np.convolve(jerk, np.ones(k) / k, mode="same")
    return Signal1D(jerk, imu.fs, imu.t0)


def estimate_offset(ref: Signal1D, dev: Signal1D, window: Tuple[float, float],
                    max_lag_s: float = 10.0, fs_sync: float = 100.0,
                    min_corr: float = 0.3) -> Tuple[float, float]:
    """Offset ``o`` such that ``t_ref = t_dev + o`` near ``window`` of the reference clock.

    Scans lags on a ``1/fs_sync`` grid with normalized cross-correlation and
    refines the best lag by parabolic interpolation. Returns ``(offset, corr)``.
    """
    a, b = window
    n = int(round((b - a) * fs_sync))
    L = int(round(max_lag_s * fs_sync))
    grid = a + np.arange(n) / fs_sync
    r = ref.resample_at(grid)
    r = r - r.mean()
    if n < 4 or np.std(r) < 1e-9 * (1 + np.abs(ref.samples).max()):
        raise SyncError("sync not found: no motion in reference IMU window")
    r /= np.linalg.norm(r)
    dev_grid = a - max_lag_s + np.arange(n + 2 * L) / fs_sync
    dev_t = dev.times
    d = np.interp(dev_grid, dev_t, dev.samples, left=np.nan, right=np.nan)
    win = sliding_window_view(d, n)  # (2L+1, n), row m <-> lag max_lag - m/fs
    valid = ~np.isnan(win)
    cnt = valid.sum(axis=1)
    wz = np.where(valid, win, 0.0)
    mean = wz.sum(axis=1) / np.maximum(cnt, 1)
    cen = np.where(valid, win - mean[:, None], 0.0)
    norm = np.sqrt((cen ** 2).sum(axis=1))
    corr = np.where((cnt > 0.8 * n) & (norm > 1e-12), (cen @ r) / np.maximum(norm, 1e-300), -np.inf)
    m = int(np.argmax(corr))
    best = float(corr[m])
    if not np.isfinite(best) or best < min_corr:
        raise SyncError(f"sync not found: correlation peak {best:.3f} below {min_corr}")
    frac = 0.0
    if 0 < m < corr.size - 1 and np.isfinite(corr[m - 1]) and np.isfinite(corr[m + 1]):
        denom = corr[m - 1] - 2 * corr[m] + corr[m + 1]
        if denom < 0:
            frac = 0.5 * (corr[m - 1] - corr[m + 1]) / denom
    return max_lag_s - (m + frac) / fs_sync, best


@dataclass
class ClockFit:
    """Linear map from a device clock to the reference clock."""

    offset_start: float
    offset_end: float
    anchor_start: float  # device-clock times of the two anchors
    anchor_end: float
    corr: Tuple[float, float]

    @property
    def scale(self) -> float:
        if self.anchor_end == self.anchor_start:
            return 1.0
        return 1.0 + (self.offset_end - self.offset_start) / (self.anchor_end - self.anchor_start)

    def to_ref(self, t_dev):
        return np.asarray(t_dev) * self.scale + (self.offset_start - self.anchor_start * (self.scale - 1.0))


def fit_clock(ref: Signal1D, dev: Signal1D, anchor_s: float = 20.0, max_lag_s: float = 10.0,
              fs_sync: float = 100.0, min_corr: float = 0.3) -> ClockFit:
    """Two-anchor (start/end) offset and drift estimate between device activity traces."""
    t_start, t_end = ref.t0, ref.t0 + ref.duration
    w1 = (t_start, min(t_start + anchor_s, t_end))
    o1, c1 = estimate_offset(ref, dev, w1, max_lag_s, fs_sync, min_corr)
    if t_end - t_start < 2 * anchor_s + 1:
        mid = 0.5 * (w1[0] + w1[1]) - o1
        return ClockFit(o1, o1, mid, mid, (c1, c1))
    w2 = (t_end - anchor_s, t_end)
    o2, c2 = estimate_offset(ref, dev, w2, max_lag_s, fs_sync, min_corr)
    a1 = 0.5 * (w1[0] + w1[1]) - o1
    a2 = 0.5 * (w2[0] + w2[1]) - o2
    return ClockFit(o1, o2, a1, a2, (c1, c2))


def _retime(sig: Signal1D, fit: ClockFit) -> Signal1D:
    return Signal1D(sig.samples, sig.fs / fit.scale, float(fit.to_ref(sig.t0)))


def sync_streams(raw: RawRecording, anchor_s: float = 20.0, max_lag_s: float = 10.0,
                 fs_sync: float = 100.0, min_corr: float = 0.3) -> SyncedRecording:
    """Align PPG and ECG devices to the glasses clock and trim to the common span.

    Each device's IMU is cross-correlated against the glasses IMU at the start
    and the end of the recording; a linear clock model maps the device
    timestamps onto the glasses clock.
    """
    ref_act = imu_activity(raw.imu)
    streams = {"ppg": raw.ppg_nose, "ecg": raw.ecg_chest}
    aligned: Dict[str, Signal1D] = {}
    offsets, scales, residual = {}, {}, {}
    for name, sig in streams.items():
        dev_imu = raw.device_imus.get(name)
        if dev_imu is None:
            log.warning("no IMU for device %s; assuming it shares the glasses clock", name)
            aligned[name] = sig
            offsets[name], scales[name], residual[name] = 0.0, 1.0, float("nan")
            continue
        dev_act = imu_activity(dev_imu)
        fit = fit_clock(ref_act, dev_act, anchor_s, max_lag_s, fs_sync, min_corr)
        aligned[name] = _retime(sig, fit)
        offsets[name] = float(fit.to_ref(0.0))
        scales[name] = fit.scale
        moved = _retime(dev_act, fit)
        check = fit_clock(ref_act, moved, anchor_s, min(max_lag_s, 2.0), fs_sync, min_corr)
        residual[name] = max(abs(check.offset_start), abs(check.offset_end))

    video = raw.eye_video
    frame_times = video.times
    start = max(frame_times[0], raw.imu.t0, *(s.t0 for s in aligned.values()))
    end = min(frame_times[-1] + 1.0 / video.fps, raw.imu.times[-1],
              *(s.t0 + s.duration for s in aligned.values()))
    if end <= start:
        raise SyncError("streams do not overlap after synchronization")
    keep = (frame_times >= start - 1e-9) & (frame_times < end - 1e-9)
    frames = video.frames[keep]
    ft = frame_times[keep]
    span_end = ft[-1] + 1.0 / video.fps
    ppg = aligned["ppg"].slice_time(ft[0] - 0.5 / aligned["ppg"].fs, span_end)
    ecg = aligned["ecg"].slice_time(ft[0] - 0.5 / aligned["ecg"].fs, span_end)
    segments = [replace(s, start_s=max(s.start_s, ft[0]), end_s=min(s.end_s, span_end))
                for s in raw.activities if s.end_s > ft[0] and s.start_s < span_end]
    return SyncedRecording(
        participant=raw.participant, frames=frames, fps=float(video.fps), frame_times=ft,
        imu=raw.imu, imu_mag=motion_magnitude(raw.imu, ft), ppg=ppg, ecg=ecg,
        activities=segments, offsets_s=offsets, clock_scale=scales, residual_s=residual,
        meta=dict(raw.manifest))


# --- heart-rate validation ---------------------------------------------------

def ecg_heart_rate(ecg: Signal1D, window_s: float = 30.0, slide_s: float = 1.0,
                   band: Tuple[float, float] = (5.0, 30.0), max_hr_bpm: float = 220.0) -> HRSeries:
    """Sliding-window HR from R-peaks of a 5-30 Hz bandpassed ECG."""
    filt = bandpass_butterworth(ecg, band[0], band[1], order=2)
    x = filt.samples
    amp = float(np.percentile(np.abs(x), 99.5)) if x.size else 0.0
    peaks = detect_peaks(filt, 30.0, max_hr_bpm, prominence=0.4 * amp) if amp > 0 else np.empty(0, int)
    return hr_from_peaks(peaks, ecg.fs, window_s, len(ecg), t0=ecg.t0, step_s=slide_s)


def ppg_heart_rate(ppg: Signal1D, window_s: float = 30.0, slide_s: float = 1.0,
                   band: Tuple[float, float] = DEFAULT_BAND) -> HRSeries:
    return hr_from_bvp(ppg, window_s=window_s, band=band, step_s=slide_s)


def validate_ppg_task(ppg_hr: HRSeries, ecg_hr: HRSeries,
                      threshold_bpm: float = 3.0) -> Tuple[Optional[float], bool]:
    """MAE between PPG- and ECG-derived HR; the task is excluded when MAE > threshold."""
    p, e, _ = align_series(ppg_hr, ecg_hr)
    if p.size == 0:
        return None, True
    mae = float(np.mean(np.abs(p - e)))
    return mae, mae > threshold_bpm


def apply_exclusion(rec: SyncedRecording, threshold_bpm: float = 3.0, window_s: float = 30.0,
                    slide_s: float = 1.0) -> List[ActivitySegment]:
    """Validate the contact PPG against ECG per activity segment and flag exclusions."""
    out = []
    for seg in rec.activities:
        try:
            ppg = rec.ppg.slice_time(seg.start_s, seg.end_s)
            ecg = rec.ecg.slice_time(seg.start_s, seg.end_s)
        except ValueError:
            out.append(replace(seg, excluded=True, exclusion_mae_bpm=None))
            continue
        # common window grid anchored at the segment start
        ppg_hr = ppg_heart_rate(ppg, window_s, slide_s)
        ecg_hr = ecg_heart_rate(ecg, window_s, slide_s)
        ppg_hr = _reanchor(ppg_hr, ppg.t0, seg.start_s)
        ecg_hr = _reanchor(ecg_hr, ecg.t0, seg.start_s)
        mae, excluded = validate_ppg_task(ppg_hr, ecg_hr, threshold_bpm)
        out.append(replace(seg, excluded=excluded, exclusion_mae_bpm=mae))
    return out


def _reanchor(hr: HRSeries, t0: float, anchor: float) -> HRSeries:
    # sub-sample start differences between streams would defeat timestamp alignment
    starts = anchor + np.round((hr.window_starts - t0) / hr.step_s) * hr.step_s
    return HRSeries(hr.values_bpm, hr.window_s, starts, hr.valid, hr.step_s)


# --- motion magnitude ---------------------------------------------------------

def motion_magnitude(imu: ImuTrace, frame_times: np.ndarray) -> Signal1D:
    """Per-frame RMS of the summed absolute 3-axis sample differences.

    The IMU samples falling in ``[t_i, t_{i+1})`` contribute to frame ``i``;
    frames without any IMU sample are interpolated from their neighbours.
    """
    frame_times = np.asarray(frame_times, dtype=np.float64)
    s = np.abs(np.diff(imu.samples, axis=0)).sum(axis=1)
    ts = imu.times[1:]
    dt = float(np.median(np.diff(frame_times))) if frame_times.size > 1 else 1.0 / 30
    edges = np.append(frame_times, frame_times[-1] + dt)
    idx = np.searchsorted(edges, ts, side="right") - 1
    ok = (idx >= 0) & (idx < frame_times.size)
    sums = np.bincount(idx[ok], weights=s[ok] ** 2, minlength=frame_times.size)
    cnt = np.bincount(idx[ok], minlength=frame_times.size)
    vals = np.full(frame_times.size, np.nan)
    has = cnt > 0
    vals[has] = np.sqrt(sums[has] / cnt[has])
    if not has.all():
        if has.any():
            vals[~has] = np.interp(frame_times[~has], frame_times[has], vals[has])
        else:
            vals[:] = 0.0
    return Signal1D(vals, 1.0 / dt, frame_times[0])


def activity_motion_means(records: Sequence[Tuple[Signal1D, Sequence[ActivitySegment]]]) -> Dict[str, float]:
    """Mean motion magnitude per activity label pooled over recordings."""
    acc: Dict[str, List[float]] = {}
    for mag, segments in records:
        t = mag.times
        for seg in segments:
            sel = (t >= seg.start_s) & (t < seg.end_s)
            if sel.any():
                acc.setdefault(seg.label, []).extend(mag.samples[sel].tolist())
    return {k: float(np.mean(v)) for k, v in acc.items()}


def normalize_activity_motion(means: Dict[str, float]) -> Dict[str, float]:
    """Min-max normalize per-activity means to [0, 1] across activities."""
    vals = np.array(list(means.values()), dtype=np.float64)
    lo, hi = vals.min(), vals.max()
    if hi - lo <= 0:
        return {k: 0.0 for k in means}
    return {k: float((v - lo) / (hi - lo)) for k, v in means.items()}


def standardized_imu(rec: SyncedRecording) -> np.ndarray:
    """Per-frame motion magnitude z-scored over the recording (model IMU input)."""
    m = rec.imu_mag.samples
    sd = m.std()
    return (m - m.mean()) / sd if sd > 1e-12 else np.zeros_like(m)


# --- on-disk formats ------------------------------------------------------------

def _frame_index(p: Path) -> int:
    nums = re.findall(r"\d+", p.stem)
    return int(nums[-1]) if nums else 0


def load_video(path, fps: float, device: str = "generic") -> Video:
    import cv2

    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.png"), key=_frame_index)
        if not files:
            raise FileNotFoundError(f"no PNG frames in {path}")
        frames = np.stack([cv2.imread(str(f), cv2.IMREAD_UNCHANGED) for f in files])
    else:
        cap = cv2.VideoCapture(str(path))
        if not cap.isOpened():
            raise FileNotFoundError(f"cannot open video {path}")
        out = []
        while True:
            ok, fr = cap.read()
            if not ok:
                break
            out.append(cv2.cvtColor(fr, cv2.COLOR_BGR2GRAY) if fr.ndim == 3 else fr)
        cap.release()
        frames = np.stack(out)
    return Video(to_grayscale(frames), fps, 0.0, device)


def save_video_frames(frames: np.ndarray, out_dir) -> None:
    import cv2

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    u8 = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    for i, fr in enumerate(u8):
        cv2.imwrite(str(out_dir / f"frame_{i:06d}.png"), fr)


def save_imu_csv(imu: ImuTrace, path) -> None:
    data = np.column_stack([imu.times, imu.samples])
    np.savetxt(path, data, delimiter=",", header="timestamp_s,ax,ay,az", comments="", fmt="%.9g")


def load_imu_csv(path, fs: Optional[float] = None) -> ImuTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if fs is None:
        fs = 1.0 / float(np.median(np.diff(data[:, 0])))
    return ImuTrace(data[:, 1:4], fs, float(data[0, 0]))


def _save_sig(sig: Signal1D, path) -> None:
    np.savetxt(path, np.column_stack([sig.times, sig.samples]), delimiter=",",
               header="timestamp_s,value", comments="", fmt="%.9g")


def _load_sig(path, fs: Optional[float]) -> Signal1D:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if fs is None:
        fs = 1.0 / float(np.median(np.diff(data[:, 0])))
    return Signal1D(data[:, 1], fs, float(data[0, 0]))


def save_activities_csv(segments: Sequence[ActivitySegment], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["label", "start_s", "end_s"])
        for s in segments:
            w.writerow([s.label, f"{s.start_s:.6f}", f"{s.end_s:.6f}"])


def load_activities_csv(path) -> List[ActivitySegment]:
    with open(path, newline="") as f:
        return [ActivitySegment(r["label"], float(r["start_s"]), float(r["end_s"]))
                for r in csv.DictReader(f)]


def write_recording(raw: RawRecording, out_dir) -> Path:
    """Write a recording as PNG frames + CSV streams + ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_video_frames(raw.eye_video.frames, out / "frames")
    save_imu_csv(raw.imu, out / "imu.csv")
    _save_sig(raw.ppg_nose, out / "ppg.csv")
    _save_sig(raw.ecg_chest, out / "ecg.csv")
    streams = {
        "video": {"path": "frames", "fps": raw.eye_video.fps, "device": raw.eye_video.device},
        "imu": {"path": "imu.csv", "fs": raw.imu.fs},
        "ppg": {"path": "ppg.csv", "fs": raw.ppg_nose.fs},
        "ecg": {"path": "ecg.csv", "fs": raw.ecg_chest.fs},
    }
    for name, imu in raw.device_imus.items():
        save_imu_csv(imu, out / f"{name}_imu.csv")
        streams[f"{name}_imu"] = {"path": f"{name}_imu.csv", "fs": imu.fs}
    save_activities_csv(raw.activities, out / "activities.csv")
    manifest = {k: v for k, v in raw.manifest.items() if k not in ("streams", "activities")}
    manifest.update({"streams": streams, "activities": "activities.csv"})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float))
    return out / "manifest.json"


def load_recording(manifest_path) -> RawRecording:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    root = manifest_path.parent
    man = json.loads(manifest_path.read_text())
    st = man["streams"]
    video = load_video(root / st["video"]["path"], float(st["video"]["fps"]),
                       st["video"].get("device", "generic"))
    imu = load_imu_csv(root / st["imu"]["path"], st["imu"].get("fs"))
    ppg = _load_sig(root / st["ppg"]["path"], st["ppg"].get("fs"))
    ecg = _load_sig(root / st["ecg"]["path"], st["ecg"].get("fs"))
    dev = {k[:-4]: load_imu_csv(root / v["path"], v.get("fs")) for k, v in st.items() if k.endswith("_imu")}
    acts = load_activities_csv(root / man["activities"]) if man.get("activities") else []
    return RawRecording(video, imu, ppg, ecg, man, dev, acts)


def save_synced(rec: SyncedRecording, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path, frames=rec.frames.astype(np.float32), frame_times=rec.frame_times,
        imu=rec.imu.samples, imu_fs=rec.imu.fs, imu_t0=rec.imu.t0,
        ppg=rec.ppg.samples, ppg_fs=rec.ppg.fs, ppg_t0=rec.ppg.t0,
        ecg=rec.ecg.samples, ecg_fs=rec.ecg.fs, ecg_t0=rec.ecg.t0, fps=rec.fps)
    info = {
        "participant": rec.participant,
        "activities": [vars(s) for s in rec.activities],
        "offsets_s": rec.offsets_s, "clock_scale": rec.clock_scale,
        "residual_s": rec.residual_s, "meta": rec.meta,
    }
    path.with_suffix(".json").write_text(json.dumps(info, indent=2, default=float))


def load_synced(path) -> SyncedRecording:
    path = Path(path)
    z = np.load(path)
    info = json.loads(path.with_suffix(".json").read_text())
    imu = ImuTrace(z["imu"], float(z["imu_fs"]), float(z["imu_t0"]))
    ft = z["frame_times"]
    return SyncedRecording(
        participant=info["participant"], frames=z["frames"], fps=float(z["fps"]), frame_times=ft,
        imu=imu, imu_mag=motion_magnitude(imu, ft),
        ppg=Signal1D(z["ppg"], float(z["ppg_fs"]), float(z["ppg_t0"])),
        ecg=Signal1D(z["ecg"], float(z["ecg_fs"]), float(z["ecg_t0"])),
        activities=[ActivitySegment(**s) for s in info["activities"]],
        offsets_s=info["offsets_s"], clock_scale=info["clock_scale"],
        residual_s=info["residual_s"], meta=info["meta"])
