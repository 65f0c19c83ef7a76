"""Synthetic eye-tracking recordings with known pulse, motion and clock offsets.

Pixel intensities follow a dichromatic reflection model: each pixel is
``I(t) * (v_s(t) + d0 + u_p * p(t)) + noise`` where ``p(t)`` is the blood
volume pulse, ``d0`` the stationary reflection and ``v_s`` a motion-driven
specular term. Skin pixels carry most of the pulse; the eye regions carry
less pulse plus blinks and saccades whose rate follows the head motion.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal as sps

from .ingest import ActivitySegment, ImuTrace, RawRecording, Video, write_recording
from .signal_core import HRSeries, Signal1D

# Normalized motion level and mean HR per activity (relative scale of the
# recorded dataset, used as generator defaults).
ACTIVITY_MOTION = {"video": 0.0, "office": 0.45, "kitchen": 0.54, "dancing": 1.0,
                   "bike": 0.77, "walking": 0.30}
ACTIVITY_HR = {"video": 71.5, "office": 75.7, "kitchen": 85.3, "dancing": 89.1,
               "bike": 113.1, "walking": 93.7}
# dominant rhythm of periodic head motion (Hz)
ACTIVITY_RHYTHM = {"video": 0.0, "office": 0.0, "kitchen": 0.0, "dancing": 2.1,
                   "bike": 1.5, "walking": 1.9}

HRProfile = Union[float, Callable[[np.ndarray], np.ndarray], Sequence[Tuple[float, float]]]
_GRID_FS = 512.0


@dataclass
class SynthSpec:
    duration_s: float = 300.0
    fps: float = 30.0
    frame_size: Tuple[int, int] = (48, 128)  # (h, w)
    hr_profile: Optional[HRProfile] = 72.0  # None -> per-activity means
    ibi_jitter: float = 0.0  # uniform relative jitter of each inter-beat interval
    activities: Optional[Sequence[Tuple[str, float, float]]] = None
    motion_gain: float = 1.0
    motion_profile: Optional[Callable[[np.ndarray], np.ndarray]] = None  # t -> (n, 3) accel [g]
    skin_level: float = 140.0
    eye_level: float = 80.0
    pupil_level: float = 25.0
    pulse_amplitude: float = 0.6
    eye_pulse_fraction: float = 0.3
    specular_amplitude: float = 0.5
    eye_artifact_amplitude: float = 1.0
    blink_rate_hz: float = 0.2
    saccade_rate_hz: float = 0.5
    noise_sigma: float = 3.0
    imu_fs: float = 100.0
    ppg_fs: float = 128.0
    ecg_fs: float = 1024.0
    ppg_noise: float = 0.01
    ecg_noise: float = 0.02
    device_offsets: Dict[str, float] = field(default_factory=lambda: {"ppg": 0.0, "ecg": 0.0})
    device_drift_ppm: Dict[str, float] = field(default_factory=lambda: {"ppg": 0.0, "ecg": 0.0})
    sync_pattern: bool = True
    participant: str = "S00"

    def __post_init__(self):
        if self.duration_s <= 0 or self.fps <= 0:
            raise ValueError("duration and fps must be positive")
        amps = (self.pulse_amplitude, self.specular_amplitude, self.eye_artifact_amplitude,
                self.noise_sigma, self.motion_gain)
        if min(amps) < 0:
            raise ValueError("amplitudes must be non-negative")

    def segments(self) -> list:
        if self.activities is None:
            return [ActivitySegment("video", 0.0, self.duration_s)]
        return [ActivitySegment(lbl, float(a), float(b)) for lbl, a, b in self.activities]


@dataclass
class GroundTruth:
    beat_times: np.ndarray
    hr_times: np.ndarray
    hr_bpm: np.ndarray
    offsets_s: Dict[str, float]
    drift_ppm: Dict[str, float]
    activities: list

    def hr_windows(self, window_starts: np.ndarray, window_s: float) -> HRSeries:
        """Reference HR per window from the beats inside it (60 / mean IBI)."""
        starts = np.asarray(window_starts, dtype=np.float64)
        vals = np.full(starts.size, np.nan)
        for i, s in enumerate(starts):
            b = self.beat_times[(self.beat_times >= s) & (self.beat_times < s + window_s)]
            if b.size >= 2:
                vals[i] = 60.0 * (b.size - 1) / (b[-1] - b[0])
        return HRSeries(vals, window_s, starts)

    def mean_hr(self, t0: float, t1: float) -> float:
        sel = (self.hr_times >= t0) & (self.hr_times < t1)
        return float(self.hr_bpm[sel].mean())

    def to_json(self) -> dict:
        return {"beat_times": self.beat_times.tolist(), "offsets_s": self.offsets_s,
                "drift_ppm": self.drift_ppm,
                "activities": [vars(s) for s in self.activities]}


def _hr_function(spec: SynthSpec) -> Callable[[np.ndarray], np.ndarray]:
    prof = spec.hr_profile
    if prof is None:
        segs = spec.segments()
        knots_t, knots_v = [], []
        for s in segs:
            hr = ACTIVITY_HR[s.label]
            knots_t += [s.start_s + min(10.0, 0.2 * (s.end_s - s.start_s)), s.end_s]
            knots_v += [hr, hr]
        return lambda t: np.interp(t, knots_t, knots_v)
    if callable(prof):
        return lambda t: np.asarray(prof(np.asarray(t, dtype=np.float64)), dtype=np.float64)
    if np.isscalar(prof):
        return lambda t: np.full(np.shape(t), float(prof))
    kt, kv = np.asarray(prof, dtype=np.float64).T
    return lambda t: np.interp(t, kt, kv)


def make_beat_times(hr_fn: Callable, duration_s: float, jitter: float,
                    rng: np.random.Generator, t_start: float = -1.0) -> np.ndarray:
    """Beat times following ``hr_fn`` with relative IBI jitter, covering the recording."""
    beats = [t_start + rng.uniform(0, 60.0 / float(hr_fn(np.array([0.0]))[0]))]
    while beats[-1] < duration_s + 2.0:
        ibi = 60.0 / float(hr_fn(np.array([beats[-1]]))[0])
        if jitter > 0:
            ibi *= 1.0 + rng.uniform(-jitter, jitter)
        beats.append(beats[-1] + ibi)
    return np.asarray(beats)


def pulse_waveform(t: np.ndarray, beat_times: np.ndarray) -> np.ndarray:
    """Pulse train with fast systolic rise, slower decay and a dicrotic bump.

    The systolic maximum sits at each beat time; the template is scaled by
    the local inter-beat interval.
    """
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    ibis = np.diff(beat_times, append=beat_times[-1] + (beat_times[-1] - beat_times[-2]))
    for tb, ibi in zip(beat_times, ibis):
        lo = np.searchsorted(t, tb - 0.4 * ibi)
        hi = np.searchsorted(t, tb + 1.2 * ibi)
        if hi <= lo:
            continue
        u = (t[lo:hi] - tb) / ibi
        rise = np.exp(-0.5 * (u / 0.09) ** 2)
        decay = np.exp(-0.5 * (u / 0.22) ** 2)
        main = np.where(u < 0, rise, decay)
        dicrotic = 0.25 * np.exp(-0.5 * ((u - 0.42) / 0.07) ** 2)
        out[lo:hi] += main + dicrotic
    return out


def ecg_waveform(t: np.ndarray, beat_times: np.ndarray) -> np.ndarray:
    """PQRST-like train with the R wave at each beat time (mV scale)."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    waves = ((-0.20, 0.025, 0.12), (-0.03, 0.010, -0.15), (0.0, 0.010, 1.2),
             (0.03, 0.010, -0.25), (0.25, 0.045, 0.3))
    for tb in beat_times:
        lo = np.searchsorted(t, tb - 0.35)
        hi = np.searchsorted(t, tb + 0.45)
        dt = t[lo:hi] - tb
        for mu, sd, a in waves:
            out[lo:hi] += a * np.exp(-0.5 * ((dt - mu) / sd) ** 2)
    return out


def _bandlimited(rng: np.random.Generator, n: int, fs: float, f_hi: float) -> np.ndarray:
    x = rng.standard_normal(n)
    sos = sps.butter(2, f_hi, btype="low", fs=fs, output="sos")
    y = sps.sosfiltfilt(sos, x)
    return y / (y.std() + 1e-12)


def _motion_grid(spec: SynthSpec, rng: np.random.Generator):
    """Head acceleration (excluding gravity) on a dense true-time grid."""
    pad = 15.0
    t = np.arange(-pad, spec.duration_s + pad, 1.0 / _GRID_FS)
    acc = np.zeros((t.size, 3))
    if spec.motion_profile is not None:
        acc += np.asarray(spec.motion_profile(t), dtype=np.float64).reshape(t.size, 3)
    else:
        for seg in spec.segments():
            level = ACTIVITY_MOTION[seg.label] * spec.motion_gain
            if level <= 0:
                continue
            sel = (t >= seg.start_s) & (t < seg.end_s)
            n = int(sel.sum())
            rnd = np.stack([_bandlimited(rng, n, _GRID_FS, 4.0) for _ in range(3)], axis=1)
            part = 0.25 * level * rnd
            f = ACTIVITY_RHYTHM[seg.label]
            if f > 0:
                ph = rng.uniform(0, 2 * np.pi)
                part[:, 1] += 0.4 * level * np.sin(2 * np.pi * f * t[sel] + ph)
            acc[sel] += part
    if spec.sync_pattern:
        for a, b in ((-6.0, -1.0), (spec.duration_s + 1.0, spec.duration_s + 6.0)):
            sel = (t >= a) & (t < b)
            n = int(sel.sum())
            burst = np.stack([_bandlimited(rng, n, _GRID_FS, 8.0) for _ in range(3)], axis=1)
            env = np.sin(np.pi * (t[sel] - a) / (b - a))[:, None]
            acc[sel] += 1.5 * env * burst
    return t, acc


def _sample_imu(grid_t, grid_acc, true_times, rng, noise=0.003) -> np.ndarray:
    acc = np.stack([np.interp(true_times, grid_t, grid_acc[:, i]) for i in range(3)], axis=1)
    acc[:, 2] += 1.0  # gravity
    return acc + noise * rng.standard_normal(acc.shape)


def _device_times(fs: float, duration: float, offset: float, drift_ppm: float):
    """Device timestamps and the true times at which they were taken.

    Device clock: ``t_dev = t_true * (1 + drift) - offset``; the device records
    the true interval ``[-pad, duration + pad]``.
    """
    k = 1.0 + drift_ppm * 1e-6
    pad = 8.0
    t_dev0 = -pad * k - offset
    n = int(np.floor((duration + 2 * pad) * k * fs))
    t_dev = t_dev0 + np.arange(n) / fs
    t_true = (t_dev + offset) / k
    return t_dev, t_true


def _geometry(h: int, w: int):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    centers = [(0.5 * h, 0.27 * w), (0.5 * h, 0.73 * w)]
    ry, rx = 0.28 * h, 0.16 * w
    eye = np.zeros((h, w), dtype=bool)
    for cy, cx in centers:
        eye |= ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return yy, xx, eye, centers, (ry, rx)


def skin_eye_rois(frame_size: Tuple[int, int]):
    """Default rectangles (x0, y0, x1, y1) for a skin-only and an eye-only region."""
    h, w = frame_size
    _, _, _, centers, (ry, rx) = _geometry(h, w)
    cy, cx = centers[0]
    eye_box = (int(np.ceil(cx - 0.6 * rx)), int(np.ceil(cy - 0.6 * ry)),
               int(np.floor(cx + 0.6 * rx)), int(np.floor(cy + 0.6 * ry)))
    gap0 = int(np.ceil(centers[0][1] + rx)) + 1
    gap1 = int(np.floor(centers[1][1] - rx)) - 1
    skin_box = (gap0, int(0.05 * h), gap1, int(0.95 * h))
    return skin_box, eye_box


def _render(spec: SynthSpec, rng, frame_t, p_frames, motion_frames, level_frames):
    h, w = spec.frame_size
    n = frame_t.size
    yy, xx, eye, centers, (ry, rx) = _geometry(h, w)
    vignette = 1.0 - 0.15 * (((yy - h / 2) / h) ** 2 + ((xx - w / 2) / w) ** 2)
    d0 = np.where(eye, spec.eye_level, spec.skin_level) * vignette
    up = np.where(eye, spec.eye_pulse_fraction, 1.0) * spec.pulse_amplitude
    up = up * (0.8 + 0.4 * np.exp(-(((yy - 0.2 * h) / h) ** 2)))
    spec_map = 0.5 + np.exp(-0.5 * (((yy - 0.3 * h) / (0.3 * h)) ** 2 + ((xx - 0.5 * w) / (0.4 * w)) ** 2))
    # specular term driven by one head-acceleration axis
    vs = spec.specular_amplitude * motion_frames

    f32 = np.float32
    frames = (d0.astype(f32)[None] + p_frames.astype(f32)[:, None, None] * up.astype(f32)[None]
              + vs.astype(f32)[:, None, None] * spec_map.astype(f32)[None])

    # eye artifacts: saccades move the pupil, blinks cover the eye with the lid
    amp = spec.eye_artifact_amplitude
    pupil_r = 0.45 * ry
    pos = np.zeros((n, 2))
    blink = np.zeros(n, dtype=bool)
    if amp > 0:
        dt = 1.0 / spec.fps
        cur = np.zeros(2)
        for i in range(n):
            rate = spec.saccade_rate_hz * (1.0 + 4.0 * level_frames[i])
            if rng.random() < rate * dt:
                cur = rng.uniform(-1, 1, 2) * np.array([0.45 * ry, 0.6 * rx]) * min(1.0, amp)
            pos[i] = cur
        t_next = rng.exponential(1.0 / max(spec.blink_rate_hz, 1e-6))
        while t_next < frame_t[-1]:
            dur = rng.uniform(0.15, 0.30)
            blink |= (frame_t >= t_next) & (frame_t < t_next + dur)
            rate = spec.blink_rate_hz * (1.0 + 2.0 * level_frames[min(int(t_next * spec.fps), n - 1)])
            t_next += dur + rng.exponential(1.0 / max(rate, 1e-6))
        contrast = (spec.eye_level - spec.pupil_level) * min(1.0, amp)
        lid = (0.9 * spec.skin_level - spec.eye_level) * min(1.0, amp)
        chunk = 512
        for s in range(0, n, chunk):
            e = min(n, s + chunk)
            dark = np.zeros((e - s, h, w))
            for cy, cx in centers:
                dy = yy[None] - (cy + pos[s:e, 0, None, None])
                dx = xx[None] - (cx + pos[s:e, 1, None, None])
                soft = 1.0 / (1.0 + np.exp((np.sqrt(dy ** 2 + dx ** 2) - pupil_r) / 0.7))
                dark += soft
            dark *= eye[None]
            b = blink[s:e, None, None]
            frames[s:e] += (-contrast * dark * ~b + lid * b * eye[None]).astype(f32)
    frames += f32(spec.noise_sigma) * rng.standard_normal(frames.shape, dtype=f32)
    return frames, blink


def generate(spec: SynthSpec, seed: int = 0) -> Tuple[RawRecording, GroundTruth]:
    """Render a synthetic recording and its ground truth.

    Deterministic in ``(spec, seed)``.
    """
    rng = np.random.default_rng(seed)
    r_beats, r_motion, r_render, r_imu, r_dev = (np.random.default_rng(s) for s in
                                                 rng.integers(0, 2 ** 63, size=5))
    hr_fn = _hr_function(spec)
    beats = make_beat_times(hr_fn, spec.duration_s + 10.0, spec.ibi_jitter, r_beats, t_start=-10.0)
    grid_t, grid_acc = _motion_grid(spec, r_motion)

    n_frames = int(round(spec.duration_s * spec.fps))
    frame_t = np.arange(n_frames) / spec.fps
    p_frames = pulse_waveform(frame_t, beats)
    motion_frames = np.interp(frame_t, grid_t, grid_acc[:, 0])
    lvl = np.sqrt(np.convolve(np.linalg.norm(grid_acc, axis=1) ** 2, np.ones(256) / 256, "same"))
    level_frames = np.clip(np.interp(frame_t, grid_t, lvl) / 0.5, 0, 2)
    frames, _ = _render(spec, r_render, frame_t, p_frames, motion_frames, level_frames)

    imu_t = np.arange(-5.0, spec.duration_s + 5.0, 1.0 / spec.imu_fs)
    imu = ImuTrace(_sample_imu(grid_t, grid_acc, imu_t, r_imu), spec.imu_fs, float(imu_t[0]))

    offsets = {k: float(spec.device_offsets.get(k, 0.0)) for k in ("ppg", "ecg")}
    drifts = {k: float(spec.device_drift_ppm.get(k, 0.0)) for k in ("ppg", "ecg")}
    dev_imus = {}
    t_dev, t_true = _device_times(spec.ppg_fs, spec.duration_s, offsets["ppg"], drifts["ppg"])
    ppg_vals = pulse_waveform(t_true, beats) + spec.ppg_noise * r_dev.standard_normal(t_true.size)
    ppg = Signal1D(ppg_vals, spec.ppg_fs, float(t_dev[0]))
    it_dev, it_true = _device_times(spec.imu_fs, spec.duration_s, offsets["ppg"], drifts["ppg"])
    dev_imus["ppg"] = ImuTrace(_sample_imu(grid_t, grid_acc, it_true, r_dev), spec.imu_fs, float(it_dev[0]))

    t_dev, t_true = _device_times(spec.ecg_fs, spec.duration_s, offsets["ecg"], drifts["ecg"])
    ecg_vals = ecg_waveform(t_true, beats) + spec.ecg_noise * r_dev.standard_normal(t_true.size)
    ecg = Signal1D(ecg_vals, spec.ecg_fs, float(t_dev[0]))
    ecg_imu_fs = 64.0
    it_dev, it_true = _device_times(ecg_imu_fs, spec.duration_s, offsets["ecg"], drifts["ecg"])
    dev_imus["ecg"] = ImuTrace(_sample_imu(grid_t, grid_acc, it_true, r_dev), ecg_imu_fs, float(it_dev[0]))

    segments = spec.segments()
    manifest = {"participant": spec.participant, "source": "synthetic", "seed": int(seed),
                "metadata": {"fitzpatrick": None, "age_bracket": None}}
    raw = RawRecording(Video(frames, spec.fps, 0.0, "synthetic"), imu, ppg, ecg, manifest,
                       dev_imus, segments)
    hr_t = np.arange(0.0, spec.duration_s, 0.1)
    truth = GroundTruth(beats[(beats >= -2.0) & (beats <= spec.duration_s + 2.0)], hr_t, hr_fn(hr_t),
                        offsets, drifts, segments)
    return raw, truth


def corrupt_span(raw: RawRecording, t0: float, t1: float, gain: float, seed: int = 0,
                 artifact_scale: float = 4.0) -> RawRecording:
    """Add motion-artifact noise to frames in ``[t0, t1)`` and matching IMU motion.

    The frame artifact is a band-limited intensity fluctuation on a smooth
    spatial pattern; the glasses IMU receives acceleration bursts of the same
    envelope, so the IMU magnitude rises over exactly the corrupted span.
    """
    v = raw.eye_video
    ft = v.times
    if not (ft[0] <= t0 < t1 <= ft[-1] + 1.0 / v.fps):
        raise ValueError(f"span [{t0}, {t1}) outside recording")
    if gain == 0:
        return raw
    rng = np.random.default_rng(seed)
    sel = (ft >= t0) & (ft < t1)
    n = int(sel.sum())
    h, w = v.frames.shape[1:]
    yy, xx = np.mgrid[0:h, 0:w]
    ph = rng.uniform(0, 2 * np.pi, 2)
    pattern = 1.0 + 0.5 * np.sin(2 * np.pi * xx / w + ph[0]) * np.cos(2 * np.pi * yy / h + ph[1])
    z = _bandlimited(rng, max(n, 16), v.fps, min(3.0, 0.45 * v.fps))[:n] if n > 0 else np.zeros(0)
    frames = v.frames.copy()
    frames[sel] += (gain * artifact_scale * z)[:, None, None] * pattern[None].astype(np.float32)
    frames[sel] += (0.5 * gain * artifact_scale * rng.standard_normal((n, h, w))).astype(np.float32)

    it = raw.imu.times
    isel = (it >= t0) & (it < t1)
    m = int(isel.sum())
    imu = raw.imu.samples.copy()
    if m > 0:
        burst = np.stack([_bandlimited(rng, max(m, 16), raw.imu.fs, 8.0)[:m] for _ in range(3)], axis=1)
        imu[isel] += 0.5 * gain * burst
    return replace(raw, eye_video=Video(frames, v.fps, v.t0, v.device),
                   imu=ImuTrace(imu, raw.imu.fs, raw.imu.t0))


def write_synthetic(raw: RawRecording, truth: GroundTruth, out_dir) -> Path:
    """Write a synthetic recording in the ingestion format plus ``truth.json`` and ROIs."""
    from .baseline import RoiSpec, save_roi_csv

    out = Path(out_dir)
    write_recording(raw, out)
    (out / "truth.json").write_text(json.dumps(truth.to_json()))
    skin, eyes = skin_eye_rois(raw.eye_video.frames.shape[1:3])
    save_roi_csv([RoiSpec(raw.participant, "skin", *skin), RoiSpec(raw.participant, "eyes", *eyes)],
                 out / "rois.csv")
    return out / "manifest.json"


def load_truth(path) -> GroundTruth:
    path = Path(path)
    if path.is_dir():
        path = path / "truth.json"
    d = json.loads(path.read_text())
    beats = np.asarray(d["beat_times"])
    mid = 0.5 * (beats[1:] + beats[:-1])
    return GroundTruth(beats, mid, 60.0 / np.diff(beats), d["offsets_s"], d["drift_ppm"],
                       [ActivitySegment(**s) for s in d["activities"]])
