"""Signal-processing baseline: ROI mean intensity, IQR change rejection, bandpass, HR."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .signal_core import (
    DEFAULT_BAND,
    HRSeries,
    Signal1D,
    bandpass_butterworth,
    detect_peaks,
    hr_from_peaks,
)

ROI_KINDS = ("skin", "eyes")


@dataclass(frozen=True)
class RoiSpec:
    participant: str
    kind: str
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.kind not in ROI_KINDS:
            raise ValueError(f"ROI kind must be one of {ROI_KINDS}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("ROI must have nonzero area")

    def check_bounds(self, frame_shape: Tuple[int, int]) -> None:
        h, w = frame_shape
        if self.x0 < 0 or self.y0 < 0 or self.x1 > w or self.y1 > h:
            raise ValueError(f"ROI {self} out of bounds for frames of shape {frame_shape}")


def roi_mean_series(frames: np.ndarray, fps: float, roi: RoiSpec, t0: float = 0.0) -> Signal1D:
    """Mean pixel intensity inside the rectangle, one value per frame."""
    roi.check_bounds(frames.shape[1:3])
    crop = frames[:, roi.y0:roi.y1, roi.x0:roi.x1]
    return Signal1D(crop.reshape(crop.shape[0], -1).mean(axis=1, dtype=np.float64), fps, t0)


def iqr_reject(series: Signal1D, fence: float = 3.0) -> Signal1D:
    """Replace outlying frame-to-frame changes by interpolated changes.

    A change is rejected when it lies outside ``[Q1 - fence*IQR, Q3 + fence*IQR]``
    of the change distribution (``fence=0`` keeps only the raw interquartile
    interval). Rejected changes are linearly interpolated from the accepted
    changes on either side and the series is re-integrated from its first
    sample, so length and sampling stay the same. When all changes are equal
    the series is returned unchanged.
    """
    x = series.samples
    if x.size < 4:
        raise ValueError("iqr_reject needs at least 4 samples")
    d = np.diff(x)
    q1, q3 = np.percentile(d, [25, 75])
    if q3 - q1 <= 0 and np.all(d == d[0]):
        return series.replace(x.copy())
    iqr = q3 - q1
    bad = (d < q1 - fence * iqr) | (d > q3 + fence * iqr)
    good = ~bad
    if good.sum() == 0:
        return series.replace(x.copy())
    idx = np.arange(d.size)
    d_new = d.copy()
    d_new[bad] = np.interp(idx[bad], idx[good], d[good])
    return series.replace(np.concatenate([[x[0]], x[0] + np.cumsum(d_new)]))


def baseline_bvp(frames: np.ndarray, fps: float, roi: RoiSpec, band=DEFAULT_BAND,
                 order: int = 4, t0: float = 0.0, fence: float = 3.0) -> Signal1D:
    raw = roi_mean_series(frames, fps, roi, t0)
    return bandpass_butterworth(iqr_reject(raw, fence), band[0], band[1], order)


def baseline_hr(frames: np.ndarray, fps: float, roi: RoiSpec, window_s: float = 60.0,
                band=DEFAULT_BAND, order: int = 4, t0: float = 0.0, fence: float = 3.0) -> HRSeries:
    """HR per non-overlapping window from the ROI pipeline."""
    bvp = baseline_bvp(frames, fps, roi, band, order, t0, fence)
    peaks = detect_peaks(bvp)
    return hr_from_peaks(peaks, fps, window_s, len(bvp), t0=t0)


def load_roi_csv(path) -> Dict[Tuple[str, str], RoiSpec]:
    out = {}
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            roi = RoiSpec(r["participant"], r["kind"], int(r["x0"]), int(r["y0"]),
                          int(r["x1"]), int(r["y1"]))
            out[(roi.participant, roi.kind)] = roi
    return out


def save_roi_csv(rois: List[RoiSpec], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["participant", "kind", "x0", "y0", "x1", "y1"])
        for r in rois:
            w.writerow([r.participant, r.kind, r.x0, r.y0, r.x1, r.y1])
