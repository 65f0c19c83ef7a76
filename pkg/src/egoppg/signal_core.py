"""1-D signal containers, filtering, peak detection, HR derivation and metrics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import signal as sps

HR_VALID_MIN = 30.0   # bpm
HR_VALID_MAX = 220.0  # bpm
DEFAULT_BAND = (0.5, 2.8)  # Hz, i.e. 30-168 bpm
DEFAULT_MIN_HR = 30.0
DEFAULT_MAX_HR = 168.0


@dataclass
class Signal1D:
    samples: np.ndarray
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if not self.fs > 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if self.samples.size < 1:
            raise ValueError("Signal1D needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Signal1D samples must be finite")
        self.fs = float(self.fs)
        self.t0 = float(self.t0)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.fs

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def replace(self, samples: np.ndarray) -> "Signal1D":
        return Signal1D(samples, self.fs, self.t0)

    def slice_time(self, start_s: float, end_s: float) -> "Signal1D":
        """Samples with timestamps in ``[start_s, end_s)``."""
        i0 = max(int(np.ceil((start_s - self.t0) * self.fs - 1e-9)), 0)
        i1 = min(int(np.ceil((end_s - self.t0) * self.fs - 1e-9)), self.samples.size)
        if i1 <= i0:
            raise ValueError(f"empty slice [{start_s}, {end_s}) of signal")
        return Signal1D(self.samples[i0:i1], self.fs, self.t0 + i0 / self.fs)

    def resample_at(self, times: np.ndarray) -> np.ndarray:
        """Linear interpolation of the signal at arbitrary timestamps."""
        return np.interp(times, self.times, self.samples)


@dataclass
class HRSeries:
    """Heart-rate values over fixed windows.

    Invalid windows carry ``NaN`` and ``valid=False``. ``step_s`` equals
    ``window_s`` for the non-overlapping evaluation windows; sliding-window
    series (sensor validation) use a smaller step.
    """

    values_bpm: np.ndarray
    window_s: float
    window_starts: np.ndarray
    valid: Optional[np.ndarray] = None
    step_s: Optional[float] = None

    def __post_init__(self):
        self.values_bpm = np.asarray(self.values_bpm, dtype=np.float64).ravel()
        self.window_starts = np.asarray(self.window_starts, dtype=np.float64).ravel()
        if self.values_bpm.shape != self.window_starts.shape:
            raise ValueError("values_bpm and window_starts differ in length")
        if self.step_s is None:
            self.step_s = float(self.window_s)
        in_range = (self.values_bpm >= HR_VALID_MIN) & (self.values_bpm <= HR_VALID_MAX)
        if self.valid is None:
            self.valid = np.isfinite(self.values_bpm)
        self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.values_bpm) & in_range
        self.values_bpm = np.where(self.valid, self.values_bpm, np.nan)
        if np.any(np.diff(self.window_starts) <= 0):
            raise ValueError("window_starts must be strictly increasing")

    def __len__(self) -> int:
        return self.values_bpm.size

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def shifted(self, dt: float) -> "HRSeries":
        return HRSeries(self.values_bpm.copy(), self.window_s, self.window_starts + dt,
                        self.valid.copy(), self.step_s)

    @classmethod
    def concat(cls, series: Sequence["HRSeries"]) -> "HRSeries":
        series = [s for s in series if len(s)]
        if not series:
            return cls(np.empty(0), 60.0, np.empty(0))
        return cls(np.concatenate([s.values_bpm for s in series]), series[0].window_s,
                   np.concatenate([s.window_starts for s in series]),
                   np.concatenate([s.valid for s in series]), series[0].step_s)


@dataclass
class MetricsReport:
    mae_bpm: float
    rmse_bpm: float
    mape_pct: float
    pearson_r: float
    n_windows: int
    extra: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"MAE": self.mae_bpm, "RMSE": self.rmse_bpm, "MAPE": self.mape_pct,
                "r": self.pearson_r, "n_windows": self.n_windows}


def bandpass_butterworth(sig: Signal1D, low_hz: float = DEFAULT_BAND[0],
                         high_hz: float = DEFAULT_BAND[1], order: int = 4) -> Signal1D:
    """Zero-phase Butterworth bandpass (forward-backward, second-order sections).

    ``order`` is the order of the prototype handed to ``scipy.signal.butter``.
    """
    nyq = sig.fs / 2.0
    if order not in (2, 4):
        raise ValueError(f"order must be 2 or 4, got {order}")
    if high_hz >= nyq:
        raise ValueError(f"high cutoff {high_hz} Hz is not below Nyquist ({nyq} Hz); "
                         "sampling rate too low for this band")
    if not 0 < low_hz < high_hz:
        raise ValueError(f"need 0 < low_hz < high_hz, got {low_hz}, {high_hz}")
    sos = butter_sos(low_hz, high_hz, sig.fs, order)
    x = sig.samples
    if x.size < 2:
        return sig.replace(np.zeros_like(x))
    padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
    y = sps.sosfiltfilt(sos, x, padlen=padlen)
    return sig.replace(y)


def butter_sos(low_hz: float, high_hz: float, fs: float, order: int) -> np.ndarray:
    return sps.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")


def detect_peaks(bvp: Signal1D, min_hr_bpm: float = DEFAULT_MIN_HR,
                 max_hr_bpm: float = DEFAULT_MAX_HR,
                 prominence: Optional[float] = None) -> np.ndarray:
    """Local maxima at least ``fs*60/max_hr_bpm`` samples apart.

    The default prominence floor is 0.3 times the signal standard deviation.
    Flat signals give an empty index array.
    """
    if not 0 < min_hr_bpm < max_hr_bpm:
        raise ValueError("need 0 < min_hr_bpm < max_hr_bpm")
    x = bvp.samples
    scale = float(np.std(x))
    if x.size < 3 or scale <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        return np.empty(0, dtype=np.int64)
    distance = max(1, int(np.floor(bvp.fs * 60.0 / max_hr_bpm)))
    if prominence is None:
        prominence = 0.3 * scale
    peaks, _ = sps.find_peaks(x, distance=distance, prominence=prominence)
    return peaks.astype(np.int64)


def hr_from_peaks(peaks: np.ndarray, fs: float, window_s: float, total_len: int,
                  t0: float = 0.0, step_s: Optional[float] = None) -> HRSeries:
    """HR per window as 60 / mean inter-beat interval of the peaks inside it.

    Windows start at multiples of ``step_s`` (default: ``window_s``); a
    trailing partial window is dropped and windows with fewer than two
    peaks are flagged invalid.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    step_s = window_s if step_s is None else step_s
    win = int(round(window_s * fs))
    step = int(round(step_s * fs))
    peaks = np.sort(np.asarray(peaks, dtype=np.int64))
    starts = np.arange(0, total_len - win + 1, step) if total_len >= win else np.empty(0, int)
    values = np.full(starts.size, np.nan)
    lo = np.searchsorted(peaks, starts, side="left")
    hi = np.searchsorted(peaks, starts + win, side="left")
    for i, (a, b) in enumerate(zip(lo, hi)):
        if b - a >= 2:
            ibi = (peaks[b - 1] - peaks[a]) / (b - a - 1) / fs
            values[i] = 60.0 / ibi
    return HRSeries(values, float(window_s), t0 + starts / fs, step_s=float(step_s))


def hr_from_bvp(bvp: Signal1D, window_s: float = 60.0, band=DEFAULT_BAND, order: int = 4,
                min_hr_bpm: float = DEFAULT_MIN_HR, max_hr_bpm: float = DEFAULT_MAX_HR,
                step_s: Optional[float] = None) -> HRSeries:
    """Bandpass, detect peaks and window the HR of a pulse waveform."""
    filtered = bandpass_butterworth(bvp, band[0], band[1], order)
    peaks = detect_peaks(filtered, min_hr_bpm, max_hr_bpm)
    return hr_from_peaks(peaks, bvp.fs, window_s, len(bvp), t0=bvp.t0, step_s=step_s)


def align_series(pred: HRSeries, gt: HRSeries, tol: float = 1e-3):
    """Pairs of (pred, gt) values whose window starts coincide and are both valid."""
    order = np.argsort(gt.window_starts)
    gt_starts = gt.window_starts[order]
    idx = np.searchsorted(gt_starts, pred.window_starts)
    p_out, g_out, t_out = [], [], []
    for i, j in enumerate(idx):
        for cand in (j - 1, j):
            if 0 <= cand < gt_starts.size and abs(gt_starts[cand] - pred.window_starts[i]) <= tol:
                k = order[cand]
                if pred.valid[i] and gt.valid[k]:
                    p_out.append(pred.values_bpm[i])
                    g_out.append(gt.values_bpm[k])
                    t_out.append(pred.window_starts[i])
                break
    return np.array(p_out), np.array(g_out), np.array(t_out)


def metrics_from_pairs(pred: np.ndarray, gt: np.ndarray) -> MetricsReport:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.size == 0:
        raise ValueError("no valid aligned windows to compute metrics on")
    err = pred - gt
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mape = float(np.mean(np.abs(err) / np.abs(gt)) * 100.0)
    r = float("nan")
    if pred.size >= 2 and np.std(pred) > 0 and np.std(gt) > 0:
        pc = pred - pred.mean()
        gc = gt - gt.mean()
        r = float(np.clip(np.sum(pc * gc) / np.sqrt(np.sum(pc ** 2) * np.sum(gc ** 2)), -1, 1))
    return MetricsReport(mae, rmse, mape, r, int(pred.size))


def compute_metrics(pred: HRSeries, gt: HRSeries) -> MetricsReport:
    """MAE, RMSE, MAPE and Pearson r over timestamp-aligned valid windows."""
    p, g, _ = align_series(pred, gt)
    return metrics_from_pairs(p, g)


def pulse_snr_db(sig: Signal1D, f0_hz: float, band=DEFAULT_BAND, half_width_hz: float = 0.1) -> float:
    """Power near ``f0_hz`` and its first harmonic relative to the rest of ``band``."""
    x = sig.samples - sig.samples.mean()
    freqs, pxx = sps.periodogram(x, fs=sig.fs)
    in_band = (freqs >= band[0]) & (freqs <= band[1])
    near = (np.abs(freqs - f0_hz) <= half_width_hz) | (np.abs(freqs - 2 * f0_hz) <= half_width_hz)
    sig_p = pxx[in_band & near].sum()
    noise_p = pxx[in_band & ~near].sum()
    return float(10 * np.log10((sig_p + 1e-30) / (noise_p + 1e-30)))


def dominant_frequency(sig: Signal1D, band=DEFAULT_BAND) -> float:
    x = sig.samples - sig.samples.mean()
    freqs = np.fft.rfftfreq(x.size, 1.0 / sig.fs)
    mag = np.abs(np.fft.rfft(x))
    sel = (freqs >= band[0]) & (freqs <= band[1])
    return float(freqs[sel][np.argmax(mag[sel])])


# --- CSV interchange -------------------------------------------------------

PathLike = Union[str, Path]


def save_signal_csv(sig: Signal1D, path: PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["timestamp_s", "value"])
        for t, v in zip(sig.times, sig.samples):
            w.writerow([f"{t:.6f}", repr(float(v))])


def load_signal_csv(path: PathLike, fs: Optional[float] = None) -> Signal1D:
    """Two-column CSV (timestamp_s, value); ``fs`` is inferred when not given."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    if fs is None:
        if t.size < 2:
            raise ValueError(f"cannot infer sampling rate from {path}")
        fs = 1.0 / float(np.median(np.diff(t)))
    return Signal1D(v, fs, float(t[0]))


def save_hr_csv(hr: HRSeries, path: PathLike) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["window_start_s", "hr_bpm", "valid"])
        for t, v, ok in zip(hr.window_starts, hr.values_bpm, hr.valid):
            w.writerow([f"{t:.6f}", "" if not ok else f"{v:.6f}", int(ok)])


def load_hr_csv(path: PathLike, window_s: float = 60.0) -> HRSeries:
    starts, vals, valid = [], [], []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            starts.append(float(row["window_start_s"]))
            ok = bool(int(row["valid"]))
            vals.append(float(row["hr_bpm"]) if ok else np.nan)
            valid.append(ok)
    return HRSeries(np.array(vals), window_s, np.array(starts), np.array(valid, dtype=bool))
