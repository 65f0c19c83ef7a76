"""Desk-scale experiments on synthetic recordings with generator ground truth."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baseline import RoiSpec, baseline_hr
from .ingest import SyncedRecording, sync_streams
from .model import ModelConfig
from .preprocess import Clip, resample_fps, window_clips
from .signal_core import HRSeries, MetricsReport, compute_metrics
from .synth import GroundTruth, SynthSpec, corrupt_span, generate, skin_eye_rois
from .training import EvalResult, StitchedSegment, TrainConfig, evaluate_clips, train_model

log = logging.getLogger(__name__)


@dataclass
class MiniDatasetConfig:
    """Synthetic participants with motion bursts for learned-path experiments."""
    n_participants: int = 4
    duration_s: float = 180.0
    base_hr: Tuple[float, ...] = (62.0, 74.0, 86.0, 98.0)
    hr_swing: float = 4.0
    activities: Tuple[Tuple[str, float, float], ...] = (("office", 0.0, 90.0), ("walking", 90.0, 180.0))
    n_bursts: int = 6
    burst_s: float = 3.0
    burst_gain: float = 3.0
    burst_margin_s: float = 25.0
    test_variants: int = 4  # independently corrupted copies of each test participant
    model_hw: Tuple[int, int] = (12, 32)
    T: int = 128
    seed: int = 0

    def __post_init__(self):
        if len(self.base_hr) < self.n_participants:
            raise ValueError("need one base HR per participant")


@dataclass
class Participant:
    pid: str
    truth: GroundTruth
    clean: SyncedRecording
    corrupted: List[SyncedRecording]
    bursts: List[List[Tuple[float, float]]] = field(default_factory=list)


def burst_spans(duration_s: float, n: int, length_s: float, margin_s: float,
                rng: np.random.Generator) -> List[Tuple[float, float]]:
    """``n`` non-overlapping spans placed in equal slots away from the sync anchors."""
    slots = np.linspace(margin_s, duration_s - margin_s, n + 1)
    spans = []
    for a, b in zip(slots[:-1], slots[1:]):
        s = rng.uniform(a, max(a, b - length_s))
        spans.append((float(s), float(min(s + length_s, b))))
    return spans


def make_participant(cfg: MiniDatasetConfig, i: int, n_variants: int = 1,
                     spec_overrides: Optional[dict] = None) -> Participant:
    """One participant: a clean recording and ``n_variants`` burst-corrupted copies of it."""
    rng = np.random.default_rng([cfg.seed, i])
    hr = cfg.base_hr[i]
    d = cfg.duration_s
    spec = SynthSpec(duration_s=d, hr_profile=[(0.0, hr - cfg.hr_swing), (d / 2, hr + cfg.hr_swing), (d, hr)],
                     activities=list(cfg.activities), participant=f"P{i:02d}", **(spec_overrides or {}))
    raw, truth = generate(spec, seed=int(rng.integers(2 ** 31)))
    variants, all_spans = [], []
    for v in range(n_variants):
        spans = burst_spans(d, cfg.n_bursts, cfg.burst_s, cfg.burst_margin_s, rng)
        bad = raw
        for a, b in spans:
            bad = corrupt_span(bad, a, b, cfg.burst_gain, seed=int(rng.integers(2 ** 31)))
        rec = sync_streams(bad)
        rec.meta["recording"] = f"corrupt{v}"
        variants.append(rec)
        all_spans.append(spans)
    clean = sync_streams(raw)
    clean.meta["recording"] = "clean"
    return Participant(spec.participant, truth, clean, variants, all_spans)


def build_mini_dataset(cfg: MiniDatasetConfig, test_roles: Sequence[int] = (3,)) -> List[Participant]:
    return [make_participant(cfg, i, cfg.test_variants if i in test_roles else 1)
            for i in range(cfg.n_participants)]


def truth_gt_fn(truth: Dict[str, GroundTruth]):
    """Reference HR from generator beat times at the predicted windows."""
    def fn(seg: StitchedSegment, pred: HRSeries) -> HRSeries:
        return truth[seg.participant].hr_windows(pred.window_starts, pred.window_s)
    return fn


def tiny_model_config(cfg: MiniDatasetConfig, **kw) -> ModelConfig:
    base = dict(T=cfg.T, h=cfg.model_hw[0], w=cfg.model_hw[1], embed_dim=16, channels=(8, 16, 16, 16),
                resnet_width=4, imu_hidden=8)
    base.update(kw)
    return ModelConfig(**base)


def clips_for(parts: Sequence[Participant], cfg: MiniDatasetConfig, corrupted: bool,
              fps_mode: str = "30") -> List[Clip]:
    out = []
    for p in parts:
        for rec in (p.corrupted if corrupted else [p.clean]):
            out += window_clips(resample_fps(rec, fps_mode), cfg.T, cfg.model_hw[0], cfg.model_hw[1])
    return out


@dataclass
class LearnedRun:
    seed: int
    clean: EvalResult
    corrupted_full: EvalResult
    corrupted_ablated: EvalResult
    seconds: float

    def summary(self) -> dict:
        return {"seed": self.seed, "clean_mae": self.clean.overall.mae_bpm,
                "corrupted_full_mae": self.corrupted_full.overall.mae_bpm,
                "corrupted_ablated_mae": self.corrupted_ablated.overall.mae_bpm,
                "seconds": self.seconds}


def learned_benchmark(parts: Sequence[Participant], cfg: MiniDatasetConfig, seeds: Sequence[int],
                      epochs: int = 15, model_kw: Optional[dict] = None,
                      train_roles=(0, 1), val_roles=(2,), test_roles=(3,)) -> List[LearnedRun]:
    """Train full and ablated models on burst-corrupted participants, then score the test participant.

    The full model is scored on the clean and the corrupted copy of the test
    participant; the ablated model (no spatial attention, no MITA) on the
    corrupted copy only.
    """
    train = clips_for([parts[i] for i in train_roles], cfg, corrupted=True)
    val = clips_for([parts[i] for i in val_roles], cfg, corrupted=True)
    test = [parts[i] for i in test_roles]
    test_clean = clips_for(test, cfg, corrupted=False)
    test_bad = clips_for(test, cfg, corrupted=True)
    gt = truth_gt_fn({p.pid: p.truth for p in parts})
    runs = []
    for seed in seeds:
        t0 = time.time()
        tc = TrainConfig(epochs=epochs, seed=int(seed))
        full, _ = train_model(tiny_model_config(cfg, **(model_kw or {})), train, val, tc, tag=f"full{seed}")
        abl, _ = train_model(tiny_model_config(cfg, use_sa=False, use_mita=False, **(model_kw or {})),
                             train, val, tc, tag=f"ablated{seed}")
        runs.append(LearnedRun(int(seed), evaluate_clips(full, test_clean, gt_fn=gt),
                               evaluate_clips(full, test_bad, gt_fn=gt),
                               evaluate_clips(abl, test_bad, gt_fn=gt), time.time() - t0))
        log.info("seed %s: %s", seed, runs[-1].summary())
    return runs


def fps_experiment(parts: Sequence[Participant], cfg: MiniDatasetConfig, mode: str, epochs: int = 15,
                   seed: int = 0, corrupted: bool = True, train_roles=(0, 1), val_roles=(2,),
                   test_roles=(3,)) -> EvalResult:
    """Train and test with the same frame-rate transform applied to every recording."""
    train = clips_for([parts[i] for i in train_roles], cfg, corrupted, mode)
    val = clips_for([parts[i] for i in val_roles], cfg, corrupted, mode)
    test = clips_for([parts[i] for i in test_roles], cfg, corrupted, mode)
    model, _ = train_model(tiny_model_config(cfg), train, val, TrainConfig(epochs=epochs, seed=seed),
                           tag=f"fps_{mode}")
    return evaluate_clips(model, test, gt_fn=truth_gt_fn({p.pid: p.truth for p in parts}))


def baseline_benchmark(raw_frames: np.ndarray, fps: float, truth: GroundTruth, frame_size,
                       participant: str = "S00", window_s: float = 60.0) -> Dict[str, MetricsReport]:
    """Skin- and eye-ROI baseline HR against generator truth."""
    skin, eyes = skin_eye_rois(frame_size)
    out = {}
    for kind, box in (("skin", skin), ("eyes", eyes)):
        hr = baseline_hr(raw_frames, fps, RoiSpec(participant, kind, *box), window_s)
        out[kind] = compute_metrics(hr, truth.hr_windows(hr.window_starts, window_s))
    return out
