"""Participant-split cross-validation, training loop, evaluation and result tables."""
from __future__ import annotations

import copy
import csv
import json
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from .model import ModelConfig, PulseFormer, save_checkpoint
from .preprocess import Clip, ClipBatch, ClipMeta, augment
from .signal_core import (
    DEFAULT_BAND,
    HRSeries,
    MetricsReport,
    Signal1D,
    align_series,
    bandpass_butterworth,
    detect_peaks,
    hr_from_peaks,
    metrics_from_pairs,
)

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("Model", "MAE", "RMSE", "MAPE", "r")


class TrainingDiverged(RuntimeError):
    pass


# --- folds ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    fold: int
    test: Tuple[str, ...]
    val: Tuple[str, ...]
    train: Tuple[str, ...]

    def __post_init__(self):
        roles = [set(self.test), set(self.val), set(self.train)]
        if sum(len(r) for r in roles) != len(set().union(*roles)):
            raise ValueError(f"fold {self.fold}: a participant appears in two roles")
        if not self.test or not self.train:
            raise ValueError(f"fold {self.fold}: empty test or train set")

    @property
    def participants(self) -> Tuple[str, ...]:
        return tuple(sorted(set(self.test) | set(self.val) | set(self.train)))

    def role(self, participant: str) -> Optional[str]:
        for name in ("test", "val", "train"):
            if participant in getattr(self, name):
                return name
        return None


def make_folds(participants: Sequence[str], k: int = 5, n_val: int = 2, seed: int = 0) -> List[FoldPlan]:
    """Participant-wise k-fold plans; validation drawn from the non-test participants."""
    parts = sorted(set(participants))
    if len(parts) != len(participants):
        raise ValueError("duplicate participant ids")
    if len(parts) < 8 or len(parts) < k + n_val + 1:
        raise ValueError(f"need at least {max(8, k + n_val + 1)} participants, got {len(parts)}")
    rng = np.random.default_rng(seed)
    order = [parts[i] for i in rng.permutation(len(parts))]
    groups = np.array_split(np.arange(len(order)), k)
    plans = []
    for f, g in enumerate(groups):
        test = [order[i] for i in g]
        rest = [p for p in order if p not in test]
        val_idx = rng.choice(len(rest), size=n_val, replace=False)
        val = [rest[i] for i in sorted(val_idx)]
        train = [p for p in rest if p not in val]
        plans.append(FoldPlan(f, tuple(sorted(test)), tuple(sorted(val)), tuple(sorted(train))))
    audit_folds(plans, parts)
    return plans


def audit_folds(plans: Sequence[FoldPlan], participants: Sequence[str]) -> None:
    """Raise unless roles are disjoint per fold and every participant is tested exactly once."""
    everyone = set(participants)
    tested: Dict[str, int] = {p: 0 for p in everyone}
    for plan in plans:
        if set(plan.participants) != everyone:
            raise ValueError(f"fold {plan.fold} does not cover all participants")
        for p in plan.test:
            tested[p] += 1
    bad = {p: n for p, n in tested.items() if n != 1}
    if bad:
        raise ValueError(f"participants not tested exactly once: {bad}")


def audit_clips(plan: FoldPlan, train: Sequence[Clip], val: Sequence[Clip], test: Sequence[Clip]) -> dict:
    """Identifier intersections between the clip sets; all must be empty."""
    ids = {name: {c.meta.participant for c in clips} for name, clips in
           (("train", train), ("val", val), ("test", test))}
    report = {"train&test": sorted(ids["train"] & ids["test"]),
              "val&test": sorted(ids["val"] & ids["test"]),
              "train&val": sorted(ids["train"] & ids["val"])}
    for name, allowed in (("train", plan.train), ("val", plan.val), ("test", plan.test)):
        stray = ids[name] - set(allowed)
        if stray:
            report[f"{name}_outside_plan"] = sorted(stray)
    if any(report.values()):
        raise ValueError(f"fold {plan.fold} leaks participants: {report}")
    return report


def split_clips(plan: FoldPlan, clips: Sequence[Clip]):
    train = [c for c in clips if c.meta.participant in plan.train]
    val = [c for c in clips if c.meta.participant in plan.val]
    test = [c for c in clips if c.meta.participant in plan.test]
    audit_clips(plan, train, val, test)
    return train, val, test


# --- training ------------------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 4
    epochs: int = 100
    lr: float = 0.0009
    seed: int = 0
    augment: bool = True
    eval_batch_size: int = 16

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.lr <= 0:
            raise ValueError("batch_size, epochs and lr must be positive")


@dataclass
class TrainResult:
    curve: List[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    checkpoint: Optional[str] = None
    seconds: float = 0.0


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)


def _batches(clips: Sequence[Clip], size: int) -> Iterable[ClipBatch]:
    for s in range(0, len(clips), size):
        yield ClipBatch.collate(clips[s:s + size])


def _forward(model: nn.Module, batch: ClipBatch) -> torch.Tensor:
    return model(batch.x, batch.imu)


def evaluate_loss(model: nn.Module, clips: Sequence[Clip], batch_size: int = 16) -> float:
    model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for b in _batches(clips, batch_size):
            total += float(((_forward(model, b) - b.y) ** 2).sum())
            n += b.y.numel()
    return total / max(n, 1)


def train_model(model_cfg: ModelConfig, train_clips: Sequence[Clip], val_clips: Sequence[Clip],
                cfg: TrainConfig, out_dir=None, tag: str = "model") -> Tuple[PulseFormer, TrainResult]:
    """Adam on MSE; the epoch with the lowest validation loss is kept.

    Validation falls back to the training loss when no validation clips exist.
    """
    if not train_clips:
        raise ValueError("no training clips")
    t_start = time.time()
    seed_everything(cfg.seed)
    model = PulseFormer(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    loss_fn = nn.MSELoss()
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult()
    best_state = copy.deepcopy(model.state_dict())
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(train_clips))
        seeds = rng.integers(0, 2 ** 63, size=len(train_clips))
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            clips = [augment(train_clips[i], np.random.default_rng(seeds[i])) if cfg.augment
                     else train_clips[i] for i in idx]
            b = ClipBatch.collate(clips)
            opt.zero_grad()
            loss = loss_fn(_forward(model, b), b.y)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"{tag}: non-finite loss at epoch {epoch}, step {s // cfg.batch_size}; "
                                       f"last finite losses {losses[-3:]}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        train_loss = float(np.mean(losses))
        val_loss = evaluate_loss(model, val_clips, cfg.eval_batch_size) if val_clips else train_loss
        result.curve.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.info("%s epoch %d train %.4f val %.4f", tag, epoch, train_loss, val_loss)
        if val_loss < result.best_val_loss:
            result.best_val_loss, result.best_epoch = val_loss, epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    result.seconds = time.time() - t_start
    if out_dir is not None:
        out = Path(out_dir)
        path = save_checkpoint(model, out / f"{tag}.pt", {"train_config": asdict(cfg),
                                                          "best_epoch": result.best_epoch,
                                                          "best_val_loss": result.best_val_loss})
        result.checkpoint = str(path)
        save_curve_csv(result.curve, out / f"{tag}_curve.csv")
    return model, result


def train_fold(plan: FoldPlan, clips: Sequence[Clip], model_cfg: ModelConfig, cfg: TrainConfig,
               out_dir=None) -> Tuple[PulseFormer, TrainResult]:
    train, val, _ = split_clips(plan, clips)
    return train_model(model_cfg, train, val, cfg, out_dir, tag=f"fold{plan.fold}")


def save_curve_csv(curve: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_loss"])
        w.writeheader()
        w.writerows(curve)


# --- evaluation ----------------------------------------------------------------------

@dataclass
class StitchedSegment:
    participant: str
    activity: str
    segment: int
    t0: float
    fps: float
    values: np.ndarray
    recording: str = ""

    @property
    def key(self) -> Tuple[str, str, int]:
        return (self.participant, self.recording, self.segment)


def predict(model: nn.Module, clips: Sequence[Clip], batch_size: int = 16) -> np.ndarray:
    model.eval()
    out = []
    with torch.no_grad():
        for b in _batches(clips, batch_size):
            out.append(_forward(model, b).numpy())
    return np.concatenate(out) if out else np.zeros((0, 0))


def stitch(clips: Sequence[Clip], values: np.ndarray) -> List[StitchedSegment]:
    """Concatenate per-clip series back into per-segment series in temporal order.

    Clips of one segment must be consecutive windows (index 0, 1, ...).
    """
    groups: Dict[Tuple[str, str, int], List[Tuple[ClipMeta, np.ndarray]]] = {}
    for c, v in zip(clips, values):
        key = (c.meta.participant, c.meta.recording, c.meta.segment)
        groups.setdefault(key, []).append((c.meta, np.asarray(v)))
    out = []
    for key in sorted(groups):
        items = sorted(groups[key], key=lambda mv: mv[0].index)
        idx = [m.index for m, _ in items]
        if idx != list(range(idx[0], idx[0] + len(idx))):
            raise ValueError(f"non-contiguous clips for {key}: {idx}")
        m0 = items[0][0]
        out.append(StitchedSegment(m0.participant, m0.activity, m0.segment, m0.window_start_s, m0.fps,
                                   np.concatenate([v for _, v in items]), m0.recording))
    return out


def diff_to_hr(diff: np.ndarray, fps: float, t0: float = 0.0, window_s: float = 60.0,
               band=DEFAULT_BAND, order: int = 4) -> HRSeries:
    """Integrate a difference-domain BVP, bandpass, detect peaks, HR per window."""
    bvp = Signal1D(np.cumsum(np.asarray(diff, dtype=np.float64)), fps, t0)
    bvp = bandpass_butterworth(bvp, band[0], band[1], order)
    return hr_from_peaks(detect_peaks(bvp), fps, window_s, len(bvp), t0=t0)


GroundTruthFn = Callable[[StitchedSegment, HRSeries], HRSeries]


@dataclass
class EvalResult:
    overall: MetricsReport
    per_activity: Dict[str, MetricsReport]
    pairs: List[dict]
    pred_hr: Dict[Tuple[str, str, int], HRSeries] = field(default_factory=dict)
    gt_hr: Dict[Tuple[str, str, int], HRSeries] = field(default_factory=dict)


def evaluate_clips(model: nn.Module, clips: Sequence[Clip], window_s: float = 60.0,
                   gt_fn: Optional[GroundTruthFn] = None, band=DEFAULT_BAND, order: int = 4,
                   batch_size: int = 16) -> EvalResult:
    """HR metrics from model predictions, pooled over windows, overall and per activity.

    Reference HR defaults to the same pipeline applied to the clips' label
    series (contact PPG); ``gt_fn`` may supply it from another source.
    """
    preds = stitch(clips, predict(model, clips, batch_size))
    labels = {s.key: s for s in stitch(clips, np.stack([c.y for c in clips]))}
    pairs, pred_hr, gt_hr = [], {}, {}
    for seg in preds:
        p = diff_to_hr(seg.values, seg.fps, seg.t0, window_s, band, order)
        if gt_fn is None:
            lab = labels[seg.key]
            g = diff_to_hr(lab.values, lab.fps, lab.t0, window_s, band, order)
        else:
            g = gt_fn(seg, p)
        pred_hr[seg.key], gt_hr[seg.key] = p, g
        pv, gv, starts = align_series(p, g)
        for a, b, s in zip(pv, gv, starts):
            pairs.append({"participant": seg.participant, "recording": seg.recording,
                          "activity": seg.activity, "segment": seg.segment,
                          "window_start_s": float(s), "pred_bpm": float(a), "gt_bpm": float(b)})
    return summarize_pairs(pairs, pred_hr, gt_hr)


def summarize_pairs(pairs: List[dict], pred_hr=None, gt_hr=None) -> EvalResult:
    if not pairs:
        raise ValueError("no valid aligned windows to compute metrics on")
    overall = metrics_from_pairs([q["pred_bpm"] for q in pairs], [q["gt_bpm"] for q in pairs])
    per = {}
    for act in sorted({q["activity"] for q in pairs}):
        sel = [q for q in pairs if q["activity"] == act]
        per[act] = metrics_from_pairs([q["pred_bpm"] for q in sel], [q["gt_bpm"] for q in sel])
    return EvalResult(overall, per, pairs, pred_hr or {}, gt_hr or {})


def evaluate_fold(model: nn.Module, plan: FoldPlan, clips: Sequence[Clip], window_s: float = 60.0,
                  gt_fn: Optional[GroundTruthFn] = None) -> EvalResult:
    """Evaluate on the fold's test participants only."""
    test = [c for c in clips if c.meta.participant in plan.test]
    if not test:
        raise ValueError(f"fold {plan.fold}: no test clips")
    return evaluate_clips(model, test, window_s, gt_fn)


def aggregate_folds(results: Sequence[EvalResult]) -> Dict[str, MetricsReport]:
    """Both readings of a cross-validated score: mean over folds and pooled windows."""
    keys = ("mae_bpm", "rmse_bpm", "mape_pct", "pearson_r")
    avg = {k: float(np.nanmean([getattr(r.overall, k) for r in results])) for k in keys}
    fold_avg = MetricsReport(**avg, n_windows=sum(r.overall.n_windows for r in results))
    pooled = summarize_pairs([q for r in results for q in r.pairs]).overall
    return {"fold_average": fold_avg, "pooled": pooled}


# --- tables --------------------------------------------------------------------------

def write_table(rows: Dict[str, MetricsReport], path) -> None:
    """CSV with columns Model, MAE, RMSE, MAPE, r."""
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for name, rep in rows.items():
            row = rep.as_row()
            w.writerow({"Model": name, **{k: f"{row[k]:.4f}" for k in TABLE_COLUMNS[1:]}})


def write_activity_table(rows: Dict[str, Dict[str, MetricsReport]], path) -> None:
    """Per-activity MAE, one row per model."""
    acts = sorted({a for per in rows.values() for a in per})
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["Model", *acts])
        for name, per in rows.items():
            w.writerow([name, *(f"{per[a].mae_bpm:.4f}" if a in per else "" for a in acts)])


def write_pairs(pairs: Sequence[dict], path) -> None:
    fields = ["participant", "recording", "activity", "segment", "window_start_s", "pred_bpm", "gt_bpm"]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        w.writerows(pairs)


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=str))
