"""Five-number HR summaries and a late-fusion head for downstream video classifiers."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from typing import Dict, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .signal_core import HRSeries

N_FEATURES = 5
N_CLASSES = 4
PROFICIENCY_CLASSES = ("novice", "early_expert", "intermediate_expert", "late_expert")


@dataclass(frozen=True)
class HRFeatureVector:
    mean_bpm: float
    std_bpm: float
    min_bpm: float
    max_bpm: float
    mean_abs_change_bpm: float

    def __post_init__(self):
        eps = 1e-9
        if not (self.min_bpm - eps <= self.mean_bpm <= self.max_bpm + eps):
            raise ValueError("mean outside [min, max]")
        if self.std_bpm < 0 or self.mean_abs_change_bpm < 0:
            raise ValueError("std and mean change must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))


def extract_features(hr: HRSeries) -> HRFeatureVector:
    """Mean, population STD, min, max and mean absolute change over valid windows in time order."""
    v = np.asarray(hr.values_bpm, dtype=np.float64)[np.asarray(hr.valid, dtype=bool)]
    if v.size < 2:
        raise ValueError(f"need at least 2 valid HR windows, got {v.size}")
    return HRFeatureVector(float(v.mean()), float(v.std()), float(v.min()), float(v.max()),
                           float(np.mean(np.abs(np.diff(v)))))


class FeatureNormalizer:
    """Z-score with statistics fitted on training vectors only."""

    def __init__(self, eps: float = 1e-8):
        self.eps = eps
        self.mean: Optional[np.ndarray] = None
        self.std: Optional[np.ndarray] = None

    def fit(self, train: Sequence[HRFeatureVector]) -> "FeatureNormalizer":
        x = np.stack([f.as_array() for f in train])
        self.mean, self.std = x.mean(axis=0), x.std(axis=0)
        return self

    def transform(self, feats: Sequence[HRFeatureVector]) -> np.ndarray:
        if self.mean is None:
            raise RuntimeError("normalizer is not fitted")
        x = np.stack([f.as_array() for f in feats])
        return (x - self.mean) / np.maximum(self.std, self.eps)


class FusionHead(nn.Module):
    """Bias-free 5->10 feature projection concatenated with a backbone embedding, then a linear classifier."""

    def __init__(self, embed_dim: int, n_classes: int = N_CLASSES, feature_dim: int = 10):
        super().__init__()
        self.embed_dim = embed_dim
        self.feature_proj = nn.Linear(N_FEATURES, feature_dim, bias=False)
        self.classifier = nn.Linear(embed_dim + feature_dim, n_classes)

    def forward(self, features: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {features.shape[-1]}")
        if embedding.shape[-1] != self.embed_dim:
            raise ValueError(f"expected embedding dim {self.embed_dim}, got {embedding.shape[-1]}")
        return self.classifier(torch.cat([embedding, self.feature_proj(features)], dim=-1))


def save_features_csv(feats: Dict[str, HRFeatureVector], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["video_id", *HRFeatureVector.names()])
        for vid, fv in feats.items():
            w.writerow([vid, *(f"{x:.6f}" for x in fv.as_array())])


def load_features_csv(path) -> Dict[str, HRFeatureVector]:
    out = {}
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            out[r["video_id"]] = HRFeatureVector(*(float(r[n]) for n in HRFeatureVector.names()))
    return out
