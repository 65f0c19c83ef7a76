"""Nested run configuration loaded from YAML, with unknown-key rejection and a content hash."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from .model import ModelConfig
from .signal_core import DEFAULT_BAND
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_participants: int = 1
    duration_s: float = 300.0
    fps: float = 30.0
    frame_size: Tuple[int, int] = (48, 128)
    hr_bpm: float = 72.0
    hr_step_bpm: float = 6.0  # base HR increment between consecutive participants
    activities: Optional[List[Tuple[str, float, float]]] = None
    motion_gain: float = 1.0
    pulse_amplitude: float = 0.6
    specular_amplitude: float = 0.5
    noise_sigma: float = 3.0
    ppg_offset_s: float = 0.7
    ecg_offset_s: float = -1.3
    ppg_drift_ppm: float = 20.0
    ecg_drift_ppm: float = -15.0


@dataclass
class IngestConfig:
    anchor_s: float = 20.0
    max_lag_s: float = 10.0
    min_corr: float = 0.3
    validation_window_s: float = 30.0
    validation_slide_s: float = 1.0
    exclusion_threshold_bpm: float = 3.0


@dataclass
class PreprocessConfig:
    T: int = 128
    h: int = 48
    w: int = 128
    fps_mode: str = "30"


@dataclass
class FoldConfig:
    k: int = 5
    n_val: int = 2
    # explicit roles override k-fold planning (small synthetic sets)
    train: Optional[List[str]] = None
    val: Optional[List[str]] = None
    test: Optional[List[str]] = None


@dataclass
class EvalConfig:
    window_s: float = 60.0
    band: Tuple[float, float] = DEFAULT_BAND
    order: int = 4


@dataclass
class BaselineConfig:
    window_s: float = 60.0
    band: Tuple[float, float] = DEFAULT_BAND
    order: int = 4
    iqr_fence: float = 3.0
    roi_csv: Optional[str] = None


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs"
    synth: SynthConfig = field(default_factory=SynthConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    folds: FoldConfig = field(default_factory=FoldConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def to_dict(self) -> Dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for key, value in data.items():
        tp = hints[key]
        path = f"{where}.{key}" if where else key
        if dataclasses.is_dataclass(tp):
            kwargs[key] = _build(tp, value, path)
        else:
            kwargs[key] = _coerce(tp, value, path)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where or 'config'}: {e}") from e


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if value is None:
        if origin is typing.Union and type(None) in args:
            return None
        raise ConfigError(f"{path}: must not be null")
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if origin in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(value) != len(args):
                raise ConfigError(f"{path}: expected {len(args)} items")
            return tuple(_coerce(a, v, path) for a, v in zip(args, value))
        item = args[0] if args else Any
        seq = [_coerce(item, v, path) for v in value]
        return tuple(seq) if origin is tuple else seq
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp in (int, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        if tp is int and float(value) != int(value):
            raise ConfigError(f"{path}: expected an integer")
        return tp(value)
    if tp is str:
        return str(value)
    return value


def config_from_dict(data: Optional[dict]) -> RunConfig:
    return _build(RunConfig, data or {}, "")


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Read YAML (or defaults when ``path`` is None) and apply top-level overrides."""
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        loaded = yaml.safe_load(text)
        data = loaded or {}
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return config_from_dict(data)


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
