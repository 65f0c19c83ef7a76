"""PulseFormer: 3-D CNN backbone with spatial attention and motion-informed temporal attention."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.models.resnet import BasicBlock


@dataclass
class ModelConfig:
    T: int = 128
    h: int = 48
    w: int = 128
    embed_dim: int = 128
    channels: Tuple[int, ...] = (32, 64, 64, 64)
    # one pooling per stage; True pools time as well as space
    temporal_pool: Tuple[bool, ...] = (False, True, True, False)
    use_sa: bool = True
    use_mita: bool = True
    resnet_width: int = 64
    imu_hidden: int = 32
    imu_kernel: int = 5
    sa_kernel: int = 7
    attn_bias_init: float = 1.0

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.temporal_pool = tuple(bool(b) for b in self.temporal_pool)
        if len(self.channels) != len(self.temporal_pool):
            raise ValueError("channels and temporal_pool must have one entry per stage")
        if min(self.T, self.h, self.w, self.embed_dim, self.resnet_width, *self.channels) < 1:
            raise ValueError("model sizes must be positive")
        if self.T % (2 ** sum(self.temporal_pool)) != 0:
            raise ValueError(f"T={self.T} must be divisible by 2**(temporal pools)")

    @property
    def n_pool(self) -> int:
        return len(self.channels)

    @classmethod
    def tiny(cls, **kw) -> "ModelConfig":
        base = dict(T=8, h=8, w=16, embed_dim=16, channels=(4, 8, 8, 8), resnet_width=4, imu_hidden=8)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["temporal_pool"] = list(self.temporal_pool)
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class AttentionMaps:
    spatial: List[torch.Tensor] = field(default_factory=list)  # (B, T_s, 1, h_s, w_s) per stage
    temporal: Optional[torch.Tensor] = None                      # (B, T, 1, 1, 1)


class SpatialAttention(nn.Module):
    """Per-frame map sigmoid(conv7x7([mean_c F; max_c F])) gating all channels."""

    def __init__(self, kernel: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel, padding=kernel // 2)

    def forward(self, f: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        # f: (N, C, T, h, w); the map is computed frame by frame
        n, c, t, h, w = f.shape
        avg = f.mean(dim=1)
        mx = f.amax(dim=1)
        s = torch.stack([avg, mx], dim=2).reshape(n * t, 2, h, w)
        m = torch.sigmoid(self.conv(s))
        # keep the map strictly inside (0, 1) where float sigmoid saturates
        eps = torch.finfo(m.dtype).eps
        m = m.clamp(eps, 1.0 - eps).reshape(n, t, 1, h, w)
        return f * m.permute(0, 2, 1, 3, 4), m


def spatial_attention(f: torch.Tensor, module: SpatialAttention) -> Tuple[torch.Tensor, torch.Tensor]:
    """Apply ``module`` to a single clip laid out as ``(T, C, h, w)``."""
    out, m = module(f.permute(1, 0, 2, 3).unsqueeze(0))
    return out[0].permute(1, 0, 2, 3), m[0]


def _conv_bn(cin: int, cout: int, kernel, padding) -> nn.Sequential:
    return nn.Sequential(nn.Conv3d(cin, cout, kernel, padding=padding), nn.BatchNorm3d(cout),
                         nn.ReLU(inplace=True))


class PhysNetBackbone(nn.Module):
    """Encoder-decoder 3-D CNN mapping ``(N, 1, T, h, w)`` to ``(N, T)``.

    Each stage is followed by a max pooling (spatial, optionally temporal);
    spatial attention, when enabled, gates the features just before every
    pooling. Transposed temporal convolutions restore length ``T``.
    """

    def __init__(self, cfg: ModelConfig, use_sa: Optional[bool] = None):
        super().__init__()
        self.cfg = cfg
        use_sa = cfg.use_sa if use_sa is None else use_sa
        ch = cfg.channels
        stages = [_conv_bn(1, ch[0], (1, 5, 5), (0, 2, 2))]
        for i in range(1, len(ch)):
            stages.append(nn.Sequential(_conv_bn(ch[i - 1], ch[i], 3, 1), _conv_bn(ch[i], ch[i], 3, 1)))
        self.stages = nn.ModuleList(stages)
        self.sa = nn.ModuleList([SpatialAttention(cfg.sa_kernel) for _ in ch]) if use_sa else None
        self.bottleneck = nn.Sequential(_conv_bn(ch[-1], ch[-1], 3, 1), _conv_bn(ch[-1], ch[-1], 3, 1))
        ups = []
        for _ in range(sum(cfg.temporal_pool)):
            ups += [nn.ConvTranspose3d(ch[-1], ch[-1], (4, 1, 1), stride=(2, 1, 1), padding=(1, 0, 0)),
                    nn.BatchNorm3d(ch[-1]), nn.ELU(inplace=True)]
        self.upsample = nn.Sequential(*ups)
        self.head = nn.Conv3d(ch[-1], 1, 1)

    def forward(self, x: torch.Tensor, maps: Optional[list] = None) -> torch.Tensor:
        t = x.shape[2]
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if self.sa is not None:
                x, m = self.sa[i](x)
                if maps is not None:
                    maps.append(m)
            kt = 2 if self.cfg.temporal_pool[i] else 1
            x = F.max_pool3d(x, (kt, min(2, x.shape[3]), min(2, x.shape[4])))
        x = self.upsample(self.bottleneck(x))
        x = F.adaptive_avg_pool3d(x, (t, 1, 1))
        return self.head(x).flatten(1)


class ResNet18Encoder(nn.Module):
    """18-layer residual image encoder for single-channel frames, width-scalable."""

    def __init__(self, width: int = 64, in_channels: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, width, 7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)
        layers, cin = [], width
        for i, mult in enumerate((1, 2, 4, 8)):
            cout = width * mult
            stride = 1 if i == 0 else 2
            down = None
            if stride != 1 or cin != cout:
                down = nn.Sequential(nn.Conv2d(cin, cout, 1, stride=stride, bias=False), nn.BatchNorm2d(cout))
            layers.append(nn.Sequential(BasicBlock(cin, cout, stride, down), BasicBlock(cout, cout)))
            cin = cout
        self.layers = nn.Sequential(*layers)
        self.out_dim = cin

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        return torch.flatten(F.adaptive_avg_pool2d(self.layers(x), 1), 1)


class ImuEncoder(nn.Module):
    def __init__(self, dim: int, hidden: int = 32, kernel: int = 5):
        super().__init__()
        self.net = nn.Sequential(nn.Conv1d(1, hidden, kernel, padding=kernel // 2), nn.ReLU(inplace=True),
                                 nn.Conv1d(hidden, dim, kernel, padding=kernel // 2))

    def forward(self, imu: torch.Tensor) -> torch.Tensor:
        # (B, T, 1) -> (B, T, D)
        return self.net(imu.transpose(1, 2)).transpose(1, 2)


def cross_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Single-head ``softmax(Q K^T / sqrt(D)) V``."""
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    return torch.softmax(scores, dim=-1) @ v


class MITA(nn.Module):
    """Motion-informed temporal attention: IMU embeddings query frame embeddings."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.image_encoder = ResNet18Encoder(cfg.resnet_width)
        self.image_proj = nn.Linear(self.image_encoder.out_dim, cfg.embed_dim)
        self.imu_encoder = ImuEncoder(cfg.embed_dim, cfg.imu_hidden, cfg.imu_kernel)
        self.head = nn.Linear(cfg.embed_dim, 1)
        # start close to the identity gate so early training sees the raw clip
        nn.init.normal_(self.head.weight, std=1e-2)
        nn.init.constant_(self.head.bias, cfg.attn_bias_init)

    def forward(self, frames: torch.Tensor, imu: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        # frames: (B, T, 1, h, w); imu: (B, T, 1)
        b, t = frames.shape[:2]
        f_e = self.image_proj(self.image_encoder(frames.reshape(b * t, *frames.shape[2:]))).reshape(b, t, -1)
        i_e = self.imu_encoder(imu)
        a = cross_attention(i_e, f_e, f_e)
        t_attn = self.head(a).reshape(b, t, 1, 1, 1)
        return frames * t_attn, t_attn


def mita(f_in: torch.Tensor, i_in: torch.Tensor, module: MITA) -> Tuple[torch.Tensor, torch.Tensor]:
    """Single-clip form: ``f_in`` is ``(T, 1, h, w)``, ``i_in`` is ``(T, 1)``."""
    out, t_attn = module(f_in.unsqueeze(0), i_in.unsqueeze(0))
    return out[0], t_attn[0]


class PulseFormer(nn.Module):
    """Difference-domain BVP regressor: ``(B, T, 1, h, w)`` frames + ``(B, T, 1)`` IMU -> ``(B, T)``."""

    def __init__(self, cfg: Optional[ModelConfig] = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        self.backbone = PhysNetBackbone(cfg)
        self.mita = MITA(cfg) if cfg.use_mita else None

    def _check(self, x: torch.Tensor, imu: Optional[torch.Tensor]) -> None:
        c = self.cfg
        if x.dim() != 5 or tuple(x.shape[1:]) != (c.T, 1, c.h, c.w):
            raise ValueError(f"expected frames (B,{c.T},1,{c.h},{c.w}), got {tuple(x.shape)}")
        if self.mita is not None:
            if imu is None or tuple(imu.shape) != (x.shape[0], c.T, 1):
                got = None if imu is None else tuple(imu.shape)
                raise ValueError(f"expected IMU (B,{c.T},1), got {got}")

    def forward(self, x, imu: Optional[torch.Tensor] = None, return_maps: bool = False):
        if hasattr(x, "x") and hasattr(x, "imu"):
            x, imu = x.x, x.imu
        self._check(x, imu)
        maps = AttentionMaps()
        if self.mita is not None:
            x, maps.temporal = self.mita(x, imu)
        y = self.backbone(x.permute(0, 2, 1, 3, 4), maps.spatial if return_maps else None)
        return (y, maps) if return_maps else y


def parameter_count(cfg_or_model) -> int:
    model = cfg_or_model if isinstance(cfg_or_model, nn.Module) else PulseFormer(cfg_or_model)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def save_checkpoint(model: PulseFormer, path, extra: Optional[dict] = None) -> Path:
    """Weights to ``<path>.pt``; config, its hash and ``extra`` to ``<path>.json``."""
    path = Path(path).with_suffix(".pt")
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), path)
    meta = {"config": model.cfg.to_dict(), "config_hash": model.cfg.hash(), **(extra or {})}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return path


def load_checkpoint(path) -> Tuple[PulseFormer, dict]:
    path = Path(path).with_suffix(".pt")
    meta = json.loads(path.with_suffix(".json").read_text())
    cfg = ModelConfig(**meta["config"])
    if cfg.hash() != meta["config_hash"]:
        raise ValueError(f"config hash mismatch in {path.with_suffix('.json')}")
    model = PulseFormer(cfg)
    model.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    model.eval()
    return model, meta
