import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from torchvision.models import resnet18

from egoppg.model import (
    MITA,
    ModelConfig,
    PhysNetBackbone,
    PulseFormer,
    ResNet18Encoder,
    SpatialAttention,
    cross_attention,
    load_checkpoint,
    mita,
    parameter_count,
    save_checkpoint,
    spatial_attention,
)
from egoppg.preprocess import ClipBatch, Clip, ClipMeta


def tiny_inputs(cfg, b=2, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(b, cfg.T, 1, cfg.h, cfg.w, generator=g, dtype=dtype)
    imu = torch.randn(b, cfg.T, 1, generator=g, dtype=dtype)
    return x, imu


# --- hand-computed parameter counts -------------------------------------------

def conv(cin, cout, k, bias=True):
    return cin * cout * k + (cout if bias else 0)


def bn(c):
    return 2 * c


def resnet18_oracle(width, in_channels):
    n = conv(in_channels, width, 49, bias=False) + bn(width)
    cin = width
    for i, mult in enumerate((1, 2, 4, 8)):
        cout = width * mult
        block1 = conv(cin, cout, 9, False) + bn(cout) + conv(cout, cout, 9, False) + bn(cout)
        if i > 0:
            block1 += conv(cin, cout, 1, False) + bn(cout)
        block2 = 2 * (conv(cout, cout, 9, False) + bn(cout))
        n += block1 + block2
        cin = cout
    return n


def pulseformer_oracle(cfg):
    ch = cfg.channels
    n = conv(1, ch[0], 25) + bn(ch[0])
    for a, b in zip(ch, ch[1:]):
        n += conv(a, b, 27) + bn(b) + conv(b, b, 27) + bn(b)
    if cfg.use_sa:
        n += len(ch) * conv(2, 1, cfg.sa_kernel ** 2)
    c = ch[-1]
    n += 2 * (conv(c, c, 27) + bn(c))
    n += sum(cfg.temporal_pool) * (conv(c, c, 4) + bn(c))
    n += conv(c, 1, 1)
    if cfg.use_mita:
        d = cfg.embed_dim
        n += resnet18_oracle(cfg.resnet_width, 1) + (8 * cfg.resnet_width) * d + d
        n += conv(1, cfg.imu_hidden, cfg.imu_kernel) + conv(cfg.imu_hidden, d, cfg.imu_kernel)
        n += d + 1
    return n


def test_resnet_oracle_matches_torchvision_reference():
    ref = resnet18()
    n_ref = sum(p.numel() for name, p in ref.named_parameters() if not name.startswith("fc."))
    assert resnet18_oracle(64, 3) == n_ref
    assert sum(p.numel() for p in ResNet18Encoder(64, 3).parameters()) == n_ref


@pytest.mark.parametrize("cfg", [ModelConfig.tiny(), ModelConfig.tiny(use_sa=False, use_mita=False),
                                 ModelConfig()])
def test_parameter_count_matches_hand_sum(cfg):
    assert parameter_count(cfg) == pulseformer_oracle(cfg)


def test_default_parameter_count_about_12m():
    n = parameter_count(ModelConfig())
    assert 0.8 * 12e6 <= n <= 1.2 * 12e6


def test_dropping_mita_removes_exactly_its_components():
    cfg = ModelConfig()
    m = PulseFormer(cfg)
    mita_size = sum(p.numel() for p in m.mita.parameters())
    parts = (m.mita.image_encoder, m.mita.image_proj, m.mita.imu_encoder, m.mita.head)
    assert mita_size == sum(sum(p.numel() for p in part.parameters()) for part in parts)
    assert parameter_count(ModelConfig(use_mita=False)) == parameter_count(cfg) - mita_size


# --- shapes and attention contracts -------------------------------------------

def test_default_output_shape():
    torch.manual_seed(0)
    m = PulseFormer().eval()
    x = torch.randn(2, 128, 1, 48, 128)
    with torch.no_grad():
        y = m(x, torch.randn(2, 128, 1))
    assert y.shape == (2, 128)


def test_tiny_forward_returns_maps():
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg).eval()
    x, imu = tiny_inputs(cfg)
    with torch.no_grad():
        y, maps = m(x, imu, return_maps=True)
    assert y.shape == (2, cfg.T)
    assert maps.temporal.shape == (2, cfg.T, 1, 1, 1)
    assert len(maps.spatial) == len(cfg.channels)
    assert maps.spatial[0].shape == (2, cfg.T, 1, cfg.h, cfg.w)


def test_batch_input_accepted():
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg).eval()
    clips = [Clip(np.zeros((cfg.T, 1, cfg.h, cfg.w), np.float32), np.zeros((cfg.T, 1), np.float32),
                  np.zeros(cfg.T, np.float32), ClipMeta("S00", "office", 0.0)) for _ in range(3)]
    with torch.no_grad():
        assert m(ClipBatch.collate(clips)).shape == (3, cfg.T)


def test_spatial_attention_map_shape():
    sa = SpatialAttention()
    out, m = spatial_attention(torch.randn(128, 64, 12, 32), sa)
    assert out.shape == (128, 64, 12, 32) and m.shape == (128, 1, 12, 32)


@given(st.integers(0, 2 ** 16), st.floats(0.01, 1e3))
def test_spatial_attention_maps_in_open_unit_interval(seed, scale):
    torch.manual_seed(seed)
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg).eval()
    x, imu = tiny_inputs(cfg, 1, seed)
    with torch.no_grad():
        _, maps = m(x * scale, imu, return_maps=True)
    for s in maps.spatial:
        assert torch.all(s > 0) and torch.all(s < 1)


def test_channel_constant_input_gives_equal_pooled_maps():
    sa = SpatialAttention()
    f = torch.randn(1, 1, 3, 5, 5).expand(1, 6, 3, 5, 5).contiguous()
    # mean and max over identical channels coincide, so swapping the conv inputs changes nothing
    with torch.no_grad():
        _, m1 = sa(f)
        sa.conv.weight.copy_(sa.conv.weight.flip(1))
        _, m2 = sa(f)
    torch.testing.assert_close(m1, m2)


def test_temporal_attention_shape():
    cfg = ModelConfig.tiny(T=128, h=12, w=32)
    module = MITA(cfg).eval()
    with torch.no_grad():
        out, t_attn = mita(torch.randn(128, 1, 12, 32), torch.randn(128, 1), module)
    assert out.shape == (128, 1, 12, 32) and t_attn.shape == (128, 1, 1, 1)


def test_cross_attention_against_manual_softmax():
    g = torch.Generator().manual_seed(0)
    q, k, v = (torch.randn(5, 4, generator=g, dtype=torch.float64) for _ in range(3))
    s = (q @ k.T) / 2.0
    w = torch.exp(s - s.max(dim=1, keepdim=True).values)
    w = w / w.sum(dim=1, keepdim=True)
    torch.testing.assert_close(cross_attention(q, k, v), w @ v)


def test_attention_is_permutation_equivariant():
    # a kernel-1 IMU encoder is pointwise in time and the image encoder works per frame
    cfg = ModelConfig.tiny(imu_kernel=1)
    module = MITA(cfg).double().eval()
    x, imu = tiny_inputs(cfg, 1, 3, torch.float64)
    perm = torch.randperm(cfg.T, generator=torch.Generator().manual_seed(1))
    with torch.no_grad():
        out, a = module(x, imu)
        out_p, b = module(x[:, perm], imu[:, perm])
    torch.testing.assert_close(b, a[:, perm])
    torch.testing.assert_close(out_p, out[:, perm])
    q = torch.randn(cfg.T, 4, dtype=torch.float64)
    kv = torch.randn(cfg.T, 4, dtype=torch.float64)
    torch.testing.assert_close(cross_attention(q[perm], kv[perm], kv[perm]), cross_attention(q, kv, kv)[perm])


def central_diff(fn, x, idx, eps=1e-6):
    xp, xm = x.clone(), x.clone()
    xp.view(-1)[idx] += eps
    xm.view(-1)[idx] -= eps
    return (fn(xp) - fn(xm)).item() / (2 * eps)


def test_mita_gradient_matches_finite_differences():
    torch.manual_seed(0)
    cfg = ModelConfig.tiny()
    module = MITA(cfg).double().eval()
    x, imu = tiny_inputs(cfg, 1, 5, torch.float64)
    w = torch.randn(1, cfg.T, 1, cfg.h, cfg.w, dtype=torch.float64)

    def fn(inp):
        return (module(inp, imu)[0] * w).sum()

    xg = x.clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(xg), xg)
    frame = 3  # every pixel of one input frame
    lo = frame * cfg.h * cfg.w
    for idx in range(lo, lo + cfg.h * cfg.w, 7):
        num = central_diff(fn, x, idx)
        ana = grad.view(-1)[idx].item()
        assert abs(num - ana) <= 1e-4 * max(abs(ana), 1e-3)


def test_end_to_end_gradient_check():
    # batch statistics keep activations at unit scale; freshly initialised
    # running statistics attenuate the input dependence to ~1e-8
    torch.manual_seed(0)
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg).double().train()
    x, imu = tiny_inputs(cfg, 2, 7, torch.float64)
    w = torch.randn(2, cfg.T, dtype=torch.float64)

    def fn(inp):
        return (m(inp, imu) * w).sum()

    xg = x.clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(xg), xg)
    rng = np.random.default_rng(0)
    errs = []
    for idx in rng.choice(x.numel(), 60, replace=False):
        num = central_diff(fn, x, int(idx))
        ana = grad.view(-1)[int(idx)].item()
        errs.append(abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    assert max(errs) < 1e-3


# --- ablation, determinism, I/O -----------------------------------------------

def test_ablated_model_equals_bare_backbone():
    cfg = ModelConfig.tiny(use_sa=False, use_mita=False)
    torch.manual_seed(11)
    m = PulseFormer(cfg).eval()
    torch.manual_seed(11)
    bb = PhysNetBackbone(cfg).eval()
    x, _ = tiny_inputs(cfg)
    with torch.no_grad():
        assert torch.equal(m(x), bb(x.permute(0, 2, 1, 3, 4)))
    assert m.mita is None and m.backbone.sa is None


def test_eval_forward_is_deterministic():
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg).eval()
    x, imu = tiny_inputs(cfg)
    with torch.no_grad():
        assert torch.equal(m(x, imu), m(x, imu))


def test_model_is_not_linear():
    torch.manual_seed(0)
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg).double().train()
    x, imu = tiny_inputs(cfg, 2, 0, torch.float64)
    with torch.no_grad():
        assert not torch.allclose(m(2 * x, imu) - m(torch.zeros_like(x), imu),
                                  2 * (m(x, imu) - m(torch.zeros_like(x), imu)), atol=1e-6)


def test_shape_mismatch_raises():
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg)
    x, imu = tiny_inputs(cfg)
    with pytest.raises(ValueError, match="frames"):
        m(x[:, :4], imu)
    with pytest.raises(ValueError, match="IMU"):
        m(x, None)
    with pytest.raises(ValueError):
        ModelConfig(T=10)


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig.tiny()
    m = PulseFormer(cfg).eval()
    path = save_checkpoint(m, tmp_path / "m", {"epoch": 3})
    back, meta = load_checkpoint(path)
    assert meta["epoch"] == 3 and back.cfg == cfg
    x, imu = tiny_inputs(cfg)
    with torch.no_grad():
        assert torch.equal(back(x, imu), m(x, imu))


def test_checkpoint_hash_mismatch_detected(tmp_path):
    import json
    path = save_checkpoint(PulseFormer(ModelConfig.tiny()), tmp_path / "m")
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text())
    meta["config"]["embed_dim"] = 32
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="hash"):
        load_checkpoint(path)
