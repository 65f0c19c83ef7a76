import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from egoppg.ingest import ActivitySegment, ImuTrace, SyncedRecording, motion_magnitude
from egoppg.preprocess import (
    ClipBatch,
    StaticVideoError,
    augment,
    difference_std,
    hflip,
    load_clips,
    resample_fps,
    rotate_frames,
    save_clips,
    standardize_labels,
    standardized_frame_differences,
    to_model_frames,
    vflip,
    window_clips,
)
from egoppg.signal_core import Signal1D


def make_rec(n_frames, segments=None, h=12, w=32, seed=0, fps=30.0, frames=None):
    rng = np.random.default_rng(seed)
    t = np.arange(n_frames) / fps
    if frames is None:
        frames = rng.normal(100, 5, (n_frames, h, w)).astype(np.float32)
    dur = n_frames / fps
    imu = ImuTrace(rng.standard_normal((int(dur * 100) + 100, 3)), 100.0, -0.5)
    ppg_t = np.arange(int((dur + 1) * 128)) / 128.0 - 0.5
    ppg = Signal1D(np.sin(2 * np.pi * 1.2 * ppg_t), 128.0, -0.5)
    segs = segments or [ActivitySegment("office", 0.0, dur)]
    return SyncedRecording("S00", frames, fps, t, imu, motion_magnitude(imu, t), ppg, ppg, segs)


def test_resize_constant_frames_stay_constant():
    out = to_model_frames(np.full((3, 480, 640), 77.0))
    assert out.shape == (3, 48, 128)
    np.testing.assert_allclose(out, 77.0, rtol=1e-6)


def test_resize_checkerboard_keeps_mean():
    yy, xx = np.mgrid[0:240, 0:640]
    board = (((yy // 4) + (xx // 4)) % 2 * 255.0)[None]
    out = to_model_frames(board)
    assert out.mean() == pytest.approx(board.mean(), rel=0.01)


def test_resize_identity_at_model_size():
    f = np.random.default_rng(0).random((2, 48, 128)).astype(np.float32)
    np.testing.assert_array_equal(to_model_frames(f), f)


def test_resize_converts_rgb():
    f = np.zeros((1, 48, 128, 3))
    f[..., 1] = 100.0
    np.testing.assert_allclose(to_model_frames(f), 58.7, rtol=1e-5)


def test_constant_video_raises_static():
    f = np.full((10, 4, 4), 9.0)
    with pytest.raises(StaticVideoError):
        standardized_frame_differences(f, difference_std(f))


def test_alternating_frames_give_alternating_differences():
    f = np.zeros((6, 2, 2))
    f[1::2] = 1.0
    d = standardized_frame_differences(f, difference_std(f))
    assert d.shape == (5, 1, 2, 2)
    sd = difference_std(f)
    np.testing.assert_allclose(d[:, 0, 0, 0], np.array([1, -1, 1, -1, 1]) / sd, rtol=1e-6)


@given(st.integers(0, 2 ** 16))
def test_pooled_difference_std_is_one(seed):
    f = np.random.default_rng(seed).normal(0, 3, (20, 5, 7))
    d = standardized_frame_differences(f, difference_std(f, chunk=3))
    assert d.astype(np.float64).std() == pytest.approx(1.0, abs=1e-6)


def test_difference_std_matches_numpy():
    f = np.random.default_rng(1).normal(0, 2, (50, 4, 6))
    assert difference_std(f, chunk=7) == pytest.approx(np.diff(f, axis=0).std(), rel=1e-10)


def test_cumsum_of_differences_reconstructs_frames():
    f = np.random.default_rng(2).normal(0, 1, (30, 3, 3))
    sd = difference_std(f)
    d = standardized_frame_differences(f, sd)[:, 0]
    rec = f[0] + np.cumsum(d.astype(np.float64), axis=0) * sd
    np.testing.assert_allclose(rec, f[1:], atol=1e-4)


def test_ramp_ppg_gives_constant_labels():
    ppg = Signal1D(np.arange(1000) * 0.1, 128.0)
    y = standardize_labels(ppg, np.arange(100) / 30.0)
    np.testing.assert_allclose(y, 1.0, rtol=1e-9)
    with pytest.raises(StaticVideoError):
        standardize_labels(Signal1D(np.ones(1000), 128.0), np.arange(100) / 30.0)


def test_label_cumsum_correlates_with_ppg():
    ppg_t = np.arange(128 * 20) / 128.0
    ppg = Signal1D(np.sin(2 * np.pi * 1.1 * ppg_t) + 0.3 * np.sin(2 * np.pi * 2.2 * ppg_t), 128.0)
    ft = np.arange(500) / 30.0
    y = standardize_labels(ppg, ft)
    r = np.corrcoef(np.cumsum(y), ppg.resample_at(ft)[1:])[0, 1]
    assert r >= 0.999


def test_clip_counts_and_shapes():
    clips = window_clips(make_rec(300), T=128, h=12, w=32)
    assert len(clips) == 2
    c = clips[0]
    assert c.x.shape == (128, 1, 12, 32) and c.imu.shape == (128, 1) and c.y.shape == (128,)
    assert [k.meta.frame_start for k in clips] == [0, 128]
    assert window_clips(make_rec(127), T=128, h=12, w=32) == []


def test_no_clip_spans_a_segment_boundary():
    segs = [ActivitySegment("office", 0.0, 10.0), ActivitySegment("walking", 10.0, 20.0)]
    rec = make_rec(600, segs)
    clips = window_clips(rec, T=128, h=12, w=32)
    assert [c.meta.activity for c in clips] == ["office", "office", "walking", "walking"]
    for c in clips:
        seg = segs[c.meta.segment]
        i0, i1 = rec.segment_frames(seg)
        assert i0 <= c.meta.frame_start and c.meta.frame_start + 128 <= i1


def test_boundary_difference_is_zero_padded():
    segs = [ActivitySegment("office", 0.0, 128 / 30.0), ActivitySegment("walking", 128 / 30.0, 10.0)]
    clips = window_clips(make_rec(300, segs), T=128, h=12, w=32)
    first = clips[0]
    assert np.all(first.x[-1] == 0) and first.y[-1] == 0
    assert np.any(first.x[-2] != 0)


def test_excluded_segments_are_skipped():
    segs = [ActivitySegment("office", 0.0, 10.0), ActivitySegment("walking", 10.0, 20.0, excluded=True)]
    rec = make_rec(600, segs)
    assert {c.meta.activity for c in window_clips(rec, T=128, h=12, w=32)} == {"office"}
    assert len(window_clips(rec, T=128, h=12, w=32, include_excluded=True)) == 4


def test_collate_stacks_clips():
    b = ClipBatch.collate(window_clips(make_rec(300), T=128, h=12, w=32))
    assert b.x.shape == (2, 128, 1, 12, 32) and b.imu.shape == (2, 128, 1) and b.y.shape == (2, 128)
    assert b.x.dtype == torch.float32


@given(st.integers(0, 2 ** 16))
def test_augment_preserves_shape_and_labels(seed):
    clip = window_clips(make_rec(130), T=128, h=12, w=32)[0]
    out = augment(clip, np.random.default_rng(seed))
    assert out.x.shape == clip.x.shape
    np.testing.assert_array_equal(out.y, clip.y)
    np.testing.assert_array_equal(out.imu, clip.imu)


def test_double_flip_is_identity():
    x = torch.randn(3, 1, 4, 6)
    assert torch.equal(hflip(hflip(x)), x) and torch.equal(vflip(vflip(x)), x)
    a = np.random.default_rng(0).random((2, 4, 6))
    np.testing.assert_array_equal(hflip(a), a[..., ::-1])


def test_rotation_moves_a_point_by_the_angle():
    h = w = 41
    x = torch.zeros(1, 1, h, w)
    x[0, 0, 20, 35] = 1.0  # 15 px right of the centre
    y = rotate_frames(x, 90.0)[0, 0]
    iy, ix = np.unravel_index(int(torch.argmax(y)), (h, w))
    # positive angle in image coordinates (y down) maps +x onto -y
    assert (ix, abs(iy - 20)) == (20, 15)
    np.testing.assert_allclose(rotate_frames(x, 0.0), x, atol=1e-6)


def test_fps_down10_frame_count():
    rec = make_rec(301)
    out = resample_fps(rec, "down10")
    assert out.n_frames == 101 and out.fps == 10.0
    np.testing.assert_array_equal(out.frames, rec.frames[::3])
    assert len(out.imu_mag) == 101


def test_fps_down10_up30_reproduces_ramp():
    ramp = np.broadcast_to(np.arange(301, dtype=np.float32)[:, None, None], (301, 2, 2)).copy()
    rec = make_rec(301, frames=ramp)
    out = resample_fps(rec, "down10_up30")
    assert out.n_frames == 301 and out.fps == 30.0
    np.testing.assert_allclose(out.frames, ramp, atol=1e-4)
    np.testing.assert_allclose(out.frame_times, rec.frame_times, atol=1e-9)


def test_fps_down10_up30_idempotent():
    once = resample_fps(make_rec(301), "down10_up30")
    twice = resample_fps(once, "down10_up30")
    np.testing.assert_allclose(twice.frames, once.frames, atol=1e-3)


def test_fps_modes_validate():
    rec = make_rec(30)
    assert resample_fps(rec, "30") is rec
    with pytest.raises(ValueError):
        resample_fps(rec, "down5")
    with pytest.raises(ValueError):
        resample_fps(resample_fps(rec, "down10"), "down10")


def test_clip_cache_round_trip(tmp_path):
    clips = window_clips(make_rec(300), T=128, h=12, w=32, recording="r1")
    save_clips(clips, tmp_path)
    back = load_clips(tmp_path)
    assert len(back) == 2
    for a, b in zip(clips, back):
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
        assert a.meta == b.meta
    assert load_clips(tmp_path, participants=["S99"]) == []
