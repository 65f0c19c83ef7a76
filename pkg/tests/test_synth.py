import numpy as np
import pytest

from egoppg.baseline import RoiSpec, baseline_hr, roi_mean_series
from egoppg.ingest import ecg_heart_rate, ppg_heart_rate
from egoppg.signal_core import align_series, compute_metrics, dominant_frequency, pulse_snr_db
from egoppg.synth import SynthSpec, corrupt_span, generate, load_truth, skin_eye_rois, write_synthetic


def small(**kw):
    base = dict(duration_s=40.0, frame_size=(24, 64))
    base.update(kw)
    return SynthSpec(**base)


def test_generation_is_bit_identical_per_seed():
    a, ta = generate(small(), seed=5)
    b, tb = generate(small(), seed=5)
    np.testing.assert_array_equal(a.eye_video.frames, b.eye_video.frames)
    np.testing.assert_array_equal(a.ppg_nose.samples, b.ppg_nose.samples)
    np.testing.assert_array_equal(a.ecg_chest.samples, b.ecg_chest.samples)
    np.testing.assert_array_equal(a.imu.samples, b.imu.samples)
    np.testing.assert_array_equal(ta.beat_times, tb.beat_times)
    c, _ = generate(small(), seed=6)
    assert not np.array_equal(a.eye_video.frames, c.eye_video.frames)


def test_zero_amplitudes_give_temporally_constant_frames():
    raw, _ = generate(small(pulse_amplitude=0.0, specular_amplitude=0.0, eye_artifact_amplitude=0.0,
                            noise_sigma=0.0), seed=0)
    f = raw.eye_video.frames
    np.testing.assert_array_equal(f, np.broadcast_to(f[:1], f.shape))


def test_negative_amplitude_rejected():
    with pytest.raises(ValueError):
        SynthSpec(noise_sigma=-1.0)


def test_skin_roi_spectrum_peaks_at_heart_rate(stationary_72):
    raw, _ = stationary_72
    skin, _ = skin_eye_rois(raw.eye_video.frames.shape[1:])
    s = roi_mean_series(raw.eye_video.frames, raw.eye_video.fps, RoiSpec("S00", "skin", *skin))
    # 300 s gives a 1/300 Hz bin
    assert dominant_frequency(s) == pytest.approx(1.2, abs=1.0 / 300 + 1e-9)


def test_reference_signals_follow_the_beat_train(short_recording):
    raw, truth = short_recording
    ecg = ecg_heart_rate(raw.ecg_chest)
    ppg = ppg_heart_rate(raw.ppg_nose)
    # device clocks are offset by about 1 s, so compare mean rates only
    for hr in (ecg, ppg):
        sel = hr.valid & (hr.window_starts >= hr.window_starts[0] + 2.0)
        assert sel.sum() > 10
        ref = truth.hr_windows(hr.window_starts[sel], 30.0)
        assert hr.values_bpm[sel].mean() == pytest.approx(np.nanmean(ref.values_bpm), abs=2.0)


def test_ppg_and_ecg_windows_agree_within_one_bpm():
    raw, truth = generate(small(duration_s=120.0, hr_profile=[(0.0, 64.0), (120.0, 90.0)]), seed=2)
    ppg = ppg_heart_rate(raw.ppg_nose)
    ecg = ecg_heart_rate(raw.ecg_chest)
    ref = truth.hr_windows(ppg.window_starts, 30.0)
    assert compute_metrics(ppg, ref).mae_bpm < 1.0
    assert compute_metrics(ecg, ref).mae_bpm < 1.0
    p, e, _ = align_series(ppg, ecg)
    assert np.max(np.abs(p - e)) < 1.0


def test_skin_snr_exceeds_eye_snr(stationary_72):
    raw, _ = stationary_72
    f = raw.eye_video.frames
    skin, eyes = skin_eye_rois(f.shape[1:])
    s = roi_mean_series(f, 30.0, RoiSpec("S00", "skin", *skin))
    e = roi_mean_series(f, 30.0, RoiSpec("S00", "eyes", *eyes))
    assert pulse_snr_db(s, 1.2) > pulse_snr_db(e, 1.2) + 3.0


def test_corrupt_span_zero_gain_is_identity():
    raw, _ = generate(small(), seed=0)
    assert corrupt_span(raw, 10.0, 20.0, 0.0) is raw


def test_corrupt_span_adds_variance_only_inside_span():
    raw, _ = generate(small(), seed=0)
    bad = corrupt_span(raw, 10.0, 20.0, 2.0, seed=1)
    t = raw.eye_video.times
    inside = (t >= 10.0) & (t < 20.0)
    delta = bad.eye_video.frames - raw.eye_video.frames
    assert np.all(delta[~inside] == 0)
    assert bad.eye_video.frames[inside].var(axis=0).mean() > raw.eye_video.frames[inside].var(axis=0).mean()
    it = raw.imu.times
    out = (it < 10.0) | (it >= 20.0)
    np.testing.assert_array_equal(bad.imu.samples[out], raw.imu.samples[out])
    with pytest.raises(ValueError):
        corrupt_span(raw, 30.0, 50.0, 1.0)


def test_corruption_does_not_improve_baseline():
    spec = small(duration_s=120.0, frame_size=(48, 128))
    raw, truth = generate(spec, seed=4)
    skin, _ = skin_eye_rois(spec.frame_size)
    roi = RoiSpec("S00", "skin", *skin)
    bad = raw
    for k, t0 in enumerate((10.0, 40.0, 70.0, 100.0)):
        bad = corrupt_span(bad, t0, t0 + 5.0, 3.0, seed=k)
    errs = []
    for r in (raw, bad):
        hr = baseline_hr(r.eye_video.frames, 30.0, roi, window_s=30.0)
        errs.append(compute_metrics(hr, truth.hr_windows(hr.window_starts, 30.0)).mae_bpm)
    assert errs[1] >= errs[0]


def test_write_synthetic_round_trip(tmp_path):
    raw, truth = generate(small(duration_s=20.0), seed=0)
    write_synthetic(raw, truth, tmp_path / "rec")
    assert (tmp_path / "rec" / "rois.csv").exists()
    back = load_truth(tmp_path / "rec")
    np.testing.assert_allclose(back.beat_times, truth.beat_times)
    assert back.offsets_s == truth.offsets_s


def test_ground_truth_windows_from_beats():
    _, truth = generate(small(duration_s=60.0, hr_profile=75.0), seed=0)
    hr = truth.hr_windows(np.array([0.0, 30.0]), 30.0)
    np.testing.assert_allclose(hr.values_bpm, 75.0, rtol=1e-9)
