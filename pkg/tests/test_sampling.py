import numpy as np
import pytest

from triact.sampling import (
    Normalization,
    SamplingSpec,
    crop_and_scale,
    default_specs,
    plan_indices,
    plan_multi_level_indices,
    rescale_shorter_side,
)


def test_default_spans():
    specs = default_specs()
    assert specs["event"].span == 49
    assert specs["set"].span == 57
    assert specs["element"].span == 63
    assert default_specs(set_rate="t16")["set"].span == 61


def test_default_specs_rejects_unknown_rate():
    with pytest.raises(ValueError):
        default_specs(set_rate="t12")


def test_center_start_long_video():
    spec = SamplingSpec(num_frames=4, interval=16)
    plan = plan_indices(200, spec, "test_center")
    assert plan.clips == ((75, 91, 107, 123),)


def test_short_video_clamps_indices():
    spec = SamplingSpec(num_frames=4, interval=16)
    plan = plan_indices(10, spec, "test_center")
    assert plan.clips == ((0, 9, 9, 9),)


def test_multi_clip_starts_even_spacing():
    spec = SamplingSpec(num_frames=32, interval=2)
    plan = plan_indices(400, spec, "test_multi", num_clips=6)
    starts = tuple(clip[0] for clip in plan.clips)
    assert starts == (0, 67, 135, 202, 270, 337)
    # against the arithmetic definition
    max_start = 400 - spec.span
    for i, s in enumerate(starts):
        assert s == int(np.floor(i * max_start / 5 + 0.5))


def test_single_clip_multi_equals_center():
    spec = SamplingSpec(num_frames=8, interval=8)
    multi = plan_indices(123, spec, "test_multi", num_clips=1)
    center = plan_indices(123, spec, "test_center")
    assert multi.clips == center.clips


def test_random_plans_satisfy_invariants():
    rng = np.random.default_rng(0)
    for _ in range(3000):
        n = int(rng.integers(1, 500))
        t = int(rng.integers(1, 40))
        interval = int(rng.integers(1, 20))
        spec = SamplingSpec(num_frames=t, interval=interval)
        mode = ("train_random", "test_center", "test_multi")[int(rng.integers(3))]
        plan = plan_indices(n, spec, mode, seed=rng, num_clips=4)
        for clip in plan.clips:
            assert len(clip) == t
            assert all(0 <= idx < n for idx in clip)
            assert all(b >= a for a, b in zip(clip, clip[1:]))
            # unclamped prefix keeps exact interval spacing
            for a, b in zip(clip, clip[1:]):
                if b < n - 1:
                    assert b - a == interval
        if mode == "train_random":
            assert clip[0] <= max(0, n - spec.span)


def test_train_random_determinism():
    spec = SamplingSpec(num_frames=8, interval=4)
    a = plan_indices(300, spec, "train_random", seed=7)
    b = plan_indices(300, spec, "train_random", seed=7)
    assert a.clips == b.clips


def test_unknown_mode_raises():
    spec = SamplingSpec(num_frames=4, interval=2)
    with pytest.raises(ValueError):
        plan_indices(100, spec, "validation")


def test_bad_spec_values():
    with pytest.raises(ValueError):
        SamplingSpec(num_frames=0, interval=2)
    with pytest.raises(ValueError):
        SamplingSpec(num_frames=4, interval=0)
    with pytest.raises(ValueError):
        plan_indices(0, SamplingSpec(num_frames=4, interval=2), "test_center")


def test_multi_level_shares_anchor():
    specs = default_specs()
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(70, 600))
        plans = plan_multi_level_indices(n, specs, "train_random", seed=rng)
        ref = specs["element"]
        start = plans["element"].clips[0][0]
        center = start + (ref.span - 1) / 2
        for level, spec in specs.items():
            s = plans[level].clips[0][0]
            if 0 < s < n - spec.span:
                assert abs(s + (spec.span - 1) / 2 - center) <= 0.5


def test_multi_level_center_matches_independent_center():
    specs = default_specs()
    for n in (100, 137, 200, 481):
        plans = plan_multi_level_indices(n, specs, "test_center")
        for level, spec in specs.items():
            solo = plan_indices(n, spec, "test_center")
            assert plans[level].clips == solo.clips


def test_multi_level_determinism():
    specs = default_specs()
    a = plan_multi_level_indices(250, specs, "train_random", seed=3)
    b = plan_multi_level_indices(250, specs, "train_random", seed=3)
    assert a == b


def test_center_crop_offset():
    # 256x320 source: no rescale, center window starts at row 16, col 48
    frame = np.zeros((256, 320, 3), dtype=np.uint8)
    frame[16, 48] = 255
    norm = Normalization(mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))
    out = crop_and_scale([frame], crop_size=224, mode="test_center", normalization=norm)
    assert out.shape == (1, 224, 224, 3)
    assert out[0, 0, 0, 0] == pytest.approx(1.0)
    assert np.count_nonzero(out) == 3


def test_constant_frame_stays_constant():
    frame = np.full((80, 120, 3), 128, dtype=np.uint8)
    out = crop_and_scale([frame] * 3, crop_size=56, rescale_size=64)
    norm = Normalization()
    for c in range(3):
        expected = (128 / 255.0 - norm.mean[c]) / norm.std[c]
        assert np.allclose(out[..., c], expected, atol=1e-5)


def test_random_crop_determinism_and_shared_window():
    rng = np.random.default_rng(9)
    frames = [rng.integers(0, 256, size=(90, 140, 3), dtype=np.uint8) for _ in range(4)]
    a = crop_and_scale(frames, crop_size=56, mode="train_random", seed=42, rescale_size=64)
    b = crop_and_scale(frames, crop_size=56, mode="train_random", seed=42, rescale_size=64)
    assert np.array_equal(a, b)
    # all frames of one clip share the same window: equal frames stay equal
    same = crop_and_scale([frames[0]] * 4, crop_size=56, mode="train_random", seed=5, rescale_size=64)
    assert np.array_equal(same[0], same[3])


def test_rescale_shapes():
    frame = np.zeros((100, 200, 3), dtype=np.uint8)
    assert rescale_shorter_side(frame, 50).shape == (50, 100, 3)
    assert rescale_shorter_side(frame, 100) is frame
    tall = np.zeros((200, 100, 3), dtype=np.uint8)
    assert rescale_shorter_side(tall, 64).shape == (128, 64, 3)


def test_crop_errors():
    with pytest.raises(ValueError):
        crop_and_scale([], crop_size=56)
    frame = np.zeros((40, 40, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        crop_and_scale([frame], crop_size=80, rescale_size=64)
    with pytest.raises(ValueError):
        crop_and_scale([np.zeros((40, 40), dtype=np.uint8)], crop_size=8)
