import numpy as np
import pytest

from embedseg.synthdata import (
    BackgroundSpec,
    ObjectSpec,
    SceneSpec,
    drift_sequence_preset,
    easy_sequence_preset,
    generate_sequence,
    multi_sequence_preset,
    preset_scene,
    with_noise,
)


def _single_disk_spec(frame_count=3, size=32):
    obj = ObjectSpec(shape="disk", x=8.0, y=8.0, vx=1.0, vy=0.0, color=(1.0, 0.0, 0.0), size=4.0)
    return SceneSpec(seed=0, frame_count=frame_count, height=size, width=size, objects=(obj,))


def test_disk_centroid_moves_one_column_per_frame():
    """Velocity (1, 0) advances the mask centroid along columns 8, 9, 10."""
    _, masks = generate_sequence(_single_disk_spec())
    for j, expected_col in enumerate([8.0, 9.0, 10.0]):
        ys, xs = np.nonzero(masks[j] == 1)
        assert xs.mean() == pytest.approx(expected_col)
        assert ys.mean() == pytest.approx(8.0)


def test_zero_drift_color_constant_across_frames():
    video, masks = generate_sequence(_single_disk_spec())
    for j in range(3):
        colors = video.frames[j][masks[j] == 1]
        assert (colors == np.array([1.0, 0.0, 0.0])).all()


def test_higher_id_wins_overlap():
    a = ObjectSpec(shape="rectangle", x=8.0, y=8.0, vx=0.0, vy=0.0, color=(1, 0, 0), size=8.0)
    b = ObjectSpec(shape="rectangle", x=10.0, y=8.0, vx=0.0, vy=0.0, color=(0, 1, 0), size=8.0)
    spec = SceneSpec(seed=0, frame_count=1, height=24, width=24, objects=(a, b))
    _, masks = generate_sequence(spec)
    overlap_col = 10  # covered by both rectangles
    assert masks[0, 8, overlap_col] == 2


def test_occlusion_removes_object_from_render_and_mask():
    obj = ObjectSpec(shape="disk", x=10.0, y=10.0, vx=0.0, vy=0.0, color=(1, 0, 0), size=3.0)
    spec = SceneSpec(
        seed=0,
        frame_count=4,
        height=24,
        width=24,
        objects=(obj,),
        background=BackgroundSpec(color=(0.0, 0.0, 1.0)),
        occlusion_events=((1, 1, 2),),
    )
    video, masks = generate_sequence(spec)
    assert (masks[0] == 1).any() and (masks[3] == 1).any()
    assert not (masks[1] == 1).any()
    assert not (masks[2] == 1).any()
    # occluded frame renders pure background
    assert (video.frames[1] == np.array([0.0, 0.0, 1.0])).all()


def test_generation_bit_identical():
    spec = with_noise(multi_sequence_preset(3), 0.1)
    video_a, masks_a = generate_sequence(spec)
    video_b, masks_b = generate_sequence(spec)
    assert (video_a.frames == video_b.frames).all()
    assert (masks_a == masks_b).all()


def test_mask_render_consistency():
    """Every labeled pixel carries its object's frame color, and vice versa."""
    spec = multi_sequence_preset(1)
    video, masks = generate_sequence(spec)
    for j in range(spec.frame_count):
        for object_id, obj in enumerate(spec.objects, start=1):
            color = obj.color_at(j)
            labeled = masks[j] == object_id
            if labeled.any():
                assert (video.frames[j][labeled] == color).all()
            colored = (video.frames[j] == color).all(axis=-1)
            assert (masks[j][colored] == object_id).all()


def test_noise_touches_background_only():
    spec = with_noise(easy_sequence_preset(0), 0.2)
    video, masks = generate_sequence(spec)
    obj_color = np.asarray(spec.objects[0].color)
    fg = masks[0] == 1
    assert (video.frames[0][fg] == obj_color).all()
    bg_pixels = video.frames[0][~fg]
    assert bg_pixels.std(axis=0).max() > 0.01  # noise visibly varies


def test_object_larger_than_frame_rejected():
    obj = ObjectSpec(shape="rectangle", x=8.0, y=8.0, vx=0.0, vy=0.0, color=(1, 0, 0), size=40.0)
    spec = SceneSpec(seed=0, frame_count=1, height=16, width=16, objects=(obj,))
    with pytest.raises(ValueError, match="larger than the frame"):
        generate_sequence(spec)


def test_zero_frames_rejected():
    spec = SceneSpec(seed=0, frame_count=0, height=16, width=16, objects=())
    with pytest.raises(ValueError):
        generate_sequence(spec)


def test_unknown_preset_name():
    with pytest.raises(ValueError, match="unknown preset"):
        preset_scene("nope", 0)


def test_drift_preset_frame0_color_equals_base():
    spec = drift_sequence_preset(4)
    video, masks = generate_sequence(spec)
    fg = masks[0] == 1
    assert (video.frames[0][fg] == np.asarray(spec.objects[0].color)).all()


def test_drift_preset_final_color_near_background():
    """By the last frame the object color must have moved away from its start
    (distance > 0.4) and be closer to the initial background color than to its
    own initial color."""
    for seed in range(3):
        spec = drift_sequence_preset(seed)
        obj = spec.objects[0]
        start = np.asarray(obj.color_at(0))
        final = np.asarray(obj.color_at(spec.frame_count - 1))
        background = np.asarray(spec.background.color)
        assert np.linalg.norm(final - start) > 0.4
        assert np.linalg.norm(final - background) < np.linalg.norm(final - start)


def test_drift_presets_share_schedule_but_not_trajectory():
    a, b = drift_sequence_preset(0), drift_sequence_preset(1)
    assert a.objects[0].drift_rate == b.objects[0].drift_rate
    assert a.objects[0].color == b.objects[0].color
    assert (a.objects[0].x, a.objects[0].y) != (b.objects[0].x, b.objects[0].y)


def test_presets_desk_scale():
    for name in ("easy", "drift", "multi"):
        spec = preset_scene(name, 0)
        video, masks = generate_sequence(spec)
        assert video.frame_count == 20
        assert video.height == 64 and video.width == 64
        assert masks.max() <= 3
