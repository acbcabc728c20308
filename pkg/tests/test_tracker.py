from __future__ import annotations

import numpy as np
import pytest

from segtrack.masks import BinaryMask, mask_iou
from segtrack.tracker import (
    ClassTracker,
    PipelineFlags,
    Segment,
    Tracker,
    TrackerConfig,
    TrackStatus,
)


def rect_mask(img_h, img_w, x, y, w, h):
    arr = np.zeros((img_h, img_w), dtype=bool)
    arr[y : y + h, x : x + w] = True
    return BinaryMask.from_array(arr)


def rect_segment(frame, x, y, w=20, h=20, img_h=128, img_w=256, conf=0.9, cls=1):
    return Segment.from_mask(frame, cls, conf, rect_mask(img_h, img_w, x, y, w, h))


def texture(rng_seed, w, h):
    rng = np.random.default_rng(rng_seed)
    return (rng.random((h, w)) * 255).astype(np.uint8)


def render(objects, img_h=128, img_w=256):
    """objects: list of (x, y, texture array). Gray background."""
    frame = np.full((img_h, img_w), 128, dtype=np.uint8)
    for x, y, tex in objects:
        h, w = tex.shape
        frame[y : y + h, x : x + w] = tex
    return frame


BLANK = np.full((128, 256), 128, dtype=np.uint8)


# ---------------------------------------------------------------------------
# segment-to-track association


def test_zero_innovation_match_keeps_position():
    tracker = Tracker(flags="p1", classes=(1,))
    seg0 = rect_segment(0, x=40, y=40)
    tracker.step(0, [seg0], None)
    sub = tracker._trackers[1]
    assert len(sub.live) == 1
    born_id = sub.live[0].id

    seg1 = rect_segment(1, x=40, y=40)
    tracker.step(1, [seg1], None)
    assert len(sub.live) == 1
    track = sub.live[0]
    assert track.id == born_id
    assert track.hits == 2
    assert tuple(track.component.mean[:2]) == pytest.approx(seg1.center, abs=1e-9)


def test_cold_start_births():
    tracker = Tracker(flags="p1", classes=(1,))
    segs = [rect_segment(0, x=10 + 60 * k, y=30) for k in range(3)]
    result = tracker.step(0, segs, None)
    assert len(result.entries) == 3
    assert sorted(t[0] for t in result.entries) == [1, 2, 3]


def test_empty_inputs_yield_empty_outputs():
    tracker = Tracker(flags="p1", classes=(1, 2))
    result = tracker.step(0, [], None)
    assert result.entries == ()


def test_far_observation_becomes_birth_not_teleport():
    # a single faraway segment must not drag the lone track across the image
    tracker = Tracker(flags="p1", classes=(1,))
    tracker.step(0, [rect_segment(0, x=10, y=10)], None)
    sub = tracker._trackers[1]
    first_id = sub.live[0].id
    # likelihood underflows to zero at this distance, so the pair degenerates
    far = rect_segment(1, x=10 + 4000, y=10, img_w=8192)
    tracker.step(1, [far], None)
    assert [t.id for t in sub.live] == [first_id + 1]
    assert [t.id for t in sub.lost] == [first_id]


def test_crossing_targets_appearance_flips_position_only_assignment():
    tex_a = texture(1, 20, 20)
    tex_b = texture(2, 20, 20)
    seg_at_64 = rect_segment(1, x=64, y=40)
    seg_at_52 = rect_segment(1, x=52, y=40)

    def run(flags_name):
        tracker = Tracker(flags=flags_name, classes=(1,))
        # frame 0: well separated births
        frame0 = render([(30, 40, tex_a), (90, 40, tex_b)])
        segs0 = [rect_segment(0, x=30, y=40), rect_segment(0, x=90, y=40)]
        tracker.step(0, segs0, frame0)
        # frame 1: nearly crossed; each object is now slightly closer to the
        # other track's prediction, but carries its own texture
        frame1 = render([(64, 40, tex_a), (52, 40, tex_b)])
        tracker.step(1, [seg_at_64, seg_at_52], frame1)
        sub = tracker._trackers[1]
        return {t.id: t.mask_history[1] for t in sub.live}

    # position/motion alone prefers the swap: tracks started at x-centers 40
    # and 100, observations sit at x-centers 74 and 62
    swapped = run("p1")
    assert swapped[1] == seg_at_52.mask
    assert swapped[2] == seg_at_64.mask
    # appearance fusion restores the texture-consistent pairing
    fused = run("p2")
    assert fused[1] == seg_at_64.mask
    assert fused[2] == seg_at_52.mask


# ---------------------------------------------------------------------------
# mask merging


def test_merge_threshold_boundary():
    # strips on a 1-pixel-tall canvas: IoU 41/100 merges, 39/100 does not
    def one_frame(width_a):
        tracker = Tracker(flags="p4", classes=(1,))
        seg_a = Segment.from_mask(0, 1, 0.9, rect_mask(1, 100, 0, 0, width_a, 1))
        seg_b = Segment.from_mask(0, 1, 0.8, rect_mask(1, 100, 50, 0, 50, 1))
        return tracker.step(0, [seg_a, seg_b], BLANK[:1, :100])

    merged = one_frame(width_a=91)  # intersection 41, union 100
    assert len(merged.entries) == 1
    union = merged.entries[0][2]
    assert union.area == 100

    kept = one_frame(width_a=89)  # intersection 39, union 100
    assert len(kept.entries) == 2


def test_merge_disjoint_untouched():
    tracker = Tracker(flags="p4", classes=(1,))
    segs = [rect_segment(0, x=10, y=10), rect_segment(0, x=100, y=80)]
    result = tracker.step(0, segs, BLANK)
    assert len(result.entries) == 2


def test_merge_duplicate_keeps_higher_confidence_id():
    tracker = Tracker(flags="p4", classes=(1,))
    seg_low = rect_segment(0, x=30, y=30, conf=0.8)
    seg_high = rect_segment(0, x=30, y=30, conf=0.9)
    result = tracker.step(0, [seg_low, seg_high], BLANK)
    assert len(result.entries) == 1
    # the higher-confidence birth is track 2 (input order), and survives
    assert result.entries[0][0] == 2
    assert result.entries[0][2].area == 400


def test_merge_output_pairwise_below_threshold():
    tracker = Tracker(flags="p4", classes=(1,))
    # chain of overlapping strips collapses until everything is below t_m
    segs = [
        Segment.from_mask(0, 1, 0.9 - 0.01 * k, rect_mask(1, 200, 30 * k, 0, 80, 1))
        for k in range(4)
    ]
    result = tracker.step(0, segs, BLANK[:1, :200])
    masks = [e[2] for e in result.entries]
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            assert mask_iou(masks[i], masks[j]) <= 0.4


def test_merge_by_box_metric():
    tracker = Tracker(flags="p3", classes=(1,))
    segs = [rect_segment(0, x=30, y=30), rect_segment(0, x=36, y=30)]  # box IoU 14/26
    result = tracker.step(0, segs, BLANK)
    assert len(result.entries) == 1


# ---------------------------------------------------------------------------
# lost-track re-identification


def make_moving_sequence(flags_name="p5", occluded=range(5, 8), total=12, vx=6):
    """One textured target moving right, hidden during ``occluded`` frames."""
    tex = texture(7, 20, 20)
    tracker = Tracker(flags=flags_name, classes=(1,))
    emitted = []
    for f in range(total):
        x = 20 + vx * f
        if f in occluded:
            frame = render([])
            segs = []
        else:
            frame = render([(x, 40, tex)])
            segs = [rect_segment(f, x=x, y=40)]
        emitted.append(tracker.step(f, segs, frame))
    return emitted


def test_reidentification_keeps_identity_across_occlusion():
    emitted = make_moving_sequence("p5")
    ids = {e[0] for r in emitted for e in r.entries}
    assert len(ids) == 1


def test_without_reassociation_identity_splits():
    emitted = make_moving_sequence("p1")
    ids = {e[0] for r in emitted for e in r.entries}
    assert len(ids) == 2


def test_reassociation_prefers_on_path_candidate():
    tex = texture(9, 20, 20)
    other = texture(10, 20, 20)
    tracker = Tracker(flags="p5", classes=(1,))
    for f in range(5):
        x = 20 + 6 * f
        tracker.step(f, [rect_segment(f, x=x, y=40)], render([(x, 40, tex)]))
    sub = tracker._trackers[1]
    original_id = sub.live[0].id
    # two dark frames
    tracker.step(5, [], render([]))
    tracker.step(6, [], render([]))
    assert [t.id for t in sub.lost] == [original_id]
    # frame 7: on-path candidate (x = 44 + 3 * vx) with the same texture,
    # plus an off-path impostor behind
    on_x = 62
    off_x = 10
    frame = render([(on_x, 40, tex), (off_x, 40, other)])
    segs = [rect_segment(7, x=on_x, y=40), rect_segment(7, x=off_x, y=40)]
    tracker.step(7, segs, frame)
    by_id = {t.id: t for t in sub.live}
    assert original_id in by_id
    assert by_id[original_id].component.mean[0] == pytest.approx(on_x + 10, abs=2.0)


def test_empty_lost_set_is_noop():
    tracker = Tracker(flags="p5", classes=(1,))
    tex = texture(3, 20, 20)
    r = tracker.step(0, [rect_segment(0, x=30, y=30)], render([(30, 30, tex)]))
    assert len(r.entries) == 1


def test_lost_track_retires_after_max_age():
    cfg = TrackerConfig(max_lost_age=2)
    tracker = Tracker(config=cfg, flags="p1", classes=(1,))
    tracker.step(0, [rect_segment(0, x=30, y=30)], None)
    sub = tracker._trackers[1]
    for f in range(1, 5):
        tracker.step(f, [], None)
    assert sub.lost == []


# ---------------------------------------------------------------------------
# step-level invariants


def test_out_of_order_frame_rejected():
    tracker = Tracker(flags="p1", classes=(1,))
    tracker.step(0, [], None)
    with pytest.raises(ValueError):
        tracker.step(0, [], None)
    with pytest.raises(ValueError):
        tracker.step(5, [], None)


def test_per_class_independence():
    car = rect_segment(0, x=20, y=20, cls=1)
    ped_segs = [rect_segment(f, x=100 + 3 * f, y=60, cls=2) for f in range(4)]

    def run(with_cars):
        tracker = Tracker(flags="p1", classes=(1, 2))
        outputs = []
        for f in range(4):
            segs = [ped_segs[f]]
            if with_cars and f == 0:
                segs = [car] + segs
            outputs.append(
                tuple(e for e in tracker.step(f, segs, None).entries if e[1] == 2)
            )
        return outputs

    assert run(True) == run(False)


def test_status_machine_never_revives_dead():
    cfg = TrackerConfig(max_lost_age=1)
    tracker = Tracker(config=cfg, flags="p1", classes=(1,))
    tracker.step(0, [rect_segment(0, x=30, y=30)], None)
    sub = tracker._trackers[1]
    track = sub.live[0]
    tracker.step(1, [], None)
    assert track.status is TrackStatus.LOST
    assert track.t_l == 0
    tracker.step(2, [], None)
    tracker.step(3, [], None)
    assert track.status is TrackStatus.DEAD
    assert track not in sub.lost and track not in sub.live


def test_min_hits_suppresses_first_frame():
    cfg = TrackerConfig(min_hits=2)
    tracker = Tracker(config=cfg, flags="p1", classes=(1,))
    r0 = tracker.step(0, [rect_segment(0, x=30, y=30)], None)
    assert r0.entries == ()
    r1 = tracker.step(1, [rect_segment(1, x=30, y=30)], None)
    assert len(r1.entries) == 1


def test_emitted_ids_unique_per_frame():
    tracker = Tracker(flags="p4", classes=(1,))
    segs = [rect_segment(0, x=10 + 25 * k, y=10) for k in range(5)]
    result = tracker.step(0, segs, BLANK)
    keys = [(e[0], e[1]) for e in result.entries]
    assert len(keys) == len(set(keys))


def test_pipeline_flags_table():
    assert PipelineFlags.from_name("p1") == PipelineFlags(False, None, False)
    assert PipelineFlags.from_name("p2") == PipelineFlags(True, None, False)
    assert PipelineFlags.from_name("p3") == PipelineFlags(True, "box", False)
    assert PipelineFlags.from_name("p4") == PipelineFlags(True, "mask", False)
    assert PipelineFlags.from_name("p5") == PipelineFlags(True, "mask", True)
    with pytest.raises(ValueError):
        PipelineFlags.from_name("p6")


def test_config_from_file(tmp_path):
    path = tmp_path / "tracker.cfg"
    path.write_text(
        "# tracker settings\n"
        "t_m = 0.5\n"
        "alpha = 50\n"
        "min_hits = 2\n"
        "r = 1 0 0 1\n"
    )
    cfg = TrackerConfig.from_file(path)
    assert cfg.t_m == 0.5
    assert cfg.alpha == 50.0
    assert cfg.min_hits == 2
    assert np.array_equal(cfg.model.r, np.eye(2))
    assert np.array_equal(cfg.model.f, TrackerConfig().model.f)


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("tm = 0.5\n")
    with pytest.raises(ValueError):
        TrackerConfig.from_file(path)
