import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egoindex.errors import DegenerateField, EmptyInput
from egoindex.motion import (AffineMotion, BlockMotionField, BlockMotionVector, CornerState,
                             IDENTITY, Segment, advance_corners, cut_threshold, detect_cuts,
                             estimate_affine, estimate_motions, image_corners, key_frame,
                             segment_video)

from oracles import (affine_field, affine_normal_equations, compose_corners, grid_centers,
                     replay_cuts)


def make_field(params, width=320, height=240, frame=0):
    c = grid_centers(width, height)
    return BlockMotionField(frame, width, height, np.column_stack([c, affine_field(params, c)]))


def test_zero_field():
    a = estimate_affine(make_field([0] * 6))
    np.testing.assert_allclose(a.as_array(), 0.0, atol=1e-12)


def test_pure_translation():
    a = estimate_affine(make_field([2, 0, 0, -1, 0, 0]))
    np.testing.assert_allclose(a.as_array(), [2, 0, 0, -1, 0, 0], atol=1e-12)


def test_recovers_scripted_parameters():
    params = [1, 0.01, -0.002, 0.5, 0.003, 0.02]
    field = make_field(params)
    a = estimate_affine(field)
    oracle = affine_normal_equations(field.centers, field.displacements)
    np.testing.assert_allclose(oracle, params, atol=1e-9)
    np.testing.assert_allclose(a.as_array(), params, atol=1e-9)


def test_least_squares_with_noise_matches_stacked_oracle():
    rng = np.random.default_rng(4)
    c = grid_centers(320, 240)
    d = affine_field([1, 0.01, -0.002, 0.5, 0.003, 0.02], c) + rng.normal(0, 0.5, (len(c), 2))
    a = estimate_affine(BlockMotionField(0, 320, 240, np.column_stack([c, d])))
    np.testing.assert_allclose(a.as_array(), affine_normal_equations(c, d), atol=1e-9)


def test_residual_is_locally_optimal():
    rng = np.random.default_rng(5)
    c = grid_centers(160, 128)
    d = affine_field([0.3, 0.02, 0.0, -2.0, 0.0, -0.01], c) + rng.normal(0, 1.0, (len(c), 2))
    field = BlockMotionField(0, 160, 128, np.column_stack([c, d]))
    a = estimate_affine(field)

    def rss(p):
        return float(((d - AffineMotion.from_array(p).displacement(c)) ** 2).sum())

    best = rss(a.as_array())
    scale = np.array([0.1, 1e-3, 1e-3, 0.1, 1e-3, 1e-3])
    for _ in range(100):
        assert best <= rss(a.as_array() + rng.normal(0, 1, 6) * scale)


def test_degenerate_fields():
    with pytest.raises(DegenerateField):
        estimate_affine(BlockMotionField(0, 64, 64, [[8, 8, 0, 0], [24, 8, 0, 0]]))
    collinear = [[8 + 16 * k, 8 + 16 * k, 1.0, 1.0] for k in range(4)]
    with pytest.raises(DegenerateField):
        estimate_affine(BlockMotionField(0, 64, 64, collinear))
    with pytest.raises(DegenerateField):
        estimate_affine(BlockMotionField(0, 64, 64, np.empty((0, 4))))


def test_from_vectors():
    vecs = [BlockMotionVector(8, 8, 1, 0), BlockMotionVector(24, 8, 1, 0), BlockMotionVector(8, 24, 1, 0)]
    a = estimate_affine(BlockMotionField.from_vectors(3, 32, 32, vecs))
    np.testing.assert_allclose(a.as_array(), [1, 0, 0, 0, 0, 0], atol=1e-12)


def test_degenerate_frame_inherits_previous_motion():
    good = make_field([1, 0, 0, 0, 0, 0], frame=0)
    bad = BlockMotionField(1, 320, 240, np.empty((0, 4)))
    first_bad = BlockMotionField(0, 320, 240, np.empty((0, 4)))
    motions, degenerate = estimate_motions([good, bad])
    assert degenerate == [1]
    assert motions[1] == motions[0]
    motions, degenerate = estimate_motions([first_bad, good])
    assert motions[0] == IDENTITY and degenerate == [0]


def test_robust_mode_rejects_outliers():
    rng = np.random.default_rng(7)
    params = [1.5, 0.01, -0.004, -0.7, 0.002, 0.015]
    c = grid_centers(320, 240)
    d = affine_field(params, c)
    idx = rng.choice(len(c), len(c) // 10, replace=False)
    d[idx] = rng.uniform(-30, 30, (len(idx), 2))
    field = BlockMotionField(0, 320, 240, np.column_stack([c, d]))
    plain = estimate_affine(field).as_array()
    robust = estimate_affine(field, robust=True).as_array()
    assert np.max(np.abs(plain - params)) > 1e-2
    np.testing.assert_allclose(robust, params, atol=1e-3)


@settings(max_examples=60, deadline=None)
@given(
    params=st.tuples(st.floats(-10, 10), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05),
                     st.floats(-10, 10), st.floats(-0.05, 0.05), st.floats(-0.05, 0.05)),
    cols=st.integers(3, 25), rows=st.integers(3, 20),
)
def test_recovery_property(params, cols, rows):
    a = estimate_affine(make_field(params, 16 * cols, 16 * rows))
    np.testing.assert_allclose(a.as_array(), params, atol=1e-9)


# --- corners ------------------------------------------------------------------

def test_identity_motion_keeps_corners():
    s = CornerState.at_rest(320, 240)
    s2 = advance_corners(s, IDENTITY)
    np.testing.assert_array_equal(s2.positions, s.positions)


def test_translation_accumulates():
    s = CornerState.at_rest(320, 240)
    for _ in range(7):
        s = advance_corners(s, AffineMotion(a1=1.0))
    np.testing.assert_allclose(s.displacement[:, 0], 7.0)
    np.testing.assert_allclose(s.displacement[:, 1], 0.0)


def test_zoom_matches_homogeneous_composition():
    zoom = [0, 0.01, 0, 0, 0, 0.01]
    s = CornerState.at_rest(320, 240)
    for _ in range(2):
        s = advance_corners(s, AffineMotion.from_array(zoom))
    expected = compose_corners(image_corners(320, 240), [zoom, zoom])
    np.testing.assert_allclose(s.positions, expected, atol=1e-12)
    # (1.01)^2 scaling of the far corner
    np.testing.assert_allclose(s.displacement[3], [320 * 0.0201, 240 * 0.0201], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.tuples(st.floats(-20, 20), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2),
                 st.floats(-20, 20), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2)))
def test_inverse_motion_round_trip(params):
    m = AffineMotion.from_array(params)
    s = CornerState.at_rest(320, 240)
    back = advance_corners(advance_corners(s, m), m.inverse())
    np.testing.assert_allclose(back.displacement, s.displacement, atol=1e-9)


# --- segmentation -------------------------------------------------------------

def test_zero_motion_one_segment():
    segs = segment_video([IDENTITY] * 100, 320)
    assert segs == [Segment(0, 99)]


def test_threshold_is_fifth_of_width():
    assert cut_threshold(320) == pytest.approx(64.0)


def test_single_jump_cuts_after_frame():
    motions = [IDENTITY] * 60
    motions[30] = AffineMotion(a1=70.0)
    assert replay_cuts([m.as_array() for m in motions], 320, 240, 64.0) == [30]
    assert segment_video(motions, 320, 240) == [Segment(0, 30), Segment(31, 59)]


def test_empty_input():
    with pytest.raises(EmptyInput):
        segment_video([], 320)


def test_short_segments_merge_forward_and_trailing_backward():
    motions = [IDENTITY] * 20
    motions[2] = AffineMotion(a1=100.0)   # raw [0,2] is short -> merges into next
    motions[17] = AffineMotion(a1=100.0)  # raw [18,19] trailing short -> merges back
    assert segment_video(motions, 320, 240) == [Segment(0, 19)]
    motions[9] = AffineMotion(a1=100.0)
    assert segment_video(motions, 320, 240) == [Segment(0, 9), Segment(10, 19)]


@pytest.mark.parametrize("seg,expected", [((10, 20), 15), ((0, 4), 2), ((7, 12), 9)])
def test_key_frame(seg, expected):
    assert key_frame(Segment(*seg)) == expected
    assert Segment(*seg).key_frame == expected


def random_motions(rng, n):
    out = []
    for _ in range(n):
        t = rng.normal(0, rng.choice([0.5, 4.0, 15.0]), 2)
        lin = rng.normal(0, 0.002, 4)
        out.append(AffineMotion(t[0], lin[0], lin[1], t[1], lin[2], lin[3]))
    return out


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(8, 300), min_len=st.integers(1, 8))
def test_segments_tile_and_respect_min_len(seed, n, min_len):
    motions = random_motions(np.random.default_rng(seed), n)
    segs = segment_video(motions, 320, 240, min_len=min_len)
    assert segs[0].start_frame == 0 and segs[-1].end_frame == n - 1
    for a, b in zip(segs, segs[1:]):
        assert b.start_frame == a.end_frame + 1
    assert all(s.length >= min_len for s in segs)
    assert segment_video(motions, 320, 240, min_len=min_len) == segs


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_cuts_exceed_threshold_and_match_replay(seed):
    motions = random_motions(np.random.default_rng(seed), 200)
    cuts, disp = detect_cuts(motions, 320, 240)
    assert list(cuts) == replay_cuts([m.as_array() for m in motions], 320, 240, 64.0)
    assert np.all(disp[cuts] > 64.0)


def test_mean_corner_aggregate_under_zoom():
    # pure zoom moves the far corner most; the mean of the four stays below the max
    motions = [AffineMotion(a2=0.05, a6=0.05)] * 40
    cuts_max, d_max = detect_cuts(motions, 320, 240)
    cuts_mean, d_mean = detect_cuts(motions, 320, 240, aggregate="mean")
    assert len(cuts_mean) <= len(cuts_max)
    assert d_mean[0] < d_max[0]
    with pytest.raises(ValueError):
        detect_cuts(motions, 320, 240, aggregate="median")
