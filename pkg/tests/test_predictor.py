import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camsel.errors import HistoryTooShort, SingularNormalEquations
from camsel.geometry import project_points
from camsel.occlusion import projected_scene_iou
from camsel.predictor import (
    AUTOREGRESSIVE,
    PoseHistory,
    PredictorModel,
    load_model,
    predict,
    predict_array,
    predict_tracks,
    predicted_occlusions,
    ridge_fit,
    rollout_loss,
    save_model,
    train_autoregressive,
)
from camsel.sim.scene import TEMPLATE
from conftest import ring_rig

MV = PredictorModel.motion_vector(14)


def linear_track(start, v, slots):
    """(slots, J, 3) person moving by ``v`` mm per slot."""
    return TEMPLATE[None] + start + np.arange(slots)[:, None, None] * np.asarray(v, dtype=float)


def sinusoid_track(rng, slots):
    amp = rng.uniform(300, 800, 2)
    period = rng.uniform(40, 90)
    phase = rng.uniform(0, 2 * np.pi, 2)
    t = np.arange(slots)[:, None]
    xy = amp * np.sin(2 * np.pi * t / period + phase)
    offset = np.zeros((slots, 1, 3))
    offset[:, 0, :2] = xy
    return TEMPLATE[None] + offset


def test_static_history_motion_vector_exact():
    tracks = np.repeat(TEMPLATE[None, None], 5, axis=1)
    for tau in (1, 3, 7):
        assert np.array_equal(predict_array(MV, tracks, tau)[0], TEMPLATE)


def test_static_history_autoregressive():
    static = [np.repeat((TEMPLATE + [x, y, 0])[None], 60, axis=0) for x, y in [(0, 0), (500, -300), (-800, 900)]]
    model, _ = train_autoregressive(static, tau=3, lam=1e-6, M=5)
    tracks = np.repeat((TEMPLATE + [200, 100, 0])[None, None], 5, axis=1)
    assert np.abs(predict_array(model, tracks, 3)[0] - tracks[0, -1]).max() < 1e-6


def test_linear_motion_vector_tau4():
    v = np.array([12.0, -5.0, 0.0])
    tr = linear_track(np.zeros(3), v, 6)
    assert np.allclose(predict_array(MV, tr[None], 4)[0], tr[-1] + 4 * v, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    st.lists(st.floats(-2000, 2000), min_size=3, max_size=3),
    st.integers(1, 20),
)
def test_motion_vector_exact_on_affine_tracks(v, start, tau):
    tr = linear_track(np.array(start), v, 12)
    pred = predict_array(MV, tr[None, :6], tau)[0]
    assert np.allclose(pred, tr[5] + tau * np.asarray(v), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.floats(-3000, 3000), min_size=3, max_size=3), st.integers(1, 10))
def test_motion_vector_translation_equivariant(seed, offset, tau):
    rng = np.random.default_rng(seed)
    tracks = rng.normal(0, 500, (2, 4, 14, 3))
    a = predict_array(MV, tracks, tau)
    b = predict_array(MV, tracks + np.asarray(offset), tau)
    assert np.allclose(b, a + np.asarray(offset), atol=1e-9)


def test_history_too_short():
    with pytest.raises(HistoryTooShort):
        predict_array(MV, np.zeros((1, 1, 14, 3)), 1)
    model = PredictorModel(AUTOREGRESSIVE, 5, 14, np.zeros(42 * 210))
    with pytest.raises(HistoryTooShort):
        predict_array(model, np.zeros((1, 4, 14, 3)), 1)


def test_autoregressive_beats_motion_vector_on_sinusoids():
    train_rng = np.random.default_rng(100)
    model, _ = train_autoregressive([sinusoid_track(train_rng, 300) for _ in range(20)], tau=5, lam=1e-4, M=5)
    ar_err, mv_err = [], []
    for seed in range(10):
        tr = sinusoid_track(np.random.default_rng(seed), 200)
        idx = np.arange(5)[None] + np.arange(0, 190)[:, None]
        hist, future = tr[idx], tr[idx[:, -1] + 5]
        ar_err.append(np.linalg.norm(predict_array(model, hist, 5) - future, axis=-1).mean())
        mv_err.append(np.linalg.norm(predict_array(MV, hist, 5) - future, axis=-1).mean())
    assert np.mean(ar_err) < np.mean(mv_err)


def test_constant_velocity_training_extrapolates():
    rng = np.random.default_rng(1)
    train = [linear_track(rng.uniform(-1000, 1000, 3), rng.uniform(-30, 30, 3) * [1, 1, 0], 40) for _ in range(30)]
    model, loss = train_autoregressive(train, tau=5, lam=1e-6, M=5)
    held = [linear_track(rng.uniform(-1000, 1000, 3), rng.uniform(-30, 30, 3) * [1, 1, 0], 30) for _ in range(10)]
    held_loss = rollout_loss(model, held, 5)
    # loss sums squared errors over 5 steps and all joints; < (1e-3 mm)^2 each
    assert held_loss < 5 * 14 * 1e-6
    assert loss < 5 * 14 * 1e-6


def test_large_ridge_shrinks_to_zero():
    rng = np.random.default_rng(2)
    data = [sinusoid_track(rng, 80) for _ in range(3)]
    model, _ = train_autoregressive(data, tau=2, lam=1e14, M=3)
    assert np.abs(model.params).max() < 1e-4
    pred = predict_array(model, data[0][None, :3], 2)
    assert np.abs(pred).max() < 1.0


def test_training_errors():
    with pytest.raises(ValueError):
        train_autoregressive([], tau=3)
    static = [np.repeat(TEMPLATE[None], 30, axis=0)]
    with pytest.raises(SingularNormalEquations):
        train_autoregressive(static, tau=3, lam=0.0)
    with pytest.raises(ValueError):
        train_autoregressive(static, tau=3, input_noise=-1.0)


def test_ridge_fit_matches_normal_equations(rng):
    X = rng.normal(size=(200, 12))
    Y = rng.normal(size=(200, 4))
    lam = 0.3
    W = ridge_fit(X, Y, lam)
    ref = np.linalg.solve(X.T @ X + lam * np.eye(12), X.T @ Y).T
    assert np.allclose(W, ref, atol=1e-10)


def test_rollout_loss_matches_direct_sum():
    rng = np.random.default_rng(4)
    seq = sinusoid_track(rng, 30)
    tau = 3
    expected = []
    for t in range(2, 30 - tau + 1):
        pred = [seq[t - 1] + l * (seq[t - 1] - seq[t - 2]) for l in range(1, tau + 1)]
        expected.append(sum(((p - seq[t - 1 + l]) ** 2).sum() for l, p in enumerate(pred, 1)))
    assert rollout_loss(MV, [seq], tau) == pytest.approx(np.mean(expected), rel=1e-12)


def test_model_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    model, _ = train_autoregressive([sinusoid_track(rng, 60)], tau=2, lam=1e-3, M=3)
    path = tmp_path / "model.txt"
    save_model(model, path)
    back = load_model(path)
    assert (back.kind, back.M, back.J) == (model.kind, model.M, model.J)
    assert np.array_equal(back.params, model.params)
    path.write_text("garbage\n")
    with pytest.raises(ValueError):
        load_model(path)


def test_parameter_count_checked():
    with pytest.raises(ValueError):
        PredictorModel(AUTOREGRESSIVE, 5, 14, np.zeros(10))
    with pytest.raises(ValueError):
        PredictorModel("lstm", 5, 14)


def test_predict_tracks_holds_short_tracks_static():
    long = linear_track(np.zeros(3), [10, 0, 0], 5)
    short = linear_track(np.array([500.0, 0, 0]), [10, 0, 0], 1)
    out = predict_tracks(MV, [long, short], 3)
    assert np.allclose(out[0], long[-1] + 30 * np.array([1, 0, 0]))
    assert np.array_equal(out[1], short[-1])


def test_predict_returns_labelled_poses():
    hist = PoseHistory(np.stack([linear_track(np.zeros(3), [5, 0, 0], 4)]), person_ids=(7,))
    (pose,) = predict(MV, hist, 2)
    assert pose.person_id == 7 and pose.valid.all()


def test_single_person_has_zero_occlusion():
    hist = PoseHistory(np.stack([linear_track(np.zeros(3), [5, 0, 0], 4)]))
    assert np.all(predicted_occlusions(MV, hist, ring_rig(5), 3) == 0.0)


def test_coincident_in_one_camera_only():
    cams = ring_rig(5)
    c3 = cams[3].center[:3] / cams[3].center[3]
    a = TEMPLATE + [-600.0, 300.0, 0.0]
    b = c3 + 1.6 * (a - c3)  # same rays from camera 3, farther away
    tracks = np.stack([np.repeat(a[None], 3, axis=0), np.repeat(b[None], 3, axis=0)])
    iou = predicted_occlusions(MV, PoseHistory(tracks), cams, 2)
    assert iou[3] == pytest.approx(1.0, abs=1e-9)
    # box oracle for the other cameras: projected extents never overlap
    for n in (0, 1, 2, 4):
        ua, _ = project_points(cams[n].P, a)
        ub, _ = project_points(cams[n].P, b)
        lo_a, hi_a = ua.min(0), ua.max(0)
        lo_b, hi_b = ub.min(0), ub.max(0)
        g_a, g_b = 0.05 * (hi_a - lo_a), 0.05 * (hi_b - lo_b)
        overlap = np.all(np.minimum(hi_a + g_a, hi_b + g_b) > np.maximum(lo_a - g_a, lo_b - g_b))
        assert not overlap
        assert iou[n] == 0.0


def test_tau_one_prediction_matches_true_future_iou():
    cams = ring_rig(5)
    rng = np.random.default_rng(6)
    Ps = np.stack([c.P for c in cams])
    for _ in range(20):
        starts = np.c_[rng.uniform(-1200, 1200, (3, 2)), np.zeros(3)]
        vel = np.c_[rng.uniform(-40, 40, (3, 2)), np.zeros(3)]
        tracks = np.stack([linear_track(s, v, 6) for s, v in zip(starts, vel)])
        hist = PoseHistory(tracks[:, :5])
        got = predicted_occlusions(MV, hist, cams, 1)
        truth = projected_scene_iou(Ps, tracks[:, 5])
        assert np.allclose(got, truth, atol=1e-6)
        assert np.all((got >= 0) & (got <= 1))


def test_motion_vector_error_grows_with_tau_on_curves():
    errs = []
    for tau in range(1, 6):
        e = []
        for seed in range(10):
            tr = sinusoid_track(np.random.default_rng(seed), 150)
            idx = np.arange(2)[None] + np.arange(0, 150 - 2 - tau)[:, None]
            pred = predict_array(MV, tr[idx], tau)
            e.append(np.linalg.norm(pred - tr[idx[:, -1] + tau], axis=-1).mean())
        errs.append(np.mean(e))
    assert np.all(np.diff(errs) >= 0)
