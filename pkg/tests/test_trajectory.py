"""Tests for residuals, trajectory accumulation, and similarity fitting."""

import numpy as np
import pytest

from rectiflow import ContractError, Direction, DirectionError, FlowField, ShapeError, make_grid
from rectiflow.trajectory import (
    TrajectorySeries,
    accumulate,
    fit_similarity,
    residual_backward,
    residual_forward,
    trajectory_csv,
    trajectory_of_sequence,
)


def _const(h, w, u, v, direction):
    return FlowField(u=np.full((h, w), float(u)), v=np.full((h, w), float(v)),
                     direction=direction)


def _affine(h, w, cu, cv, direction):
    """Affine field u = cu[0]*x + cu[1]*y + cu[2], likewise v."""
    g = make_grid(h, w)
    return FlowField(u=cu[0] * g.x + cu[1] * g.y + cu[2],
                     v=cv[0] * g.x + cv[1] * g.y + cv[2], direction=direction)


def test_residual_backward_zero_for_static_consistent_input():
    f = _const(4, 4, 0.3, -0.2, Direction.BACKWARD)
    zero = _const(4, 4, 0, 0, Direction.FORWARD)
    r = residual_backward(f, f, zero)
    assert np.max(np.abs(r)) == 0.0


def test_residual_backward_consistency_construction():
    # F_t1 built so the residual is algebraically zero; affine fields keep
    # bilinear resampling exact away from clamped borders.
    h, w = 32, 32
    g = make_grid(h, w)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    f_t = FlowField(u=0.05 * (cx - g.x), v=0.04 * (cy - g.y), direction=Direction.BACKWARD)
    fwd = FlowField(u=0.02 * (cx - g.x) + 0.3, v=0.01 * (cy - g.y) - 0.2,
                    direction=Direction.FORWARD)
    xs = g.x + f_t.u
    ys = g.y + f_t.v
    f_t1 = FlowField(u=(0.02 * (cx - xs) + 0.3) + f_t.u,
                     v=(0.01 * (cy - ys) - 0.2) + f_t.v, direction=Direction.BACKWARD)
    r = residual_backward(f_t, f_t1, fwd)
    assert np.max(np.abs(r)) < 1e-9


def test_residual_backward_constant_case_and_accumulation():
    f = _const(4, 4, 0.5, -0.25, Direction.BACKWARD)
    motion = _const(4, 4, 1.25, 0.75, Direction.FORWARD)
    r = residual_backward(f, f, motion)
    assert np.allclose(r[..., 0], 1.25, atol=1e-12) and np.allclose(r[..., 1], 0.75, atol=1e-12)
    series = trajectory_of_sequence([f, f, f], [motion, motion])
    assert np.allclose(series.positions[2, ..., 0], 2.5, atol=1e-12)
    assert np.allclose(series.positions[2, ..., 1], 1.5, atol=1e-12)
    # Mean displacement grows linearly in t.
    means = series.mean_displacements()
    assert np.allclose(means[:, 0], [0.0, 1.25, 2.5], atol=1e-12)


def test_residual_backward_direction_contracts():
    back = _const(4, 4, 0, 0, Direction.BACKWARD)
    fwd = _const(4, 4, 0, 0, Direction.FORWARD)
    with pytest.raises(DirectionError):
        residual_backward(fwd, back, fwd)
    with pytest.raises(DirectionError):
        residual_backward(back, back, back)


def test_residual_forward_matches_pointwise_oracle():
    rng = np.random.default_rng(23)

    def smooth(direction):
        g = make_grid(4, 4)
        a, b, c, d, e, f = rng.uniform(-0.05, 0.05, 6)
        return FlowField(u=a * g.x + b * g.y + c, v=d * g.x + e * g.y + f, direction=direction)

    f_t = smooth(Direction.FORWARD)
    f_t1 = smooth(Direction.FORWARD)
    f_bwd = smooth(Direction.FORWARD)
    r = residual_forward(f_t, f_t1, f_bwd)

    def clamp_sample(ch, x, y):
        x = min(max(x, 0.0), 3.0)
        y = min(max(y, 0.0), 3.0)
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        x1, y1 = min(x0 + 1, 3), min(y0 + 1, 3)
        a, b = x - x0, y - y0
        return ((1 - a) * (1 - b) * ch[y0, x0] + a * (1 - b) * ch[y0, x1]
                + (1 - a) * b * ch[y1, x0] + a * b * ch[y1, x1])

    for i in range(4):
        for j in range(4):
            x = j + f_bwd.u[i, j]
            y = i + f_bwd.v[i, j]
            ru = f_bwd.u[i, j] + clamp_sample(f_t.u, x, y) - f_t1.u[i, j]
            rv = f_bwd.v[i, j] + clamp_sample(f_t.v, x, y) - f_t1.v[i, j]
            assert r[i, j, 0] == pytest.approx(ru, abs=1e-12)
            assert r[i, j, 1] == pytest.approx(rv, abs=1e-12)


def test_residual_forward_trivial_cases():
    zero = _const(3, 3, 0, 0, Direction.FORWARD)
    assert np.max(np.abs(residual_forward(zero, zero, zero))) == 0.0
    f = _const(3, 3, 0.4, 0.1, Direction.FORWARD)
    assert np.max(np.abs(residual_forward(f, f, zero))) == 0.0


def test_accumulate_prefix_sums_and_contract():
    c = np.full((2, 2, 2), 0.5)
    series = accumulate([np.zeros((2, 2, 2)), c, c])
    assert np.array_equal(series.positions[0], np.zeros((2, 2, 2)))
    assert np.array_equal(series.positions[1], c)
    assert np.array_equal(series.positions[2], 2 * c)
    with pytest.raises(ContractError):
        accumulate([c, c])


def test_accumulate_matches_loop_oracle_bit_exactly():
    rng = np.random.default_rng(37)
    residuals = [np.zeros((3, 5, 2))] + [rng.standard_normal((3, 5, 2)) for _ in range(9)]
    series = accumulate(residuals)
    acc = np.zeros((3, 5, 2))
    for t, r in enumerate(residuals):
        acc = acc + r
        assert np.array_equal(series.positions[t], acc)


def test_accumulate_is_linear():
    rng = np.random.default_rng(41)
    a = [np.zeros((4, 4, 2))] + [rng.standard_normal((4, 4, 2)) for _ in range(4)]
    b = [np.zeros((4, 4, 2))] + [rng.standard_normal((4, 4, 2)) for _ in range(4)]
    lhs = accumulate([x + y for x, y in zip(a, b)]).positions
    rhs = accumulate(a).positions + accumulate(b).positions
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_trajectory_of_sequence_boundaries():
    f = _const(4, 4, 0.1, 0.2, Direction.BACKWARD)
    single = trajectory_of_sequence([f], [])
    assert single.n_frames == 1
    assert np.max(np.abs(single.positions)) == 0.0
    with pytest.raises(ShapeError):
        trajectory_of_sequence([f, f], [])


def test_trajectory_recovers_translation_jitter():
    from rectiflow.synth import (CameraSpec, JitterProfile, JitterSpec, apply_jitter,
                                 default_scene, render_scene, stereographic_correction_flow)
    cam = CameraSpec(width=48, height=48, focal_px=60.0)
    frame, _ = render_scene(default_scene(cam, 2, 1, seed=2), cam, distorted=True)
    spec = JitterSpec(amplitude=1.5, profile=JitterProfile.SINUSOIDAL, period_frames=5,
                      rotation=False)
    n = 8
    _, flows = apply_jitter([frame] * n, spec)
    g_flow = stereographic_correction_flow(cam)
    series = trajectory_of_sequence([g_flow] * n, flows)
    means = series.mean_displacements()
    t = np.arange(n)
    expected = 1.5 * np.sin(2.0 * np.pi * t / 5.0)
    assert np.max(np.abs(means[:, 0] - expected)) < 1e-9
    assert np.max(np.abs(means[:, 1])) < 1e-9


def test_fit_similarity_translation_rotation_scale():
    zero = np.zeros((10, 12, 2))
    assert fit_similarity(zero) == (0.0, 0.0, 0.0, 1.0)

    trans = np.zeros((10, 12, 2))
    trans[..., 0] = 3.0
    trans[..., 1] = -2.0
    tx, ty, theta, scale = fit_similarity(trans)
    assert (tx, ty) == (3.0, -2.0) and theta == 0.0 and scale == 1.0

    g = make_grid(17, 17)
    cx = cy = 8.0
    ang = 0.01
    rx = np.cos(ang) * (g.x - cx) - np.sin(ang) * (g.y - cy) + cx
    ry = np.sin(ang) * (g.x - cx) + np.cos(ang) * (g.y - cy) + cy
    rot = np.stack([rx - g.x, ry - g.y], axis=-1)
    tx, ty, theta, scale = fit_similarity(rot)
    assert abs(theta - 0.01) < 1e-6
    assert abs(scale - 1.0) < 1e-6 and abs(tx) < 1e-9 and abs(ty) < 1e-9

    grown = np.stack([0.02 * (g.x - cx), 0.02 * (g.y - cy)], axis=-1)
    _, _, theta, scale = fit_similarity(grown)
    assert abs(scale - 1.02) < 1e-9 and abs(theta) < 1e-12


def test_trajectory_csv_shape():
    f = _const(8, 8, 0.1, 0.0, Direction.BACKWARD)
    motion = _const(8, 8, 0.5, -0.5, Direction.FORWARD)
    series = trajectory_of_sequence([f, f, f], [motion, motion])
    csv = trajectory_csv(series)
    lines = csv.strip().split("\n")
    assert lines[0] == "t,mean_rx,mean_ry,tx,ty,theta"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[0] == "1" and float(first[1]) == 0.0
    assert float(lines[2].split(",")[1]) == pytest.approx(0.5, abs=1e-12)
