"""Tests for variational inter-frame flow and .flo serialization."""

import numpy as np
import pytest

from rectiflow import DataError, Direction, FlowField, FormatError, ShapeError
from rectiflow.interflow import (
    HSParams,
    estimate_flow,
    estimate_flow_with_energy,
    read_flo,
    reverse_pair,
    write_flo,
)
from rectiflow.synth import CameraSpec, JitterProfile, JitterSpec, apply_jitter, default_scene, render_scene


def _smooth_frame(size=128, seed=31):
    cam = CameraSpec(width=size, height=size, focal_px=4.0 * size)
    spec = default_scene(cam, n_lines=0, n_faces=0, seed=seed)
    frame, _ = render_scene(spec, cam, distorted=False)
    return frame


def _translated_pair(size=128, shift=2.0):
    # Sinusoidal period 4 puts the second frame at exactly (shift, 0).
    frame = _smooth_frame(size)
    spec = JitterSpec(amplitude=shift, profile=JitterProfile.SINUSOIDAL,
                      period_frames=4, rotation=False)
    frames, flows = apply_jitter([frame, frame], spec)
    return frames[0], frames[1], flows[0]


def test_identical_frames_give_near_zero_flow():
    frame = _smooth_frame(64)
    flow = estimate_flow(frame, frame, HSParams())
    assert flow.direction is Direction.FORWARD
    assert np.mean(np.hypot(flow.u, flow.v)) < 1e-3


def test_translation_recovered():
    a, b, true_flow = _translated_pair()
    assert np.allclose(true_flow.u, 2.0) and np.allclose(true_flow.v, 0.0)
    flow = estimate_flow(a, b, HSParams())
    c = slice(16, -16)
    assert abs(np.mean(flow.u[c, c]) - 2.0) < 0.2
    assert abs(np.mean(flow.v[c, c])) < 0.2


def test_reverse_pair_negates_translation():
    a, b, _ = _translated_pair()
    back = reverse_pair(a, b, HSParams())
    c = slice(16, -16)
    assert abs(np.mean(back.u[c, c]) + 2.0) < 0.3
    assert abs(np.mean(back.v[c, c])) < 0.3


def test_forward_backward_consistency():
    a, b, _ = _translated_pair()
    fab = estimate_flow(a, b, HSParams())
    fba = reverse_pair(a, b, HSParams())
    g = np.mgrid[0:128, 0:128].astype(np.float64)
    from rectiflow import BorderPolicy, sample_bilinear
    bu = sample_bilinear(fba.u, g[1] + fab.u, g[0] + fab.v, BorderPolicy.CLAMP)
    bv = sample_bilinear(fba.v, g[1] + fab.u, g[0] + fab.v, BorderPolicy.CLAMP)
    c = slice(16, -16)
    resid = np.hypot((fab.u + bu)[c, c], (fab.v + bv)[c, c])
    assert np.mean(resid) < 0.5


def test_energy_non_increasing_at_finest_level():
    a, b, _ = _translated_pair(size=64)
    _, energies = estimate_flow_with_energy(a, b, HSParams(iterations=40))
    assert energies.size == 41
    diffs = np.diff(energies)
    assert np.all(diffs <= 1e-9 * (1.0 + np.abs(energies[:-1])))


def test_estimate_rejects_dimension_mismatch():
    a = _smooth_frame(32)
    b = _smooth_frame(64)
    with pytest.raises(ShapeError):
        estimate_flow(a, b, HSParams())


def test_flo_round_trip_float32_lossless():
    rng = np.random.default_rng(17)
    flow = FlowField(u=rng.uniform(-30, 30, (9, 13)), v=rng.uniform(-30, 30, (9, 13)),
                     direction=Direction.FORWARD)
    back = read_flo(write_flo(flow), Direction.FORWARD)
    assert np.max(np.abs(back.u - flow.u)) < 1e-4  # float32 quantization
    assert np.max(np.abs(back.v - flow.v)) < 1e-4
    # Exact against the float32 representation.
    assert np.array_equal(back.u, flow.u.astype(np.float32).astype(np.float64))
    # Round trip of already-quantized data is bit-exact.
    assert write_flo(back) == write_flo(back)
    again = read_flo(write_flo(back), Direction.FORWARD)
    assert np.array_equal(again.u, back.u) and np.array_equal(again.v, back.v)


def test_flo_single_pixel_is_20_bytes_and_pieh_magic():
    flow = FlowField(u=np.array([[1.5]]), v=np.array([[-2.25]]), direction=Direction.BACKWARD)
    data = write_flo(flow)
    assert len(data) == 20
    assert data[:4] == b"PIEH"
    back = read_flo(data, Direction.BACKWARD)
    assert back.u[0, 0] == 1.5 and back.v[0, 0] == -2.25


def test_flo_error_contracts():
    flow = FlowField.zeros(2, 3, Direction.FORWARD)
    good = write_flo(flow)
    import struct
    bad_magic = struct.pack("<fii", 202021.0, 3, 2) + good[12:]
    with pytest.raises(FormatError):
        read_flo(bad_magic, Direction.FORWARD)
    with pytest.raises(ShapeError):
        read_flo(good[:-4], Direction.FORWARD)
    nan_payload = good[:12] + np.full(12, np.nan, dtype="<f4").tobytes()
    with pytest.raises(DataError):
        read_flo(nan_payload, Direction.FORWARD)
    with pytest.raises(FormatError):
        read_flo(struct.pack("<fii", 202021.25, -1, 2) + b"", Direction.FORWARD)
