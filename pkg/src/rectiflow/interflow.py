"""Inter-frame optical flow: coarse-to-fine variational estimation plus
bit-exact Middlebury `.flo` serialization.

The estimator minimizes the classic quadratic brightness-constancy plus
smoothness energy on a 4-neighbor grid. Updates are red-black block
coordinate descent: pixels of one color decouple given the other color,
so each half-sweep solves its subproblem exactly and the energy of the
level's linearization never increases. Coarse-to-fine warping handles
motions beyond the linear range.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError, FormatError, ShapeError
from .field import BorderPolicy, Direction, FlowField, Frame, make_grid, sample_bilinear

_GRAY_SCALE = 255.0  # internal intensity scale so default alpha matches convention


@dataclass(frozen=True)
class HSParams:
    """Estimator parameters: smoothness weight, sweeps per level, pyramid."""

    alpha: float = 15.0
    iterations: int = 100
    pyramid_levels: int = 4
    downscale: float = 0.5

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise DataError(f"alpha must be positive, got {self.alpha}")
        if self.iterations < 1 or self.pyramid_levels < 1:
            raise DataError("iterations and pyramid_levels must be >= 1")
        if not (0.0 < self.downscale < 1.0):
            raise DataError(f"downscale must be in (0, 1), got {self.downscale}")


def _to_gray(frame: Frame) -> np.ndarray:
    return frame.gray() * _GRAY_SCALE


def _downsample(img: np.ndarray, factor: float) -> np.ndarray:
    h = max(4, int(round(img.shape[0] * factor)))
    w = max(4, int(round(img.shape[1] * factor)))
    smoothed = ndimage.gaussian_filter(img, sigma=1.0, mode="nearest")
    return ndimage.zoom(smoothed, (h / img.shape[0], w / img.shape[1]), order=1, mode="nearest")


def _pyramid(img: np.ndarray, params: HSParams) -> list[np.ndarray]:
    levels = [img]
    for _ in range(params.pyramid_levels - 1):
        prev = levels[-1]
        if min(prev.shape) * params.downscale < 8:
            break
        levels.append(_downsample(prev, params.downscale))
    return levels[::-1]  # coarsest first


def _upsample_flow(u: np.ndarray, v: np.ndarray, shape: tuple[int, int]):
    fy = shape[0] / u.shape[0]
    fx = shape[1] / u.shape[1]
    u2 = ndimage.zoom(u, (fy, fx), order=1, mode="nearest") * fx
    v2 = ndimage.zoom(v, (fy, fx), order=1, mode="nearest") * fy
    return u2, v2


def _neighbor_sum(a: np.ndarray) -> np.ndarray:
    s = np.zeros_like(a)
    s[1:, :] += a[:-1, :]
    s[:-1, :] += a[1:, :]
    s[:, 1:] += a[:, :-1]
    s[:, :-1] += a[:, 1:]
    return s


def _neighbor_count(shape: tuple[int, int]) -> np.ndarray:
    n = np.full(shape, 4.0)
    n[0, :] -= 1.0
    n[-1, :] -= 1.0
    n[:, 0] -= 1.0
    n[:, -1] -= 1.0
    return n


def _level_energy(u, v, fx, fy, c, alpha2) -> float:
    data = fx * u + fy * v + c
    e = float(np.sum(data * data))
    e += alpha2 * float(np.sum((u[1:, :] - u[:-1, :]) ** 2) + np.sum((v[1:, :] - v[:-1, :]) ** 2))
    e += alpha2 * float(np.sum((u[:, 1:] - u[:, :-1]) ** 2) + np.sum((v[:, 1:] - v[:, :-1]) ** 2))
    return e


def _solve_level(a, b, u, v, params: HSParams, track_energy: bool):
    """One linearization at this level, minimized by red-black sweeps.

    The data residual is linearized once around the incoming flow (b is
    warped by it), then the quadratic energy over the total flow is
    descended; each half-sweep is an exact block minimization.
    """
    h, w = a.shape
    grid = make_grid(h, w)
    bw = sample_bilinear(b, grid.x + u, grid.y + v, BorderPolicy.CLAMP)
    avg = 0.5 * (a + bw)
    fy_d, fx_d = np.gradient(avg)
    ft = bw - a
    c = ft - fx_d * u - fy_d * v  # residual at total flow (u, v) is fx*u + fy*v + c

    alpha2 = params.alpha ** 2
    n_p = _neighbor_count((h, w))
    denom = alpha2 * n_p + fx_d * fx_d + fy_d * fy_d
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    colors = ((ii + jj) % 2).astype(bool)
    energies = []
    if track_energy:
        energies.append(_level_energy(u, v, fx_d, fy_d, c, alpha2))
    for _ in range(params.iterations):
        for color in (False, True):
            sel = colors == color
            su = _neighbor_sum(u)
            sv = _neighbor_sum(v)
            ubar = su / n_p
            vbar = sv / n_p
            t = (fx_d * ubar + fy_d * vbar + c) / denom
            u = np.where(sel, ubar - fx_d * t, u)
            v = np.where(sel, vbar - fy_d * t, v)
        if track_energy:
            energies.append(_level_energy(u, v, fx_d, fy_d, c, alpha2))
    return u, v, np.array(energies)


def estimate_flow_with_energy(frame_a: Frame, frame_b: Frame, params: HSParams = HSParams()):
    """Forward flow a->b plus the finest level's per-sweep energy history."""
    if (frame_a.height, frame_a.width) != (frame_b.height, frame_b.width):
        raise ShapeError(
            f"frame dimensions differ: {frame_a.height}x{frame_a.width} vs "
            f"{frame_b.height}x{frame_b.width}"
        )
    pa = _pyramid(_to_gray(frame_a), params)
    pb = _pyramid(_to_gray(frame_b), params)
    u = np.zeros(pa[0].shape)
    v = np.zeros(pa[0].shape)
    energies = np.array([])
    for li, (a, b) in enumerate(zip(pa, pb)):
        if u.shape != a.shape:
            u, v = _upsample_flow(u, v, a.shape)
        finest = li == len(pa) - 1
        u, v, energies = _solve_level(a, b, u, v, params, track_energy=finest)
    return FlowField(u=u, v=v, direction=Direction.FORWARD), energies


def estimate_flow(frame_a: Frame, frame_b: Frame, params: HSParams = HSParams()) -> FlowField:
    """Dense forward flow from frame_a to frame_b (direction tag Forward)."""
    flow, _ = estimate_flow_with_energy(frame_a, frame_b, params)
    return flow


def reverse_pair(frame_a: Frame, frame_b: Frame, params: HSParams = HSParams()) -> FlowField:
    """Flow from frame_b back to frame_a; Forward-tagged with b as source."""
    return estimate_flow(frame_b, frame_a, params)


# --- Middlebury .flo serialization -------------------------------------------

_FLO_MAGIC = 202021.25


def write_flo(flow: FlowField) -> bytes:
    """Serialize a flow field in the Middlebury layout.

    4-byte little-endian float 202021.25 (bytes "PIEH"), int32 width, int32
    height, then width*height (u, v) float32 pairs row-major.
    """
    h, w = flow.shape
    if w >= 2 ** 31 or h >= 2 ** 31:
        raise FormatError(f"dimensions {w}x{h} exceed int32")
    header = struct.pack("<fii", _FLO_MAGIC, w, h)
    data = np.empty((h, w, 2), dtype="<f4")
    data[..., 0] = flow.u
    data[..., 1] = flow.v
    return header + data.tobytes()


def read_flo(data: bytes, direction: Direction) -> FlowField:
    """Parse Middlebury bytes; the direction tag is the caller's claim."""
    if len(data) < 12:
        raise ShapeError(f"payload of {len(data)} bytes is shorter than the 12-byte header")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != _FLO_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_FLO_MAGIC}")
    if w < 1 or h < 1:
        raise FormatError(f"invalid dimensions {w}x{h}")
    need = 12 + w * h * 8
    if len(data) != need:
        raise ShapeError(f"expected {need} bytes for {w}x{h}, got {len(data)}")
    uv = np.frombuffer(data[12:], dtype="<f4").astype(np.float64).reshape(h, w, 2)
    if not np.all(np.isfinite(uv)):
        raise DataError("flow payload contains non-finite values")
    return FlowField(u=uv[..., 0], v=uv[..., 1], direction=direction)
