"""Evaluation metrics for corrected frames and warping trajectories.

Three families: line straightness (agreement of local segment directions
with each line's principal axis), shape fidelity (centered cosine
similarity of landmark sets), and trajectory stability (fraction of
spectral energy in the low-frequency band of the per-frame similarity
parameters, DC and bin 1 excluded). Scores are 0..100 for the first two
and 0..1 for stability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .trajectory import TrajectorySeries, fit_similarity

DEFAULT_LOW_BAND = (2, 6)

# Below this band energy a series is declared perfectly stable.
_STABLE_FLOOR = 1e-12


@dataclass(frozen=True)
class LineSample:
    """Ordered samples along one annotated line, (K, 2) as (x, y)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ShapeError(f"line sample must be (K, 2), got {pts.shape}")
        if pts.shape[0] < 3:
            raise DataError(f"line sample needs >= 3 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise DataError("line sample contains non-finite points")
        if np.any(np.all(np.diff(pts, axis=0) == 0.0, axis=1)):
            raise DataError("consecutive line sample points must be distinct")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class StabilityReport:
    """Low-band spectral energy fractions; higher means smoother."""

    avg: float
    translational: float
    rotational: float

    def __post_init__(self):
        for name in ("avg", "translational", "rotational"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise DataError(f"{name} must lie in [0, 1], got {val}")
        if abs(self.avg - 0.5 * (self.translational + self.rotational)) > 1e-12:
            raise DataError("avg must be the mean of translational and rotational")


def _principal_axis(centered: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return vt[0]


def line_acc(lines) -> float:
    """Mean alignment of local segment directions with each line's axis.

    Per line: 100 * mean over consecutive segments of |cos| of the angle
    between the segment and the principal axis of the centered points;
    the overall score averages over lines. Collinear samples give 100.
    """
    lines = list(lines)
    if not lines:
        raise DataError("line_acc needs at least one line sample")
    scores = []
    for line in lines:
        pts = line.points
        axis = _principal_axis(pts - pts.mean(axis=0))
        segs = np.diff(pts, axis=0)
        lengths = np.sqrt(np.sum(segs * segs, axis=1))
        cosines = np.abs(segs @ axis) / lengths
        scores.append(100.0 * float(np.mean(cosines)))
    return float(np.mean(scores))


def shape_acc(ref, corr) -> float:
    """Centered cosine similarity of two landmark sets, scaled to 0..100."""
    ref = np.asarray(ref, dtype=np.float64)
    corr = np.asarray(corr, dtype=np.float64)
    if ref.shape != corr.shape or ref.ndim != 2 or ref.shape[1] != 2:
        raise ShapeError(f"landmark sets must share a (K, 2) shape, got {ref.shape} vs {corr.shape}")
    if ref.shape[0] < 3:
        raise DataError(f"shape_acc needs >= 3 landmarks, got {ref.shape[0]}")
    rc = (ref - ref.mean(axis=0)).ravel()
    cc = (corr - corr.mean(axis=0)).ravel()
    nr = float(np.linalg.norm(rc))
    nc = float(np.linalg.norm(cc))
    if nr == 0.0 or nc == 0.0:
        raise DataError("degenerate landmark set: all points coincide")
    cosine = float(np.dot(rc, cc)) / (nr * nc)
    return float(np.clip(100.0 * cosine, 0.0, 100.0))


def stability_series(series: TrajectorySeries) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame similarity-fit series: translation magnitude and rotation."""
    trans = np.empty(series.positions.shape[0])
    rot = np.empty_like(trans)
    for t in range(series.positions.shape[0]):
        tx, ty, theta, _ = fit_similarity(series.positions[t])
        trans[t] = np.hypot(tx, ty)
        rot[t] = theta
    return trans, rot


def _band_score(values: np.ndarray, low_band: tuple[int, int]) -> float:
    n = values.shape[0]
    energy = np.abs(np.fft.rfft(values)) ** 2
    half = n // 2
    total = float(np.sum(energy[2:half + 1]))
    if total < _STABLE_FLOOR:
        return 1.0
    lo, hi = low_band
    low = float(np.sum(energy[lo:min(hi, half) + 1]))
    return min(low / total, 1.0)


def stability_score(series: TrajectorySeries,
                    low_band: tuple[int, int] = DEFAULT_LOW_BAND) -> StabilityReport:
    """Low-frequency energy fraction of the warping trajectory.

    Fits a similarity transform to every frame's cumulative position
    field, then scores the translation-magnitude and rotation series by
    the energy in bins low_band[0]..low_band[1] relative to bins
    2..floor(N/2). A series with no energy above bin 1 scores 1.
    """
    lo, hi = low_band
    if lo < 2 or hi < lo:
        raise ConfigError(f"low band must satisfy 2 <= lo <= hi, got {low_band}")
    n = series.positions.shape[0]
    if n < 8:
        raise ShapeError(f"stability needs >= 8 frames, got {n}")
    trans, rot = stability_series(series)
    t_score = _band_score(trans, low_band)
    r_score = _band_score(rot, low_band)
    return StabilityReport(avg=0.5 * (t_score + r_score),
                           translational=t_score, rotational=r_score)


def spectrum_csv(series: TrajectorySeries) -> str:
    """Per-bin spectral energy of both stability series, for plotting."""
    trans, rot = stability_series(series)
    et = np.abs(np.fft.rfft(trans)) ** 2
    er = np.abs(np.fft.rfft(rot)) ** 2
    lines = ["bin,translational,rotational"]
    for k in range(et.shape[0]):
        lines.append(f"{k},{float(et[k])!r},{float(er[k])!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MetricReport:
    """Aggregated evaluation record; absent metrics stay None."""

    line_score: float | None
    shape_score: float | None
    stability: StabilityReport | None
    provenance: tuple[tuple[str, str], ...]


def report(line_score: float | None = None, shape_score: float | None = None,
           stability: StabilityReport | None = None,
           provenance: dict[str, str] | None = None) -> MetricReport:
    items = tuple(sorted((provenance or {}).items()))
    return MetricReport(line_score=line_score, shape_score=shape_score,
                        stability=stability, provenance=items)


def report_text(rep: MetricReport) -> str:
    """JSON-shaped serialization of a metric report."""
    stability = None
    if rep.stability is not None:
        stability = {
            "avg": rep.stability.avg,
            "translational": rep.stability.translational,
            "rotational": rep.stability.rotational,
        }
    doc = {
        "line_acc": rep.line_score,
        "shape_acc": rep.shape_score,
        "stability": stability,
        "provenance": dict(rep.provenance),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
