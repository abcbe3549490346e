"""Command-line pipeline driver.

Subcommands cover each stage (synthesize, inter-frame flow, per-frame
correction, trajectory, adaptation, metrics) plus an end-to-end pipeline.
Every run is driven by one INI config file; outputs land under one run
directory with a manifest recording the config hash and versions. Exit
codes: 0 success, 2 config error, 3 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adapt import adapt_history_csv, adapt_sequence
from .config import (
    PipelineConfig,
    build_adapt_params,
    build_camera,
    build_hs_params,
    build_jitter,
    load_config,
)
from .errors import ConfigError, DataError, RectiflowError
from .field import Direction, FlowField, Mask, pull_points_through_flow, warp_backward
from .interflow import estimate_flow, read_flo, write_flo
from .metrics import (
    LineSample,
    line_acc,
    report,
    report_text,
    shape_acc,
    spectrum_csv,
    stability_score,
)
from .pnm import mask_to_pgm, pgm_to_mask, read_ppm, write_ppm
from .synth import (
    annotations_from_text,
    annotations_to_text,
    apply_jitter,
    default_scene,
    face_mask,
    jitter_signal,
    render_scene,
    stereographic_correction_flow,
    undistort_points,
)
from .trajectory import trajectory_csv, trajectory_of_sequence


def _parallel_map(fn, items, threads: int) -> list:
    # Collection is index-ordered, so results do not depend on thread count.
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _out_root(cfg: PipelineConfig) -> Path:
    if cfg.out is None:
        raise ConfigError("output directory required: set [pipeline] out or pass --out")
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    return root


def _require_dir(path: Path, hint: str) -> Path:
    if not path.is_dir():
        raise DataError(f"missing input directory: {path} ({hint})")
    return path


def _read_frames(dirpath: Path, hint: str):
    _require_dir(dirpath, hint)
    files = sorted(dirpath.glob("*.ppm"))
    if not files:
        raise DataError(f"missing input: no .ppm frames under {dirpath} ({hint})")
    return [read_ppm(f.read_bytes()) for f in files]


def _read_flo_dir(dirpath: Path, pattern: str, direction: Direction, hint: str):
    _require_dir(dirpath, hint)
    files = sorted(dirpath.glob(pattern))
    if not files:
        raise DataError(f"missing input: no {pattern} files under {dirpath} ({hint})")
    return [read_flo(f.read_bytes(), direction) for f in files]


def _frames_dir(cfg: PipelineConfig, root: Path) -> Path:
    if cfg.mode == "ingest":
        if cfg.frames_dir is None:
            raise ConfigError("[ingest] frames_dir is required in ingest mode")
        return Path(cfg.frames_dir)
    return root / "frames"


def _pseudo_flows(cfg: PipelineConfig, root: Path):
    if cfg.mode == "ingest" and cfg.pseudo_dir is not None:
        return _read_flo_dir(Path(cfg.pseudo_dir), "*.flo", Direction.BACKWARD,
                             "pseudo-label correction flows")
    return _read_flo_dir(root / "pseudo", "*.flo", Direction.BACKWARD,
                         "run the synth stage first")


def _forward_flows(cfg: PipelineConfig, root: Path):
    """True inter-frame flows when available, estimated ones otherwise."""
    if cfg.mode == "ingest" and cfg.flows_dir is not None:
        return _read_flo_dir(Path(cfg.flows_dir), "*_fwd.flo", Direction.FORWARD,
                             "inter-frame forward flows")
    gt = root / "flows_gt"
    if gt.is_dir() and any(gt.glob("*_fwd.flo")):
        return _read_flo_dir(gt, "*_fwd.flo", Direction.FORWARD, "ground-truth flows")
    return _read_flo_dir(root / "flows", "*_fwd.flo", Direction.FORWARD,
                         "run the flow stage first")


def _masks(cfg: PipelineConfig, root: Path, n: int, dims):
    if cfg.mode == "ingest":
        if cfg.masks_dir is None:
            ones = Mask(values=np.ones(dims, dtype=np.uint8))
            return [ones] * n
        dirpath = _require_dir(Path(cfg.masks_dir), "face masks")
    else:
        dirpath = _require_dir(root / "masks", "run the synth stage first")
    files = sorted(dirpath.glob("*.pgm"))
    if not files:
        raise DataError(f"missing input: no .pgm masks under {dirpath}")
    return [pgm_to_mask(f.read_bytes()) for f in files]


def _config_digest(cfg: PipelineConfig) -> str:
    # out/threads do not change computed results and stay out of the hash.
    semantic = {k: v for k, v in vars(cfg).items() if k not in ("out", "threads")}
    blob = repr(sorted(semantic.items())).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(cfg: PipelineConfig, root: Path):
    doc = {
        "config_sha256": _config_digest(cfg),
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    (root / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _rigid_points(points: np.ndarray, dx: float, dy: float, theta: float,
                  center: tuple[float, float]) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    rel = points - center
    rot = np.stack([c * rel[:, 0] - s * rel[:, 1], s * rel[:, 0] + c * rel[:, 1]], axis=1)
    return rot + center + (dx, dy)


def cmd_synth(cfg: PipelineConfig):
    """Render the scene, jitter it, and write every ground-truth artifact."""
    if cfg.mode != "synthetic":
        raise ConfigError("the synth stage requires [pipeline] mode = synthetic")
    root = _out_root(cfg)
    cam = build_camera(cfg)
    scene = default_scene(cam, n_lines=cfg.n_lines, n_faces=cfg.n_faces,
                          seed=cfg.scene_seed)
    ideal, _ = render_scene(scene, cam, distorted=False)
    observed, ann = render_scene(scene, cam, distorted=True)
    (root / "ideal.ppm").write_bytes(write_ppm(ideal))
    (root / "observed.ppm").write_bytes(write_ppm(observed))
    (root / "annotations.txt").write_text(annotations_to_text(ann))

    n = cfg.frames
    if n >= 2:
        jit = build_jitter(cfg)
        frames, fwd = apply_jitter([observed] * n, jit)
        dx, dy, th = jitter_signal(jit, n)
        gt_dir = root / "flows_gt"
        gt_dir.mkdir(exist_ok=True)
        for t, f in enumerate(fwd):
            (gt_dir / f"{t:06d}_fwd.flo").write_bytes(write_flo(f))
    else:
        frames = [observed]
        dx = dy = th = np.zeros(1)

    frames_dir = root / "frames"
    frames_dir.mkdir(exist_ok=True)
    blobs = _parallel_map(write_ppm, frames, cfg.threads)
    for t, blob in enumerate(blobs):
        (frames_dir / f"{t:06d}.ppm").write_bytes(blob)

    pseudo_dir = root / "pseudo"
    pseudo_dir.mkdir(exist_ok=True)
    pseudo_blob = write_flo(stereographic_correction_flow(cam))
    for t in range(n):
        (pseudo_dir / f"{t:06d}.flo").write_bytes(pseudo_blob)

    # Masks live in rectified space: undistort each face's jittered
    # observed-space landmarks (exact, since undistortion is total).
    masks_dir = root / "masks"
    masks_dir.mkdir(exist_ok=True)
    center = ((cam.width - 1) / 2.0, (cam.height - 1) / 2.0)
    dims = (cam.height, cam.width)
    for t in range(n):
        union = np.zeros(dims, dtype=np.uint8)
        for face in ann.faces:
            moved = _rigid_points(face.landmarks_image, dx[t], dy[t], th[t], center)
            rectified = undistort_points(moved, cam)
            union = np.maximum(union, face_mask(rectified, dims).values)
        (masks_dir / f"{t:06d}.pgm").write_bytes(mask_to_pgm(Mask(values=union)))

    _write_manifest(cfg, root)


def cmd_flow(cfg: PipelineConfig):
    """Estimate forward and backward inter-frame flows for every pair."""
    root = _out_root(cfg)
    frames = _read_frames(_frames_dir(cfg, root), "frame sequence")
    if len(frames) < 2:
        raise DataError(f"flow estimation needs >= 2 frames, got {len(frames)}")
    params = build_hs_params(cfg)

    def one(pair):
        a, b = pair
        return estimate_flow(a, b, params), estimate_flow(b, a, params)

    results = _parallel_map(one, zip(frames[:-1], frames[1:]), cfg.threads)
    flows_dir = root / "flows"
    flows_dir.mkdir(exist_ok=True)
    for t, (fwd, bwd) in enumerate(results):
        (flows_dir / f"{t:06d}_fwd.flo").write_bytes(write_flo(fwd))
        (flows_dir / f"{t:06d}_bwd.flo").write_bytes(write_flo(bwd))
    _write_manifest(cfg, root)


def cmd_correct(cfg: PipelineConfig):
    """Warp every frame by its pseudo-label correction flow."""
    root = _out_root(cfg)
    frames = _read_frames(_frames_dir(cfg, root), "frame sequence")
    pseudo = _pseudo_flows(cfg, root)
    if len(pseudo) != len(frames):
        raise DataError(
            f"{len(frames)} frames but {len(pseudo)} pseudo-label flows"
        )
    corrected = _parallel_map(
        lambda pair: write_ppm(warp_backward(pair[0], pair[1])),
        zip(frames, pseudo), cfg.threads,
    )
    out_dir = root / "corrected"
    out_dir.mkdir(exist_ok=True)
    for t, blob in enumerate(corrected):
        (out_dir / f"{t:06d}.ppm").write_bytes(blob)
    _write_manifest(cfg, root)


def cmd_trajectory(cfg: PipelineConfig):
    """Derive the correction trajectory; emit its CSV, residuals, spectrum."""
    root = _out_root(cfg)
    pseudo = _pseudo_flows(cfg, root)
    fwd = _forward_flows(cfg, root)
    series = trajectory_of_sequence(pseudo, fwd)
    (root / "trajectory.csv").write_text(trajectory_csv(series))
    res_dir = root / "residuals"
    res_dir.mkdir(exist_ok=True)
    for t in range(series.n_frames):
        f = FlowField(u=series.residuals[t, ..., 0], v=series.residuals[t, ..., 1],
                      direction=Direction.BACKWARD)
        (res_dir / f"{t:06d}.flo").write_bytes(write_flo(f))
    if series.n_frames >= 8:
        (root / "spectrum.csv").write_text(spectrum_csv(series))
    _write_manifest(cfg, root)


def cmd_adapt(cfg: PipelineConfig):
    """Smooth the correction flows against their pseudo-labels."""
    root = _out_root(cfg)
    pseudo = _pseudo_flows(cfg, root)
    fwd = _forward_flows(cfg, root)
    masks = _masks(cfg, root, len(pseudo), pseudo[0].shape)
    if len(masks) != len(pseudo):
        raise DataError(f"{len(pseudo)} flows but {len(masks)} masks")
    adapted, history = adapt_sequence(pseudo, masks, fwd, build_adapt_params(cfg))
    out_dir = root / "adapted"
    out_dir.mkdir(exist_ok=True)
    for t, f in enumerate(adapted):
        (out_dir / f"{t:06d}.flo").write_bytes(write_flo(f))
    (root / "loss_history.csv").write_text(adapt_history_csv(history))
    _write_manifest(cfg, root)


def _annotation_scores(cfg: PipelineConfig, root: Path, pseudo0: FlowField):
    path = Path(cfg.annotations) if cfg.mode == "ingest" and cfg.annotations \
        else root / "annotations.txt"
    if not path.is_file():
        return None, None, None, None
    ann = annotations_from_text(path.read_text())
    lines_obs, lines_corr = [], []
    for line in ann.lines:
        if line.out_of_frame:
            continue
        lines_obs.append(LineSample(points=line.points_image))
        pulled = pull_points_through_flow(pseudo0, line.points_image)
        lines_corr.append(LineSample(points=pulled))
    line_before = line_acc(lines_obs) if lines_obs else None
    line_after = line_acc(lines_corr) if lines_corr else None
    shapes_before, shapes_after = [], []
    for face in ann.faces:
        if face.out_of_frame:
            continue
        shapes_before.append(shape_acc(face.landmarks_ideal, face.landmarks_image))
        pulled = pull_points_through_flow(pseudo0, face.landmarks_image)
        shapes_after.append(shape_acc(face.landmarks_ideal, pulled))
    shape_before = float(np.mean(shapes_before)) if shapes_before else None
    shape_after = float(np.mean(shapes_after)) if shapes_after else None
    return line_before, line_after, shape_before, shape_after


def _metric_documents(cfg: PipelineConfig, root: Path) -> dict:
    pseudo = _pseudo_flows(cfg, root)
    fwd = _forward_flows(cfg, root)
    line_b, line_a, shape_b, shape_a = _annotation_scores(cfg, root, pseudo[0])
    stab_before = stab_after = None
    if len(pseudo) >= 8:
        stab_before = stability_score(trajectory_of_sequence(pseudo, fwd), cfg.low_band)
        adapted_dir = root / "adapted"
        if adapted_dir.is_dir() and any(adapted_dir.glob("*.flo")):
            adapted = _read_flo_dir(adapted_dir, "*.flo", Direction.BACKWARD, "adapted flows")
            stab_after = stability_score(trajectory_of_sequence(adapted, fwd), cfg.low_band)
        else:
            stab_after = stab_before
    provenance = {
        "mode": cfg.mode,
        "frames": str(len(pseudo)),
        "config_sha256": _config_digest(cfg),
    }
    before = report(line_score=line_b, shape_score=shape_b, stability=stab_before,
                    provenance=provenance)
    after = report(line_score=line_a, shape_score=shape_a, stability=stab_after,
                   provenance=provenance)
    return {
        "before": json.loads(report_text(before)),
        "after": json.loads(report_text(after)),
    }


def cmd_metrics(cfg: PipelineConfig):
    """Score the run: line/shape before vs after correction, stability
    before vs after adaptation."""
    root = _out_root(cfg)
    doc = _metric_documents(cfg, root)
    (root / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_manifest(cfg, root)


def _summary_text(doc: dict) -> str:
    def fmt(v):
        return "none" if v is None else repr(v)

    before, after = doc["before"], doc["after"]
    sb = before["stability"]
    sa = after["stability"]
    rows = [
        f"line_acc_before={fmt(before['line_acc'])}",
        f"line_acc_after={fmt(after['line_acc'])}",
        f"shape_acc_before={fmt(before['shape_acc'])}",
        f"shape_acc_after={fmt(after['shape_acc'])}",
        f"stability_before={fmt(None if sb is None else sb['avg'])}",
        f"stability_after={fmt(None if sa is None else sa['avg'])}",
    ]
    return "\n".join(rows) + "\n"


def cmd_pipeline(cfg: PipelineConfig):
    """Run every stage in order and write a before/after summary."""
    root = _out_root(cfg)
    if cfg.mode == "synthetic":
        cmd_synth(cfg)
    cmd_flow(cfg)
    cmd_correct(cfg)
    cmd_trajectory(cfg)
    if cfg.adaptation:
        cmd_adapt(cfg)
    doc = _metric_documents(cfg, root)
    (root / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    (root / "summary.txt").write_text(_summary_text(doc))
    _write_manifest(cfg, root)


_COMMANDS = {
    "synth": cmd_synth,
    "flow": cmd_flow,
    "correct": cmd_correct,
    "trajectory": cmd_trajectory,
    "adapt": cmd_adapt,
    "metrics": cmd_metrics,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rectiflow",
        description="Flow-based wide-angle video correction pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="path to the INI config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for per-frame stages")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out,
                          threads=args.threads)
        _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RectiflowError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
