"""End-to-end mapping: frames -> detections -> trajectories -> placement -> signals."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import artifacts
from .config import ConfigError, PipelineConfig, dump_config
from .frames import FrameSequence, load_sequence
from .preprocess import DenseSequence, build_detections, preprocess
from .render import ActuatorSignal, render, save_signal_csv
from .tracking import solve_tracking
from .workspace import SelectionResult, minimal_conflicts, search_transforms

log = logging.getLogger(__name__)

ARTIFACT_NAMES = {
    "detections": "detections.csv",
    "trajectories": "trajectories.csv",
    "selection": "selection.json",
    "signal": "signal.csv",
}


@dataclass
class PipelineResult:
    sequence: FrameSequence
    dense: DenseSequence
    detections: list
    trajectories: list
    selection: SelectionResult
    conflicts: list
    signal: ActuatorSignal
    paths: dict = field(default_factory=dict)

    def summary(self) -> str:
        tx, ty = self.selection.transform.translation
        return "\n".join([
            f"frames        {len(self.sequence)} ({self.sequence.layout.n_cells} cells, "
            f"{self.dense.height}x{self.dense.width} px after upsampling)",
            f"detections    {len(self.detections)}",
            f"trajectories  {len(self.trajectories)}",
            f"selected      {list(self.selection.chosen)}",
            f"transform     translation=({tx:.3f}, {ty:.3f}) mm",
            f"total score   {self.selection.total_score:.6f}",
            f"signal        {self.signal.channels.shape[-1]} samples at {self.signal.sample_rate:g} Hz",
        ])


def read_input(cfg: PipelineConfig) -> FrameSequence:
    if cfg.input is None:
        raise ConfigError("no input sequence configured")
    seq = load_sequence(cfg.input, cfg.input_format)
    try:
        cfg.render.check_rate(seq.sample_rate)
    except ValueError as exc:
        raise ConfigError(f"input rate {seq.sample_rate} Hz: {exc}") from None
    return seq


def valid_pixel_centers(dense: DenseSequence) -> np.ndarray:
    xs, ys = dense.pixel_centers()
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx[dense.mask], gy[dense.mask]])


def map_trajectories(trajs, dense: DenseSequence, cfg: PipelineConfig):
    arr = cfg.workspace.array()
    grid = cfg.workspace.transform_grid(dense.pitch)
    sel = search_transforms(trajs, arr, grid, valid_pixel_centers(dense), jobs=cfg.jobs)
    conflicts = minimal_conflicts(trajs, arr, sel.transform)
    return sel, conflicts


def run_pipeline(cfg: PipelineConfig, out_dir=None, stage_dump: bool = False) -> PipelineResult:
    seq = read_input(cfg)
    dense, dets = build_detections(seq, cfg.detection)
    log.info("detections: %d", len(dets))
    trajs = solve_tracking(dets, cfg.tracking)
    log.info("trajectories: %d", len(trajs))
    sel, conflicts = map_trajectories(trajs, dense, cfg)
    arr = cfg.workspace.array()
    sig = render(sel, trajs, dense, arr, cfg.render)
    result = PipelineResult(seq, dense, dets, trajs, sel, conflicts, sig)
    if out_dir is not None:
        result.paths = write_artifacts(result, cfg, out_dir, stage_dump)
    return result


def write_artifacts(result: PipelineResult, cfg: PipelineConfig, out_dir, stage_dump=False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in ARTIFACT_NAMES.items()}
    paths["detections"].write_text(artifacts.dump_detections(result.detections))
    paths["trajectories"].write_text(artifacts.dump_trajectories(result.trajectories))
    paths["selection"].write_text(
        artifacts.dump_selection(result.selection, cfg.workspace.array(), result.conflicts))
    save_signal_csv(result.signal, paths["signal"])
    if stage_dump:
        paths["config"] = out / "config.resolved.json"
        paths["config"].write_text(dump_config(cfg))
        paths["dense"] = out / "dense.npy"
        np.save(paths["dense"], result.dense.frames)
    return paths


def dense_for(cfg: PipelineConfig) -> DenseSequence:
    """Preprocessed frames for stage commands that need pixel data."""
    return preprocess(read_input(cfg), cfg.detection)
