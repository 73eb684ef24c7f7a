"""Map pressure-sensor touch sequences onto a vibrotactile actuator array."""

from .frames import (DegenerateSequenceError, Frame, FrameSequence, SensorLayout,
                     SequenceError, load_sequence, preset_layout, save_sequence)
from .preprocess import DetectionParams, build_detections, preprocess
from .tracking import TrackingParams, Trajectory, solve_tracking
from .workspace import WorkspaceArray, minimal_conflicts, search_transforms, select
from .render import RenderParams, render
from .config import PipelineConfig, load_config
from .pipeline import run_pipeline

__version__ = "0.1.0"
