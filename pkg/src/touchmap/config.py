"""Pipeline configuration: nested dataclasses loaded from strict JSON."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .preprocess import DetectionParams
from .render import RenderParams
from .tracking import TrackingParams
from .workspace import TransformGrid, WorkspaceArray


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WorkspaceConfig:
    rows: int = 2
    cols: int = 4
    row_pitch: float = 50.0
    col_pitch: float = 37.0
    radius: float = 18.5
    # translation grid spacing in mm; None uses the upsampled pixel pitch
    grid_step: float | None = None
    # explicit translations override the regular grid
    translations: tuple | None = None

    def array(self) -> WorkspaceArray:
        return WorkspaceArray.grid(self.rows, self.cols, self.row_pitch, self.col_pitch, self.radius)

    def transform_grid(self, pixel_pitch: float) -> TransformGrid:
        if self.translations is not None:
            return TransformGrid(translations=tuple(tuple(t) for t in self.translations))
        step = self.grid_step or pixel_pitch
        # keep workspace centres on pixel centres
        return TransformGrid(step=step, anchor=(pixel_pitch / 2.0, pixel_pitch / 2.0))


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    input_format: str | None = None
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1
    sample_rate: float = 20.0
    detection: DetectionParams = field(default_factory=DetectionParams)
    tracking: TrackingParams = field(default_factory=TrackingParams)
    workspace: WorkspaceConfig = field(default_factory=WorkspaceConfig)
    render: RenderParams = field(default_factory=RenderParams)

    def __post_init__(self):
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.render.check_rate(self.sample_rate)


_SECTIONS = {
    "detection": DetectionParams,
    "tracking": TrackingParams,
    "workspace": WorkspaceConfig,
    "render": RenderParams,
}


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS and cls is PipelineConfig:
            kwargs[key] = _build(_SECTIONS[key], value, f"{where}.{key}")
        else:
            kwargs[key] = _tupleize(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "config")


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    cfg = config_from_dict(data)
    if cfg.input is not None and not Path(cfg.input).is_absolute():
        cfg = dataclasses.replace(cfg, input=str(path.parent / cfg.input))
    return cfg


def config_to_dict(cfg: PipelineConfig) -> dict:
    """Defaults-resolved config as plain JSON types."""

    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v

    return {k: (plain(v) if not isinstance(v, dict) else {kk: plain(vv) for kk, vv in v.items()})
            for k, v in dataclasses.asdict(cfg).items()}


def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
