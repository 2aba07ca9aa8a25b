"""Two-stage optimization orchestration, checkpointing, and asset export."""
from .checkpoint import (
    CHECKPOINT_VERSION,
    CheckpointError,
    RunState,
    load_checkpoint,
    parameter_hash,
    rng_from_state,
    rng_state_of,
    save_checkpoint,
)
from .common import StageReport, conditioning_template
from .config import (
    KEY_SPECS,
    ConfigError,
    RunConfig,
    load_config,
    parse_config_text,
    write_snapshot,
)
from .errors import ExtractionStall, NumericHalt, PipelineError
from .export import (
    AssetBundle,
    Atlas,
    bake_maps,
    bilinear_sample,
    build_atlas,
    export_assets,
)
from .geometry_stage import (
    GeometryModel,
    build_geometry_model,
    fit_template_stage,
    run_geometry_stage,
)
from .runlog import LOG_FIELDS, CsvLogger, read_log
from .texture_stage import (
    TextureModel,
    build_texture_model,
    phase_bounds,
    run_texture_stage,
)

__all__ = [
    "RunConfig", "ConfigError", "KEY_SPECS", "load_config", "parse_config_text",
    "write_snapshot",
    "RunState", "CheckpointError", "CHECKPOINT_VERSION", "save_checkpoint",
    "load_checkpoint", "parameter_hash", "rng_state_of", "rng_from_state",
    "StageReport", "conditioning_template", "CsvLogger", "read_log", "LOG_FIELDS",
    "PipelineError", "NumericHalt", "ExtractionStall",
    "GeometryModel", "build_geometry_model", "run_geometry_stage",
    "fit_template_stage",
    "TextureModel", "build_texture_model", "run_texture_stage", "phase_bounds",
    "AssetBundle", "Atlas", "build_atlas", "bake_maps", "export_assets",
    "bilinear_sample",
]
