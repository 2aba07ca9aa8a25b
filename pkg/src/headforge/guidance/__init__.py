"""Noise schedules, score providers, wire protocol, and SDS gradients."""
from .providers import (
    ID_EMBED_DIM,
    AnalyticTargetProvider,
    GuidanceError,
    GuidanceRequest,
    RemoteProvider,
    ScoreProvider,
    ZeroProvider,
)
from .schedule import (
    BETA_END,
    BETA_START,
    GEOMETRY_EARLY,
    GEOMETRY_LATE,
    OMEGA_MODES,
    STAGE_RANGES,
    T_MAX,
    NoiseSchedule,
    sample_timestep,
    stage_range,
)
from .sds import SDSSample, cfg_mix, sds_grad
from .wire import (
    EMBED_PATH,
    HEALTH_PATH,
    PREDICT_PATH,
    RemoteUnavailable,
    WireError,
    decode_array,
    encode_array,
    parse_response,
    probe_health,
    remote_predict,
    request_to_json,
)

__all__ = [
    "ID_EMBED_DIM",
    "AnalyticTargetProvider",
    "GuidanceError",
    "GuidanceRequest",
    "RemoteProvider",
    "ScoreProvider",
    "ZeroProvider",
    "BETA_END",
    "BETA_START",
    "GEOMETRY_EARLY",
    "GEOMETRY_LATE",
    "OMEGA_MODES",
    "STAGE_RANGES",
    "T_MAX",
    "NoiseSchedule",
    "sample_timestep",
    "stage_range",
    "SDSSample",
    "cfg_mix",
    "sds_grad",
    "EMBED_PATH",
    "HEALTH_PATH",
    "PREDICT_PATH",
    "RemoteUnavailable",
    "WireError",
    "decode_array",
    "encode_array",
    "parse_response",
    "probe_health",
    "remote_predict",
    "request_to_json",
]
