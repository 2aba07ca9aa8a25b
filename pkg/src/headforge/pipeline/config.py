"""Flat key=value run configuration with typed schema and snapshots."""
from __future__ import annotations

import hashlib
from pathlib import Path

from ..fields import ALLOWED_SIZES


class ConfigError(ValueError):
    pass


# key -> (type tag, default). Every run key lives here; unknown keys are
# rejected before any work happens.
KEY_SPECS = {
    "stage.seed": ("int", 0),
    "stage.expressions": ("int", 1),
    "stage.grid_resolution": ("int", 256),
    "stage.code_dim": ("int", 32),
    "stage.grad_clip": ("float", 1.0),
    "stage.checkpoint_every": ("int", 0),
    "stage.adam.beta1": ("float", 0.9),
    "stage.adam.beta2": ("float", 0.99),
    "stage.adam.eps": ("float", 1e-8),
    "stage.template.shape": ("str", "sphere"),
    "stage.template.radius": ("float", 0.5),
    "stage.template.iterations": ("int", 1500),
    "stage.template.lr": ("float", 3e-3),
    "stage.template.threshold": ("float", 2e-3),
    "stage.geometry.iterations": ("int", 6000),
    "stage.geometry.lr": ("float", 1e-4),
    "stage.geometry.sds_weight": ("float", 10.0),
    "stage.geometry.laplacian_weight": ("float", 5000.0),
    "stage.texture.iterations": ("int", 2000),
    "stage.texture.lr": ("float", 0.01),
    "stage.texture.sds_weight": ("float", 10.0),
    "stage.texture.diffuse_fraction": ("float", 0.8),
    "stage.texture.refine_iterations": ("int", 20),
    "stage.texture.pbr_mix": ("float", 0.5),
    "stage.field.levels": ("int", 8),
    "stage.field.table_size": ("int", 16384),
    "stage.field.d_model": ("int", 32),
    "stage.field.geometry_blocks": ("int", 4),
    "stage.field.texture_blocks": ("int", 3),
    "stage.field.band_cells": ("float", 3.0),
    "stage.field.chunk": ("int", 1024),
    "camera.height": ("int", 128),
    "camera.width": ("int", 128),
    "light.bank": ("str", "builtin"),
    "guidance.provider": ("str", "analytic"),
    "guidance.endpoint": ("str", ""),
    "guidance.refine_provider": ("str", ""),
    "guidance.refine_endpoint": ("str", ""),
    "guidance.cfg_scale": ("float", 10.0),
    "guidance.omega": ("str", "one_minus_alpha_bar"),
    "guidance.y_text": ("str", ""),
    "guidance.lambda_id": ("float", 0.0),
    "guidance.lambda_exp": ("float", 0.0),
    "export.resolution": ("int", 1024),
    "export.identity": ("str", "head"),
}

_PROVIDER_KINDS = ("analytic", "zero", "remote")


def _coerce(key: str, value):
    kind = KEY_SPECS[key][0]
    try:
        if kind == "int":
            if isinstance(value, str):
                return int(value.strip())
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value.strip()) if isinstance(value, str) else float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r} (expects {kind})") from exc


class RunConfig:
    """Typed flat configuration. Precedence: defaults < file < overrides."""

    def __init__(self, values: dict | None = None):
        self._values = {key: default for key, (_, default) in KEY_SPECS.items()}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value):
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key: {key}")
        self._values[key] = _coerce(key, value)

    def __getitem__(self, key: str):
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key: {key}")
        return self._values[key]

    def as_dict(self) -> dict:
        return dict(self._values)

    def apply_overrides(self, overrides) -> "RunConfig":
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value, got {item!r}")
            key, _, value = item.partition("=")
            self.set(key.strip(), value.strip())
        return self

    def snapshot(self) -> str:
        """Canonical text form: sorted `key = value` lines."""
        lines = [f"{k} = {self._values[k]}" for k in sorted(self._values)]
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.snapshot().encode()).hexdigest()[:16]

    def validate(self) -> "RunConfig":
        v = self._values
        positive = ["stage.grid_resolution", "stage.code_dim", "camera.height",
                    "camera.width", "export.resolution", "stage.field.levels",
                    "stage.field.table_size", "stage.field.d_model",
                    "stage.field.geometry_blocks", "stage.field.texture_blocks",
                    "stage.field.chunk", "stage.template.iterations"]
        for key in positive:
            if v[key] <= 0:
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        for key in ("stage.geometry.iterations", "stage.texture.iterations"):
            if v[key] < 0:
                raise ConfigError(f"{key} must be >= 0, got {v[key]}")
        weights = ["stage.geometry.sds_weight", "stage.geometry.laplacian_weight",
                   "stage.texture.sds_weight", "stage.grad_clip",
                   "guidance.lambda_id", "guidance.lambda_exp",
                   "stage.field.band_cells"]
        for key in weights:
            if v[key] < 0:
                raise ConfigError(f"{key} must be >= 0, got {v[key]}")
        for key in ("stage.geometry.lr", "stage.texture.lr", "stage.template.lr"):
            if v[key] <= 0:
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        if not 0.0 <= v["stage.texture.diffuse_fraction"] <= 1.0:
            raise ConfigError("stage.texture.diffuse_fraction must be in [0, 1]")
        if not 0.0 <= v["stage.texture.pbr_mix"] <= 1.0:
            raise ConfigError("stage.texture.pbr_mix must be in [0, 1]")
        if v["guidance.provider"] not in _PROVIDER_KINDS:
            raise ConfigError(f"guidance.provider must be one of {_PROVIDER_KINDS}")
        if v["guidance.refine_provider"] not in _PROVIDER_KINDS + ("",):
            raise ConfigError(f"guidance.refine_provider must be one of {_PROVIDER_KINDS} or empty")
        if v["guidance.omega"] not in ("one_minus_alpha_bar", "constant"):
            raise ConfigError("guidance.omega must be one_minus_alpha_bar or constant")
        if v["stage.template.shape"] not in ("sphere", "ellipsoid"):
            raise ConfigError("stage.template.shape must be sphere or ellipsoid")
        if v["stage.expressions"] not in ALLOWED_SIZES:
            raise ConfigError(
                f"stage.expressions must be one of {ALLOWED_SIZES}, "
                f"got {v['stage.expressions']}")
        return self


def parse_config_text(text: str) -> dict:
    """key = value lines; blank lines and # comments ignored."""
    values = {}
    for lineno, key, value in _config_entries(text):
        values[key] = value
    return values


def _config_entries(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        yield lineno, key.strip(), value.strip()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    config = RunConfig()
    for lineno, key, value in _config_entries(path.read_text()):
        try:
            config.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path.name} line {lineno}: {exc}") from None
    return config


def write_snapshot(config: RunConfig, path) -> None:
    Path(path).write_text(config.snapshot())
