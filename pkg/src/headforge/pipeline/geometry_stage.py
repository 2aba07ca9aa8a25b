"""Stage 1: expression-coded tetrahedral geometry against a normal-map prior.

Each iteration samples an expression and a camera, extracts that expression's
surface with marching tetrahedra, renders its normal map, and injects the
score-distillation residual as the image's cotangent. A Laplacian smoothness
term regularizes the extracted surface. Only the shared field weights and the
sampled expression's code receive updates; all other codes stay bit-identical.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from ..fields import ExpressionCodebook, GeometryField, TemplateField
from ..guidance import NoiseSchedule, sds_grad
from ..render import render_normals, sample_camera
from ..tetmesh import (
    SurfaceMesh,
    TetGrid,
    ellipsoid_sdf,
    fit_template,
    laplacian_energy,
    marching_tets,
    sphere_sdf,
)
from .checkpoint import RunState, parameter_hash, rng_from_state, save_checkpoint
from .common import (
    StageReport,
    capture_state,
    conditioning_template,
    first_nonfinite_param,
    make_optimizer,
    restore_into,
)
from .config import RunConfig
from .errors import ExtractionStall, NumericHalt, PipelineError
from .runlog import CsvLogger

EMPTY_EXTRACTION_LIMIT = 50


@dataclass
class GeometryModel:
    """Trainable geometry state: deformable grid field plus expression codes."""

    grid: TetGrid
    template: TemplateField
    field: GeometryField
    codebook: ExpressionCodebook
    template_values: np.ndarray
    band: np.ndarray | None

    def extract(self, expression: int) -> SurfaceMesh:
        """Evaluate the field for one expression and march the deformed grid."""
        sdf, offsets = self.field.forward(self.grid.vertices,
                                          self.codebook[expression],
                                          template_values=self.template_values,
                                          band=self.band)
        verts = Tensor(self.grid.vertices) + offsets
        return marching_tets(verts, sdf, self.grid.tets)

    def parameters(self):
        return (self.field.parameters("geometry")
                + self.codebook.parameters("geometry.codes"))


def build_geometry_model(template: TemplateField, config: RunConfig,
                         rng: np.random.Generator) -> GeometryModel:
    grid = TetGrid(config["stage.grid_resolution"])
    template_values = template.values(grid.vertices)
    band_cells = config["stage.field.band_cells"]
    band = None
    if band_cells > 0:
        band = np.abs(template_values) < band_cells * grid.cell_size
    field = GeometryField(
        template, rng,
        code_dim=config["stage.code_dim"],
        levels=config["stage.field.levels"],
        table_size=config["stage.field.table_size"],
        d_model=config["stage.field.d_model"],
        blocks=config["stage.field.geometry_blocks"],
        chunk=config["stage.field.chunk"],
        deform_limit=0.45 * grid.cell_size,
        residual_limit=band_cells * grid.cell_size,
    )
    codebook = ExpressionCodebook(config["stage.expressions"],
                                  config["stage.code_dim"], rng)
    return GeometryModel(grid=grid, template=template, field=field,
                         codebook=codebook, template_values=template_values,
                         band=band)


def run_geometry_stage(model: GeometryModel, provider, config: RunConfig,
                       out_dir=None, resume: RunState | None = None,
                       schedule: NoiseSchedule | None = None) -> StageReport:
    total = config["stage.geometry.iterations"]
    params = model.parameters()
    optimizer = make_optimizer(params, config, config["stage.geometry.lr"])
    schedule = schedule or NoiseSchedule(omega_mode=config["guidance.omega"])
    cond = conditioning_template(config)
    sds_weight = config["stage.geometry.sds_weight"]
    lap_weight = config["stage.geometry.laplacian_weight"]
    clip = config["stage.grad_clip"]
    height, width = config["camera.height"], config["camera.width"]
    ckpt_every = config["stage.checkpoint_every"]

    if resume is not None:
        if resume.stage != "geometry":
            raise PipelineError(f"checkpoint is for stage {resume.stage!r}, "
                                "expected 'geometry'")
        restore_into(params, optimizer, resume)
        rng = rng_from_state(resume.rng_state)
        start = resume.iteration
        counters = dict(resume.counters)
    else:
        rng = np.random.default_rng(config["stage.seed"])
        start = 0
        counters = {"empty_extractions": 0}

    out_dir = Path(out_dir) if out_dir is not None else None
    logger = None
    if out_dir is not None:
        logger = CsvLogger(out_dir / "geometry_log.csv",
                           append=resume is not None)
    report = StageReport(stage="geometry", iterations=total)
    last_checkpoint = None
    empty_streak = 0
    wall_start = time.perf_counter()

    def save(iteration: int, name: str) -> str:
        state = capture_state("geometry", iteration, config, params,
                              optimizer, rng, counters)
        path = out_dir / name
        save_checkpoint(path, state)
        return str(path)

    try:
        for i in range(start, total):
            tic = time.perf_counter()
            k = int(rng.integers(0, model.codebook.count))
            cam = sample_camera(rng, height=height, width=width)
            provider.on_context({"stage": "geometry", "iteration": i,
                                 "camera": cam, "expression": k})
            mesh = model.extract(k)
            if mesh.num_faces == 0:
                empty_streak += 1
                counters["empty_extractions"] += 1
                if empty_streak > EMPTY_EXTRACTION_LIMIT:
                    raise ExtractionStall(
                        f"geometry iteration {i}: {empty_streak} consecutive "
                        f"empty extractions (expression {k})")
                if logger:
                    logger.log(iter=i, t=0, loss=float("nan"),
                               laplacian=float("nan"),
                               seconds=time.perf_counter() - tic)
                continue
            empty_streak = 0

            render = render_normals(mesh, cam)
            sample = sds_grad(provider, render.image.numpy(), rng, schedule,
                              "geometry", i, total, cond=replace(cond, y_exp=k))
            lap = laplacian_energy(mesh)

            optimizer.zero_grad()
            render.image.backward(
                seed=np.asarray(sds_weight * sample.grad, dtype=np.float32))
            if lap_weight > 0:
                lap.backward(seed=np.asarray(lap_weight, dtype=np.float32))
            if clip > 0:
                optimizer.clip_global_norm(clip)
            optimizer.step()

            bad = first_nonfinite_param(params)
            if bad is not None:
                raise NumericHalt(
                    f"geometry iteration {i}: parameter {bad} became "
                    f"non-finite; last good checkpoint: {last_checkpoint}")

            loss = float((sample.grad.astype(np.float64) ** 2).sum())
            lap_val = float(lap.numpy())
            report.losses.append(loss)
            report.laplacians.append(lap_val)
            report.timesteps.append(sample.t)
            if logger:
                logger.log(iter=i, t=sample.t, loss=loss, laplacian=lap_val,
                           seconds=time.perf_counter() - tic)
            if out_dir and ckpt_every > 0 and (i + 1) % ckpt_every == 0:
                last_checkpoint = save(i + 1, f"geometry_{i + 1:06d}.ckpt")
    finally:
        if logger:
            logger.close()

    if out_dir:
        last_checkpoint = save(total, "geometry_final.ckpt")
    report.checkpoint_path = last_checkpoint
    report.empty_extractions = counters["empty_extractions"]
    report.counters = dict(counters)
    report.param_hash = parameter_hash(params)
    report.seconds = time.perf_counter() - wall_start
    return report


def fit_template_stage(config: RunConfig, rng: np.random.Generator) -> TemplateField:
    """Regress a fresh template SDF onto the configured analytic shape."""
    shape = config["stage.template.shape"]
    radius = config["stage.template.radius"]
    if shape == "sphere":
        target = sphere_sdf(radius)
    else:
        target = ellipsoid_sdf((0.8 * radius, 1.1 * radius, 0.9 * radius))
    template = TemplateField(rng)
    fit_template(template, target, rng,
                 iterations=config["stage.template.iterations"],
                 lr=config["stage.template.lr"],
                 threshold=config["stage.template.threshold"])
    return template
