"""Stage 2: PBR texture field over frozen geometry, in three phases.

Geometry is extracted once per expression and held fixed. Every iteration
renders two images from the sampled expression, camera, and light: the raw
per-vertex albedo (the pseudo-albedo map) and the physically-based shaded
image. One of them receives the score-distillation gradient:

  phase 1 (the diffuse fraction of iterations): the albedo render, with the
    zero-initialized head keeping roughness/metallic fixed at (1.0, 0.0);
  phase 2: the albedo render by default, the shaded render with probability
    ``stage.texture.pbr_mix`` per step;
  phase 3 (the last refine iterations): the albedo render against the refine
    provider, on the late narrow timestep window.

The other render is produced detached, as a diagnostic.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..autodiff import Tensor, no_grad
from ..fields import ExpressionCodebook, TextureField
from ..guidance import NoiseSchedule, sds_grad
from ..render import (
    builtin_lights,
    render_albedo,
    sample_camera,
    sample_lighting,
    shade_pbr,
)
from ..tetmesh import SurfaceMesh
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
from .errors import NumericHalt, PipelineError
from .runlog import CsvLogger


@dataclass
class TextureModel:
    """Trainable texture state over frozen per-expression meshes."""

    meshes: list
    field: TextureField
    codebook: ExpressionCodebook

    def materials(self, expression: int):
        """(albedo (V,3), roughness (V,), metallic (V,)) at mesh vertices."""
        mesh = self.meshes[expression]
        return self.field.forward(mesh.vertices.numpy(),
                                  self.codebook[expression])

    def parameters(self):
        return (self.field.parameters("texture")
                + self.codebook.parameters("texture.codes"))


def freeze_mesh(mesh: SurfaceMesh) -> SurfaceMesh:
    return SurfaceMesh(Tensor(mesh.vertices.numpy().copy()),
                       mesh.faces.copy())


def build_texture_model(geometry, config: RunConfig,
                        rng: np.random.Generator) -> TextureModel:
    """Extract and freeze one mesh per expression; build the texture field."""
    meshes = []
    with no_grad():
        for k in range(geometry.codebook.count):
            mesh = geometry.extract(k)
            if mesh.num_faces == 0:
                raise PipelineError(
                    f"expression {k} extracts an empty mesh; texture stage "
                    "needs a surface to paint")
            meshes.append(freeze_mesh(mesh))
    field = TextureField(
        rng,
        code_dim=config["stage.code_dim"],
        levels=config["stage.field.levels"],
        table_size=config["stage.field.table_size"],
        d_model=config["stage.field.d_model"],
        blocks=config["stage.field.texture_blocks"],
        chunk=config["stage.field.chunk"],
    )
    codebook = ExpressionCodebook(len(meshes), config["stage.code_dim"], rng)
    return TextureModel(meshes=meshes, field=field, codebook=codebook)


def phase_bounds(total: int, diffuse_fraction: float,
                 refine_iterations: int) -> tuple[int, int]:
    """(first phase-2 iteration, first phase-3 iteration).

    Phase 3 never starts before phase 1 ends, so short runs degenerate to
    diffuse-then-refine with no PBR phase.
    """
    p1_end = math.ceil(diffuse_fraction * total)
    return p1_end, max(p1_end, total - refine_iterations)


PHASE_STAGE = {1: "texture_diffuse", 2: "texture_pbr", 3: "texture_refine"}


def run_texture_stage(model: TextureModel, provider, config: RunConfig,
                      out_dir=None, resume: RunState | None = None,
                      refine_provider=None, lights=None,
                      schedule: NoiseSchedule | None = None) -> StageReport:
    total = config["stage.texture.iterations"]
    params = model.parameters()
    optimizer = make_optimizer(params, config, config["stage.texture.lr"])
    schedule = schedule or NoiseSchedule(omega_mode=config["guidance.omega"])
    cond = conditioning_template(config)
    sds_weight = config["stage.texture.sds_weight"]
    clip = config["stage.grad_clip"]
    height, width = config["camera.height"], config["camera.width"]
    pbr_mix = config["stage.texture.pbr_mix"]
    p1_end, p3_start = phase_bounds(total,
                                    config["stage.texture.diffuse_fraction"],
                                    config["stage.texture.refine_iterations"])
    ckpt_every = config["stage.checkpoint_every"]
    lights = lights if lights is not None else builtin_lights()

    if resume is not None:
        if resume.stage != "texture":
            raise PipelineError(f"checkpoint is for stage {resume.stage!r}, "
                                "expected 'texture'")
        restore_into(params, optimizer, resume)
        rng = rng_from_state(resume.rng_state)
        start = resume.iteration
        counters = dict(resume.counters)
    else:
        rng = np.random.default_rng(config["stage.seed"])
        start = 0
        counters = {"shaded_steps": 0}

    out_dir = Path(out_dir) if out_dir is not None else None
    logger = None
    if out_dir is not None:
        logger = CsvLogger(out_dir / "texture_log.csv",
                           append=resume is not None)
    report = StageReport(stage="texture", iterations=total)
    last_checkpoint = None
    wall_start = time.perf_counter()

    def save(iteration: int, name: str) -> str:
        state = capture_state("texture", iteration, config, params,
                              optimizer, rng, counters)
        path = out_dir / name
        save_checkpoint(path, state)
        return str(path)

    try:
        for i in range(start, total):
            tic = time.perf_counter()
            phase = 1 if i < p1_end else (2 if i < p3_start else 3)
            k = int(rng.integers(0, model.codebook.count))
            cam = sample_camera(rng, height=height, width=width)
            light = sample_lighting(rng, lights)
            shaded_target = phase == 2 and float(rng.random()) < pbr_mix
            active = provider
            if phase == 3 and refine_provider is not None:
                active = refine_provider
            active.on_context({"stage": PHASE_STAGE[phase], "iteration": i,
                               "camera": cam, "light": light, "expression": k,
                               "phase": phase})

            mesh = model.meshes[k]
            albedo, rough, metal = model.materials(k)
            if shaded_target:
                target = shade_pbr(mesh, albedo, rough, metal, cam, light)
                counters["shaded_steps"] += 1
            else:
                target = render_albedo(mesh, albedo, cam)
            with no_grad():
                alb_d = Tensor(albedo.numpy().copy())
                if shaded_target:
                    render_albedo(mesh, alb_d, cam)
                else:
                    shade_pbr(mesh, alb_d, Tensor(rough.numpy().copy()),
                              Tensor(metal.numpy().copy()), cam, light)

            sample = sds_grad(active, target.image.numpy(), rng, schedule,
                              PHASE_STAGE[phase], i, total,
                              cond=replace(cond, y_exp=k))

            optimizer.zero_grad()
            target.image.backward(
                seed=np.asarray(sds_weight * sample.grad, dtype=np.float32))
            if clip > 0:
                optimizer.clip_global_norm(clip)
            optimizer.step()

            bad = first_nonfinite_param(params)
            if bad is not None:
                raise NumericHalt(
                    f"texture iteration {i}: parameter {bad} became "
                    f"non-finite; last good checkpoint: {last_checkpoint}")

            loss = float((sample.grad.astype(np.float64) ** 2).sum())
            report.losses.append(loss)
            report.laplacians.append(0.0)
            report.timesteps.append(sample.t)
            report.phases.append(phase)
            report.shaded_flags.append(shaded_target)
            if logger:
                logger.log(iter=i, t=sample.t, loss=loss, laplacian=0.0,
                           seconds=time.perf_counter() - tic)
            if out_dir and ckpt_every > 0 and (i + 1) % ckpt_every == 0:
                last_checkpoint = save(i + 1, f"texture_{i + 1:06d}.ckpt")
    finally:
        if logger:
            logger.close()

    if out_dir:
        last_checkpoint = save(total, "texture_final.ckpt")
    report.checkpoint_path = last_checkpoint
    report.counters = dict(counters)
    report.param_hash = parameter_hash(params)
    report.seconds = time.perf_counter() - wall_start
    return report
