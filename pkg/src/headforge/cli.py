"""Command-line driver for the optimization pipeline.

Verbs: fit-template, fit-geometry, fit-texture, export, eval-id,
serve-mock, render-dataset, info. Every artifact-producing run writes an
effective-config snapshot next to its outputs, and the last stdout line is
a single machine-parsable JSON status object.

Exit codes: 0 success, 2 configuration or input error, 3 guidance endpoint
failure, 4 numeric failure (non-finite parameters or stalled extraction).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import socket
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import Tensor, no_grad
from .dataset import DOMAINS, render_dataset
from .evaluate import (
    EvalError,
    RemoteEmbedding,
    StubEmbedding,
    cross_expression_consistency,
    similarity_distribution,
    write_contact_sheet,
)
from .fields import TemplateField
from .guidance import (
    AnalyticTargetProvider,
    GuidanceError,
    NoiseSchedule,
    RemoteProvider,
    RemoteUnavailable,
    WireError,
    ZeroProvider,
)
from .pipeline import (
    CheckpointError,
    ConfigError,
    ExtractionStall,
    NumericHalt,
    PipelineError,
    RunConfig,
    RunState,
    build_geometry_model,
    build_texture_model,
    export_assets,
    fit_template_stage,
    load_checkpoint,
    load_config,
    parameter_hash,
    rng_state_of,
    run_geometry_stage,
    run_texture_stage,
    save_checkpoint,
    write_snapshot,
)
from .pipeline.common import restore_into
from .render import eval_cameras, read_pfm, read_png, render_albedo, render_normals
from .tetmesh import MeshIOError, SurfaceMesh, icosphere

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENDPOINT = 3
EXIT_NUMERIC = 4

SNAPSHOT_NAME = "config_snapshot.cfg"


def build_hash() -> str:
    """Digest of the installed package sources."""
    root = Path(__file__).parent
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


def _status(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    config.apply_overrides(args.set or [])
    if args.seed is not None:
        config.set("stage.seed", args.seed)
    return config.validate()


def _prepare_out(args, config: RunConfig) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(config, out / SNAPSHOT_NAME)
    return out


def _make_target(spec: str, schedule: NoiseSchedule):
    """Build an analytic-provider target from a CLI spec.

    Forms: `icosphere[:subdivisions:radius]` renders a reference sphere from
    the in-flight camera; `constant:V` or `constant:R,G,B` is a flat image
    at the request size; anything else is a PNG or PFM path used as a fixed
    target image.
    """
    if spec.startswith("icosphere"):
        parts = spec.split(":")
        subdiv = int(parts[1]) if len(parts) > 1 else 3
        radius = float(parts[2]) if len(parts) > 2 else 0.40
        rv, rf = icosphere(subdivisions=subdiv, radius=radius)
        ref = SurfaceMesh(Tensor(rv.astype(np.float32)), rf)
        provider = AnalyticTargetProvider(None, schedule)

        def target(request):
            camera = provider.context.get("camera")
            if camera is None:
                raise GuidanceError("icosphere target needs a camera context")
            with no_grad():
                return render_normals(ref, camera).image.numpy()

        provider.target = target
        return provider
    if spec.startswith("constant:"):
        values = [float(x) for x in spec.split(":", 1)[1].split(",")]
        if len(values) == 1:
            values = values * 3
        if len(values) != 3:
            raise ConfigError(f"constant target needs 1 or 3 values, got {spec!r}")
        color = np.asarray(values, np.float32)

        def flat(request):
            return np.broadcast_to(color, request.z_t.shape)

        return AnalyticTargetProvider(flat, schedule)
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"target image not found: {path}")
    image = read_pfm(path) if path.suffix.lower() == ".pfm" else read_png(path)
    return AnalyticTargetProvider(np.asarray(image, np.float32), schedule)


def _build_provider(kind: str, endpoint: str, target_spec: str):
    if kind == "remote":
        if not endpoint:
            raise ConfigError("remote provider needs an endpoint "
                              "(guidance.endpoint or --guidance)")
        return RemoteProvider(endpoint)
    if kind == "zero":
        return ZeroProvider()
    return _make_target(target_spec, NoiseSchedule())


def _primary_provider(config: RunConfig, args, target_spec: str):
    endpoint_flag = getattr(args, "guidance", None)
    kind = "remote" if endpoint_flag else config["guidance.provider"]
    return _build_provider(kind, endpoint_flag or config["guidance.endpoint"],
                           target_spec)


def _load_template(path) -> TemplateField:
    state = load_checkpoint(path)
    if state.stage != "template":
        raise PipelineError(f"{path} holds a {state.stage!r} checkpoint, expected template")
    template = TemplateField(np.random.default_rng(0))
    restore_into(template.parameters(), None, state)
    return template


def _obtain_template(args, config: RunConfig, out: Path) -> TemplateField:
    """Load the template checkpoint, or fit one if none exists yet.

    The inline fit uses its own seeded generator, so it produces the same
    checkpoint a separate fit-template run would have.
    """
    path = Path(args.template) if args.template else out / "template.ckpt"
    if path.is_file():
        return _load_template(path)
    if args.template:
        raise ConfigError(f"template checkpoint not found: {path}")
    rng = np.random.default_rng(config["stage.seed"])
    template = fit_template_stage(config, rng)
    _save_template(template, config, rng, path)
    return template


def _save_template(template, config: RunConfig, rng, path) -> None:
    state = RunState(stage="template",
                     iteration=config["stage.template.iterations"],
                     config=config.as_dict(), rng_state=rng_state_of(rng),
                     arrays={n: t.data for n, t in template.parameters()})
    save_checkpoint(path, state)


def _restore_model(model, path, expected_stage: str) -> None:
    state = load_checkpoint(path)
    if state.stage != expected_stage:
        raise PipelineError(
            f"{path} holds a {state.stage!r} checkpoint, expected {expected_stage}")
    restore_into(model.parameters(), None, state)


def cmd_info(args) -> int:
    config = RunConfig()
    print(f"headforge {__version__}")
    print(f"build {build_hash()}")
    print("defaults:")
    for line in config.snapshot().strip().splitlines():
        print(f"  {line}")
    _status({"status": "ok", "verb": "info", "version": __version__,
             "build": build_hash()})
    return EXIT_OK


def cmd_fit_template(args) -> int:
    config = _load_run_config(args)
    out = _prepare_out(args, config)
    started = time.perf_counter()
    rng = np.random.default_rng(config["stage.seed"])
    template = fit_template_stage(config, rng)
    path = out / "template.ckpt"
    _save_template(template, config, rng, path)
    _status({"status": "ok", "verb": "fit-template", "out": str(out),
             "checkpoint": str(path),
             "seconds": round(time.perf_counter() - started, 3)})
    return EXIT_OK


def cmd_fit_geometry(args) -> int:
    config = _load_run_config(args)
    out = _prepare_out(args, config)
    started = time.perf_counter()
    rng = np.random.default_rng(config["stage.seed"])
    template = _obtain_template(args, config, out)
    provider = _primary_provider(config, args, args.target)
    model = build_geometry_model(template, config, rng)
    resume = load_checkpoint(args.resume) if args.resume else None
    report = run_geometry_stage(model, provider, config, out_dir=out,
                                resume=resume)
    _status({"status": "ok", "verb": "fit-geometry", "out": str(out),
             "checkpoint": report.checkpoint_path,
             "param_hash": report.param_hash,
             "iterations": report.iterations,
             "empty_extractions": report.empty_extractions,
             "seconds": round(time.perf_counter() - started, 3)})
    return EXIT_OK


def _rebuild_geometry(args, config: RunConfig, out: Path, rng):
    template = _obtain_template(args, config, out)
    model = build_geometry_model(template, config, rng)
    path = Path(args.geometry) if args.geometry else out / "geometry_final.ckpt"
    if not path.is_file():
        raise ConfigError(f"geometry checkpoint not found: {path}")
    _restore_model(model, path, "geometry")
    return model


def cmd_fit_texture(args) -> int:
    config = _load_run_config(args)
    out = _prepare_out(args, config)
    started = time.perf_counter()
    rng = np.random.default_rng(config["stage.seed"])
    geometry = _rebuild_geometry(args, config, out, rng)
    provider = _primary_provider(config, args, args.target)
    refine = None
    if config["guidance.refine_provider"]:
        refine = _build_provider(config["guidance.refine_provider"],
                                 config["guidance.refine_endpoint"],
                                 args.refine_target or args.target)
    model = build_texture_model(geometry, config, rng)
    resume = load_checkpoint(args.resume) if args.resume else None
    report = run_texture_stage(model, provider, config, out_dir=out,
                               resume=resume, refine_provider=refine)
    _status({"status": "ok", "verb": "fit-texture", "out": str(out),
             "checkpoint": report.checkpoint_path,
             "param_hash": report.param_hash,
             "iterations": report.iterations,
             "shaded_steps": report.counters.get("shaded_steps", 0),
             "seconds": round(time.perf_counter() - started, 3)})
    return EXIT_OK


def _rebuild_texture(args, config: RunConfig, geometry, out: Path, rng):
    model = build_texture_model(geometry, config, rng)
    path = Path(args.texture) if args.texture else out / "texture_final.ckpt"
    if not path.is_file():
        raise ConfigError(f"texture checkpoint not found: {path}")
    _restore_model(model, path, "texture")
    return model


def cmd_export(args) -> int:
    config = _load_run_config(args)
    out = _prepare_out(args, config)
    started = time.perf_counter()
    rng = np.random.default_rng(config["stage.seed"])
    geometry = _rebuild_geometry(args, config, out, rng)
    texture = _rebuild_texture(args, config, geometry, out, rng)
    expressions = list(range(config["stage.expressions"]))
    bundle = export_assets(geometry, texture, expressions, config,
                           out / "assets")
    _status({"status": "ok", "verb": "export", "out": str(out),
             "manifest": str(bundle.manifest_path),
             "meshes": len(bundle.mesh_paths),
             "reassigned_faces": bundle.reassigned_faces,
             "seconds": round(time.perf_counter() - started, 3)})
    return EXIT_OK


def cmd_eval_id(args) -> int:
    config = _load_run_config(args)
    out = _prepare_out(args, config)
    started = time.perf_counter()
    rng = np.random.default_rng(config["stage.seed"])
    geometry = _rebuild_geometry(args, config, out, rng)
    texture = None
    if args.texture or (Path(args.out) / "texture_final.ckpt").is_file():
        texture = _rebuild_texture(args, config, geometry, out, rng)
    expressions = list(range(config["stage.expressions"]))
    cameras = eval_cameras(config["camera.height"], config["camera.width"])

    meshes = {}
    with no_grad():
        for k in expressions:
            meshes[k] = geometry.extract(k)
    materials = {}
    if texture is not None:
        with no_grad():
            for k in expressions:
                materials[k] = texture.materials(k)[0]

    def render_fn(camera, expression):
        with no_grad():
            if texture is not None:
                result = render_albedo(meshes[expression],
                                       materials[expression], camera)
            else:
                result = render_normals(meshes[expression], camera)
        return result.image.numpy()

    provider = (RemoteEmbedding(args.embed_endpoint) if args.embed_endpoint
                else StubEmbedding())
    if len(expressions) >= 2:
        report = cross_expression_consistency(render_fn, provider,
                                              expressions, cameras=cameras)
    else:
        front = min(range(len(cameras)),
                    key=lambda i: abs(cameras[i].azimuth) + abs(cameras[i].elevation))
        refs = [provider.embed(render_fn(cameras[front], expressions[0]))]
        report = similarity_distribution(render_fn, refs, provider,
                                         cameras=cameras,
                                         aggregate=args.aggregate)
    report.write_csv(out / "report.csv")
    report.write_json(out / "summary.json")
    tiles = [render_fn(cam, k) for k in expressions for cam in cameras]
    write_contact_sheet(out / "contact_sheet.png", tiles,
                        columns=len(cameras))
    _status({"status": "ok", "verb": "eval-id", "out": str(out),
             "entries": len(report.entries), "mean": report.mean,
             "variance": report.variance,
             "seconds": round(time.perf_counter() - started, 3)})
    return EXIT_OK


def cmd_serve_mock(args) -> int:
    import uvicorn

    from .service import make_app

    config = _load_run_config(args)
    if args.provider == "zero":
        provider = ZeroProvider()
    else:
        if not args.target:
            raise ConfigError("analytic mock needs --target (image path or constant:V)")
        provider = _make_target(args.target, NoiseSchedule())
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        _status({"status": "error", "code": EXIT_CONFIG, "verb": "serve-mock",
                 "reason": f"cannot bind {args.host}:{args.port}: {exc}"})
        return EXIT_CONFIG
    finally:
        probe.close()
    app = make_app(provider, model_name=f"mock-{args.provider}")
    _status({"status": "ok", "verb": "serve-mock", "host": args.host,
             "port": args.port, "provider": args.provider})
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_render_dataset(args) -> int:
    config = _load_run_config(args)
    out = _prepare_out(args, config)
    started = time.perf_counter()
    domains = tuple(args.domains.split(",")) if args.domains else DOMAINS
    meta = render_dataset(out, identities=args.identities,
                          expressions=args.expressions, views=args.views,
                          size=args.size, seed=config["stage.seed"],
                          grid_resolution=args.grid, domains=domains)
    _status({"status": "ok", "verb": "render-dataset", "out": str(out),
             "records": meta["records"],
             "seconds": round(time.perf_counter() - started, 3)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="headforge",
        description="Expression-aware head asset optimization")
    sub = parser.add_subparsers(dest="verb", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (key = value lines)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="config override, repeatable")
    common.add_argument("--seed", type=int, help="override stage.seed")
    common.add_argument("--out", default="headforge_out",
                        help="output directory")

    sub.add_parser("info", help="print version, build hash, and defaults")

    sub.add_parser("fit-template", parents=[common],
                   help="fit the base shape field and save template.ckpt")

    geo = sub.add_parser("fit-geometry", parents=[common],
                         help="optimize the expression-coded geometry field")
    geo.add_argument("--template", help="template checkpoint (default: <out>/template.ckpt, fit if missing)")
    geo.add_argument("--resume", help="mid-run geometry checkpoint to continue")
    geo.add_argument("--target", default="icosphere",
                     help="analytic target: icosphere[:sub:r], constant:V, or image path")
    geo.add_argument("--guidance", help="remote guidance endpoint (implies remote provider)")

    tex = sub.add_parser("fit-texture", parents=[common],
                         help="optimize the texture field on frozen geometry")
    tex.add_argument("--template", help="template checkpoint")
    tex.add_argument("--geometry", help="geometry checkpoint (default: <out>/geometry_final.ckpt)")
    tex.add_argument("--resume", help="mid-run texture checkpoint to continue")
    tex.add_argument("--target", default="constant:0.5",
                     help="analytic target: constant:V, constant:R,G,B, or image path")
    tex.add_argument("--refine-target", help="target for the refinement phase provider")
    tex.add_argument("--guidance", help="remote guidance endpoint (implies remote provider)")

    exp = sub.add_parser("export", parents=[common],
                         help="bake maps and write meshes + manifest")
    exp.add_argument("--template", help="template checkpoint")
    exp.add_argument("--geometry", help="geometry checkpoint")
    exp.add_argument("--texture", help="texture checkpoint")

    ev = sub.add_parser("eval-id", parents=[common],
                        help="identity-similarity report over the view grid")
    ev.add_argument("--template", help="template checkpoint")
    ev.add_argument("--geometry", help="geometry checkpoint")
    ev.add_argument("--texture", help="texture checkpoint (albedo renders when given)")
    ev.add_argument("--embed-endpoint", help="remote embedding service URL")
    ev.add_argument("--aggregate", choices=("max", "mean"), default="max")

    srv = sub.add_parser("serve-mock", parents=[common],
                         help="serve a mock score provider over HTTP")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8484)
    srv.add_argument("--provider", choices=("zero", "analytic"),
                     default="zero")
    srv.add_argument("--target", help="analytic target image or constant:V")

    ds = sub.add_parser("render-dataset", parents=[common],
                        help="render synthetic head assemblies for guidance training")
    ds.add_argument("--identities", type=int, default=8)
    ds.add_argument("--expressions", type=int, default=4)
    ds.add_argument("--views", type=int, default=4)
    ds.add_argument("--size", type=int, default=64)
    ds.add_argument("--grid", type=int, default=24,
                    help="marching grid resolution for the assemblies")
    ds.add_argument("--domains", help="comma list from: normal,albedo")

    return parser


COMMANDS = {
    "info": cmd_info,
    "fit-template": cmd_fit_template,
    "fit-geometry": cmd_fit_geometry,
    "fit-texture": cmd_fit_texture,
    "export": cmd_export,
    "eval-id": cmd_eval_id,
    "serve-mock": cmd_serve_mock,
    "render-dataset": cmd_render_dataset,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    verb = args.verb
    try:
        return COMMANDS[verb](args)
    except (ConfigError, CheckpointError, MeshIOError, EvalError,
            GuidanceError, PipelineError, FileNotFoundError) as exc:
        code = EXIT_CONFIG
        if isinstance(exc, (NumericHalt, ExtractionStall)):
            code = EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        _status({"status": "error", "code": code, "verb": verb,
                 "reason": str(exc)})
        return code
    except (RemoteUnavailable, WireError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _status({"status": "error", "code": EXIT_ENDPOINT, "verb": verb,
                 "reason": str(exc)})
        return EXIT_ENDPOINT


if __name__ == "__main__":
    sys.exit(main())
