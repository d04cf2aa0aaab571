"""Command line surface.

Exit codes: 0 success, 1 usage error, 2 contract violation, 3 external
service failure. Every artifact directory gets a run.json carrying the
config hash and seed; files are written deterministically so a fixed seed
reproduces output trees byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import captioner, dataforge, evalkit, imgio
from . import rasterizer as ras
from . import uvtools
from .charmodel import SPECIES, build_character, load_character, save_character, skin_pose
from .config import RunConfig
from .errors import ContractError, ExternalServiceError, ToontexError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.set("run", "seed", args.seed)
    return cfg


def _write_run_manifest(out_dir: Path, command: str, cfg: RunConfig, extra: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "config_hash": cfg.hash(),
           "seed": cfg.get("run", "seed"), **extra}
    (out_dir / "run.json").write_text(json.dumps(doc, sort_keys=True) + "\n",
                                      encoding="ascii")


def _mesh_from_args(args):
    if getattr(args, "mesh", None):
        if not getattr(args, "rig", None):
            raise ContractError("--mesh requires --rig")
        return load_character(args.mesh, args.rig), Path(args.mesh).stem
    species = getattr(args, "species", None) or "human"
    return build_character(species), species


def _load_texture(path, cfg: RunConfig) -> uvtools.TextureMap:
    pixels = imgio.read_ppm(path)
    template = dataforge.region_template(pixels.shape[0])
    return uvtools.TextureMap(pixels, template.chart_mask)


def _denoiser_config(cfg: RunConfig):
    from .diffusion import DenoiserConfig

    return DenoiserConfig(
        resolution=cfg.get("diffusion", "resolution"),
        channels=cfg.channels(),
        text_dim=cfg.get("diffusion", "text_dim"),
        time_dim=cfg.get("diffusion", "time_dim"),
        num_heads=cfg.get("diffusion", "num_heads"),
        timesteps=cfg.get("diffusion", "timesteps"),
    )


def _schedule(cfg: RunConfig):
    from .diffusion import NoiseSchedule

    return NoiseSchedule.linear(cfg.get("diffusion", "timesteps"),
                                cfg.get("diffusion", "beta_start"),
                                cfg.get("diffusion", "beta_end"))


def _views(cfg: RunConfig, size=None):
    return ras.view_set(size or cfg.get("rasterizer", "render_size"),
                        cfg.get("rasterizer", "view_radius"),
                        cfg.get("rasterizer", "view_elevation"),
                        cfg.get("rasterizer", "fov"))


def cmd_fixtures(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    species_list = SPECIES if args.species == "all" else [args.species]
    for name in species_list:
        mesh = build_character(name)
        save_character(mesh, out / f"{name}.obj", out / f"{name}.rig.json")
    template = dataforge.region_template(cfg.get("dataforge", "atlas_size"))
    dataforge.save_region_template(template, out / "regions.ppm")
    poses = np.zeros((8, 69))
    poses[:, 50] = np.linspace(0.0, 0.6, 8)   # swing one leg
    poses[:, 25] = np.linspace(0.0, -0.5, 8)  # and one arm
    (out / "sample_poses.json").write_text(
        json.dumps({"poses": poses.tolist()}, sort_keys=True), encoding="ascii")
    _write_run_manifest(out, "fixtures", cfg, {"species": list(species_list)})
    print(f"wrote {len(species_list)} fixtures to {out}")
    return 0


def cmd_dataset_build(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    template = dataforge.region_template(cfg.get("dataforge", "atlas_size"))
    n = args.n or cfg.get("dataforge", "dataset_size")
    records = dataforge.build_dataset(
        n, cfg.get("run", "seed"), template, out,
        exclude_test_combos=cfg.get("dataforge", "exclude_benchmark"))
    dataforge.save_region_template(template, out / "regions.ppm")
    _write_run_manifest(out, "dataset-build", cfg, {"records": len(records)})
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_pretrain(args) -> int:
    import torch

    from .advtrain import PretrainConfig, pretrain_base
    from .diffusion import Denoiser

    cfg = _load_config(args)
    torch.manual_seed(cfg.get("run", "seed"))
    denoiser = Denoiser(_denoiser_config(cfg))
    pcfg = PretrainConfig(steps=args.steps or cfg.get("advtrain", "pretrain_steps"),
                          lr=cfg.get("advtrain", "pretrain_lr"),
                          batch_size=cfg.get("advtrain", "batch_size"),
                          seed=cfg.get("run", "seed"))
    _, losses = pretrain_base(pcfg, args.out, denoiser=denoiser,
                              schedule=_schedule(cfg), dataset_dir=args.dataset,
                              metadata={"config_hash": cfg.hash()})
    print(f"pretrained base: final-100 loss {float(np.mean(losses[-100:])):.4f} "
          f"-> {args.out}")
    return 0


def cmd_train(args) -> int:
    from .advtrain import HttpProxyProvider, TrainConfig, train
    from .diffusion import load_checkpoint

    cfg = _load_config(args)
    if args.lambda_adv is not None:
        cfg.set("advtrain", "lambda_adv", args.lambda_adv)
    if args.steps is not None:
        cfg.set("advtrain", "total_steps", args.steps)
    tcfg = TrainConfig(
        adapter_lr=cfg.get("advtrain", "adapter_lr"),
        disc_lr=cfg.get("advtrain", "disc_lr"),
        lambda_adv=cfg.get("advtrain", "lambda_adv"),
        batch_size=cfg.get("advtrain", "batch_size"),
        total_steps=cfg.get("advtrain", "total_steps"),
        num_views=cfg.get("advtrain", "num_views"),
        seed=cfg.get("run", "seed"),
        rank=cfg.get("diffusion", "rank"),
        cond_dropout=cfg.get("advtrain", "cond_dropout"),
        grad_clip=cfg.get("advtrain", "grad_clip"),
        render_size=cfg.get("rasterizer", "render_size"),
        view_radius=cfg.get("rasterizer", "view_radius"),
        view_elevation=cfg.get("rasterizer", "view_elevation"),
        proxy_detail=cfg.get("advtrain", "proxy_detail"),
        checkpoint_every=cfg.get("advtrain", "checkpoint_every"),
    )
    base = None
    schedule = _schedule(cfg)
    if args.base:
        base, schedule, _, _, _ = load_checkpoint(args.base)
    provider = None
    if cfg.get("advtrain", "proxy_provider") == "http":
        provider = HttpProxyProvider(cfg.get("advtrain", "proxy_endpoint"),
                                     cfg.get("advtrain", "proxy_token_env"))
    out = Path(args.out)
    ckpt, metrics = train(tcfg, args.dataset, out, base_denoiser=base,
                          schedule=schedule, proxy_provider=provider,
                          metadata={"config_hash": cfg.hash()})
    _write_run_manifest(out, "train", cfg, {"checkpoint": ckpt.name,
                                            "steps": len(metrics)})
    final = float(np.mean([m["l_diff"] for m in metrics[-100:]]))
    print(f"trained {len(metrics)} steps, final-100 L_diff {final:.4f} -> {ckpt}")
    return 0


def _sample_texture(cfg: RunConfig, checkpoint, prompt, seed, steps=None,
                    omega=None, style_adapter=None, style_weight=0.5):
    from .diffusion import load_adapters, load_checkpoint, sample

    denoiser, schedule, adapters, _, _ = load_checkpoint(checkpoint)
    style = None
    if style_adapter:
        style, _ = load_adapters(style_adapter)
    template = dataforge.region_template(denoiser.config.resolution)
    return sample(denoiser, adapters, prompt, schedule,
                  omega=cfg.get("diffusion", "guidance") if omega is None else omega,
                  steps=steps or cfg.get("diffusion", "sample_steps"),
                  seed=seed, style_adapters=style, style_weight=style_weight,
                  chart_mask=template.chart_mask)


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    dataforge.parse_prompt(args.prompt)  # validate against the grammar
    tex = _sample_texture(cfg, args.checkpoint, args.prompt,
                          cfg.get("run", "seed"), steps=args.steps,
                          omega=args.omega, style_adapter=args.style_adapter,
                          style_weight=args.style_weight)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    imgio.write_ppm(out, tex.pixels)
    _write_run_manifest(out.parent, "sample", cfg,
                        {"prompt": args.prompt, "texture": out.name})
    print(f"sampled texture -> {out}")
    return 0


def cmd_render(args) -> int:
    cfg = _load_config(args)
    mesh, mesh_id = _mesh_from_args(args)
    texture = _load_texture(args.texture, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    views = _views(cfg, args.size)
    for i, camera in enumerate(views):
        view = ras.render_view(mesh, camera, texture)
        imgio.write_ppm(out / f"view_{i:02d}.ppm", view.rgb)
        if args.depth:
            imgio.write_pgm16(out / f"depth_{i:02d}.pgm",
                              ras.render_depth(view.coverage))
    _write_run_manifest(out, "render", cfg, {"mesh": mesh_id, "views": len(views)})
    print(f"rendered {len(views)} views -> {out}")
    return 0


def _load_poses(path) -> list[np.ndarray]:
    doc = json.loads(Path(path).read_text(encoding="ascii"))
    poses = doc["poses"] if isinstance(doc, dict) else doc
    return [np.asarray(p, dtype=np.float64) for p in poses]


def cmd_animate(args) -> int:
    cfg = _load_config(args)
    mesh, mesh_id = _mesh_from_args(args)
    texture = _load_texture(args.texture, cfg)
    poses = _load_poses(args.poses)
    if not poses:
        raise ContractError("pose sequence is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    camera = ras.camera_from_spherical(
        args.azimuth, cfg.get("rasterizer", "view_radius"),
        args.elevation, cfg.get("rasterizer", "fov"),
        args.size or cfg.get("rasterizer", "render_size"))
    for i, pose in enumerate(poses):
        posed = skin_pose(mesh, pose)
        view = ras.render_view(mesh, camera, texture, posed_vertices=posed)
        imgio.write_ppm(out / f"frame_{i:04d}.ppm", view.rgb)
    _write_run_manifest(out, "animate", cfg,
                        {"mesh": mesh_id, "frames": len(poses)})
    print(f"animated {len(poses)} frames -> {out}")
    return 0


def _seamfix_texture(cfg: RunConfig, mesh, texture: uvtools.TextureMap):
    seams = uvtools.extract_seams(mesh, texture.resolution)
    fixed = uvtools.blur_boundary(texture, seams,
                                  sigma=cfg.get("uvtools", "blur_sigma"),
                                  band=cfg.get("uvtools", "blur_band"))
    fixed = uvtools.fix_back_seam(
        mesh, fixed,
        azimuth_deg=cfg.get("uvtools", "seam_view_azimuth"),
        elevation_deg=cfg.get("uvtools", "seam_view_elevation"),
        radius=cfg.get("rasterizer", "view_radius"),
        fov_deg=cfg.get("rasterizer", "fov"),
        mask_width_frac=cfg.get("uvtools", "seam_mask_width"))
    return fixed, seams


def cmd_seamfix(args) -> int:
    cfg = _load_config(args)
    mesh, mesh_id = _mesh_from_args(args)
    texture = _load_texture(args.texture, cfg)
    fixed, seams = _seamfix_texture(cfg, mesh, texture)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    imgio.write_ppm(out, fixed.pixels)
    before = uvtools.seam_discontinuity(texture, seams)
    after = uvtools.seam_discontinuity(fixed, seams)
    _write_run_manifest(out.parent, "seamfix", cfg,
                        {"mesh": mesh_id, "seam_before": before,
                         "seam_after": after, "texture": out.name})
    print(f"seam discontinuity {before:.4f} -> {after:.4f}; wrote {out}")
    return 0


def _mock_clients():
    vqa = captioner.ScriptedAgentClient(
        lambda ref, q, hist: f"mock observation {len(hist) + 1}")
    llm = captioner.ScriptedAgentClient(
        lambda ref, q, hist: "What colors are the clothes?"
        if "follow-up" in q else "A textured cartoon character.")
    return vqa, llm


def cmd_caption(args) -> int:
    cfg = _load_config(args)
    mesh, mesh_id = _mesh_from_args(args)
    texture = _load_texture(args.texture, cfg)
    vqa_url = args.vqa_endpoint or cfg.get("captioner", "vqa_endpoint")
    llm_url = args.llm_endpoint or cfg.get("captioner", "llm_endpoint")
    if vqa_url and llm_url:
        token_env = cfg.get("captioner", "agent_token_env")
        timeout = cfg.get("captioner", "timeout")
        vqa = captioner.HttpAgentClient(vqa_url, token_env, timeout)
        llm = captioner.HttpAgentClient(llm_url, token_env, timeout)
    else:
        vqa, llm = _mock_clients()
    views = _views(cfg, cfg.get("captioner", "caption_view_size"))
    caption, sessions = captioner.caption_model(
        mesh, texture, vqa, llm, views=views,
        followups=cfg.get("captioner", "followups"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "caption": caption,
        "mesh": mesh_id,
        "sessions": [{"view_id": s.view_id,
                      "head_instruction": s.head_instruction,
                      "qa": [{"question": q, "answer": a} for q, a in s.qa]}
                     for s in sessions],
        "config_hash": cfg.hash(),
    }
    out.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="ascii")
    print(f"caption: {caption}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    extractor = evalkit.HandcraftedFeatureExtractor()
    embed_url = cfg.get("evalkit", "embed_endpoint")
    embedder = evalkit.HttpEmbeddingClient(
        embed_url, cfg.get("evalkit", "embed_token_env")) if embed_url else None
    out = Path(args.out)

    if args.real_dir and args.fake_dir:
        real = [imgio.read_ppm(p) for p in sorted(Path(args.real_dir).glob("*.ppm"))]
        fake = [imgio.read_ppm(p) for p in sorted(Path(args.fake_dir).glob("*.ppm"))]
        if len(real) < 2 or len(fake) < 2:
            raise ContractError("need at least 2 images per directory")
        report = evalkit.report_from_feature_sets(
            evalkit.feature_set(extractor, real),
            evalkit.feature_set(extractor, fake),
            cfg.get("evalkit", "kid_subset"), cfg.get("evalkit", "kid_subsets"),
            cfg.get("run", "seed"))
        if embedder is None:
            report.notes.append("clip_score unavailable: no embedding client")
    elif args.checkpoint and args.dataset:
        report = _eval_checkpoint(cfg, args, extractor, embedder)
    else:
        raise ContractError(
            "eval needs either --real-dir and --fake-dir, or --checkpoint and --dataset")

    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {**report.to_dict(), "config_hash": cfg.hash(),
           "seed": cfg.get("run", "seed")}
    out.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="ascii")
    print(json.dumps(doc, sort_keys=True))
    return 0


def _eval_checkpoint(cfg, args, extractor, embedder) -> evalkit.MetricReport:
    """Benchmark protocol: render views of generated vs dataset textures."""
    from .diffusion import load_checkpoint, sample

    denoiser, schedule, adapters, _, _ = load_checkpoint(args.checkpoint)
    dataset_dir = Path(args.dataset)
    records = dataforge.load_manifest(dataset_dir / "manifest.jsonl")
    template = dataforge.region_template(denoiser.config.resolution)
    n_eval = min(cfg.get("evalkit", "eval_samples"), len(records))
    seed = cfg.get("run", "seed")
    size = cfg.get("rasterizer", "render_size")
    views = _views(cfg, size)

    suite = dataforge.test_prompt_suite()
    prompts = [p for species in dataforge.SPECIES for p in suite[species]]
    prompts = prompts[:n_eval]

    meshes: dict[str, object] = {}
    coverage: dict[tuple[str, float], ras.CoverageMap] = {}

    def render_all(mesh_id: str, texture) -> list[np.ndarray]:
        if mesh_id not in meshes:
            meshes[mesh_id] = build_character(mesh_id)
        images = []
        for camera in views:
            key = (mesh_id, camera.azimuth_deg)
            if key not in coverage:
                coverage[key] = ras.rasterize(meshes[mesh_id], None, camera)
            images.append(ras.shade(coverage[key], texture))
        return images

    fake_images, seams_vals, hf_vals, clip_imgs = [], [], [], []
    for i, prompt in enumerate(prompts):
        spec = dataforge.parse_prompt(prompt)
        tex = sample(denoiser, adapters, prompt, schedule,
                     omega=cfg.get("diffusion", "guidance"),
                     steps=cfg.get("diffusion", "sample_steps"),
                     seed=seed + i, chart_mask=template.chart_mask)
        rendered = render_all(spec.species, tex)
        fake_images.extend(rendered)
        clip_imgs.append((rendered[0], prompt))
        mesh = meshes[spec.species]
        seams = uvtools.extract_seams(mesh, tex.resolution)
        seams_vals.append(uvtools.seam_discontinuity(tex, seams))
        hf_vals.append(evalkit.hf_energy(tex))

    real_images = []
    for record in records[:n_eval]:
        pixels = imgio.read_ppm(dataset_dir / record.texture_path)
        real_images.extend(render_all(record.mesh_id, pixels))

    report = evalkit.report_from_feature_sets(
        evalkit.feature_set(extractor, real_images),
        evalkit.feature_set(extractor, fake_images),
        cfg.get("evalkit", "kid_subset"), cfg.get("evalkit", "kid_subsets"), seed)
    report.seam = float(np.mean(seams_vals))
    report.hf_energy = float(np.mean(hf_vals))
    if embedder is not None:
        scores = [evalkit.clip_score([img], prompt, embedder)
                  for img, prompt in clip_imgs]
        report.clip_score = float(np.mean(scores))
    else:
        report.notes.append("clip_score unavailable: no embedding client")
    return report


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    spec = dataforge.parse_prompt(args.prompt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # mesh retrieval: exact species match against the fixture library
    mesh = None
    if args.mesh_lib:
        obj = Path(args.mesh_lib) / f"{spec.species}.obj"
        rig = Path(args.mesh_lib) / f"{spec.species}.rig.json"
        if not obj.exists() or not rig.exists():
            raise ContractError(
                f"mesh library has no fixture for species {spec.species!r}")
        mesh = load_character(obj, rig)
    else:
        mesh = build_character(spec.species)

    tex = _sample_texture(cfg, args.checkpoint, args.prompt, cfg.get("run", "seed"))
    imgio.write_ppm(out / "texture_raw.ppm", tex.pixels)
    fixed, _ = _seamfix_texture(cfg, mesh, tex)
    imgio.write_ppm(out / "texture.ppm", fixed.pixels)

    poses = _load_poses(args.poses) if args.poses else [np.zeros(3 * mesh.skeleton.num_joints)]
    frames_dir = out / "frames"
    frames_dir.mkdir(exist_ok=True)
    camera = ras.camera_from_spherical(
        args.azimuth, cfg.get("rasterizer", "view_radius"), args.elevation,
        cfg.get("rasterizer", "fov"), cfg.get("rasterizer", "render_size"))
    for i, pose in enumerate(poses):
        posed = skin_pose(mesh, pose)
        view = ras.render_view(mesh, camera, fixed, posed_vertices=posed)
        imgio.write_ppm(frames_dir / f"frame_{i:04d}.ppm", view.rgb)
    _write_run_manifest(out, "pipeline", cfg,
                        {"prompt": args.prompt, "species": spec.species,
                         "frames": len(poses)})
    print(f"pipeline wrote texture + {len(poses)} frames -> {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="toontex",
                     description="Text-guided UV texture generation for cartoon bipeds")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config file (INI)")
        p.add_argument("--seed", type=int, help="override [run] seed")

    p = sub.add_parser("fixtures", help="write procedural mesh fixtures")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--species", default="all", choices=("all",) + SPECIES)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("dataset-build", help="generate the procedural dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_dataset_build)

    p = sub.add_parser("pretrain", help="pretrain the base denoiser")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", help="pretrain on a texture dataset instead of "
                                     "the default generic procedural images")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="adversarially fine-tune adapters")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base", help="base checkpoint from pretrain")
    p.add_argument("--lambda-adv", type=float, dest="lambda_adv")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample a texture from a prompt")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--style-adapter", dest="style_adapter")
    p.add_argument("--style-weight", dest="style_weight", type=float, default=0.5)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("render", help="render the multi-view ring")
    common(p)
    p.add_argument("--texture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--species", choices=SPECIES)
    p.add_argument("--mesh")
    p.add_argument("--rig")
    p.add_argument("--size", type=int)
    p.add_argument("--depth", action="store_true", help="also write 16-bit depth")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("animate", help="render a pose sequence")
    common(p)
    p.add_argument("--texture", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--species", choices=SPECIES)
    p.add_argument("--mesh")
    p.add_argument("--rig")
    p.add_argument("--azimuth", type=float, default=0.0)
    p.add_argument("--elevation", type=float, default=10.0)
    p.add_argument("--size", type=int)
    p.set_defaults(func=cmd_animate)

    p = sub.add_parser("seamfix", help="blur seams and repair the back view")
    common(p)
    p.add_argument("--texture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--species", choices=SPECIES)
    p.add_argument("--mesh")
    p.add_argument("--rig")
    p.set_defaults(func=cmd_seamfix)

    p = sub.add_parser("caption", help="multi-agent captioning of a textured mesh")
    common(p)
    p.add_argument("--texture", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--species", choices=SPECIES)
    p.add_argument("--mesh")
    p.add_argument("--rig")
    p.add_argument("--vqa-endpoint", dest="vqa_endpoint")
    p.add_argument("--llm-endpoint", dest="llm_endpoint")
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("eval", help="metric report over images or a checkpoint")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--real-dir", dest="real_dir")
    p.add_argument("--fake-dir", dest="fake_dir")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline",
                       help="prompt -> mesh retrieval -> texture -> seam fix -> animation")
    common(p)
    p.add_argument("--prompt", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--poses")
    p.add_argument("--mesh-lib", dest="mesh_lib")
    p.add_argument("--azimuth", type=float, default=0.0)
    p.add_argument("--elevation", type=float, default=10.0)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args) or 0
    except ContractError as exc:
        print(f"toontex: contract violation: {exc}", file=sys.stderr)
        return 2
    except ExternalServiceError as exc:
        print(f"toontex: external service failure: {exc}", file=sys.stderr)
        return 3
    except ToontexError as exc:
        print(f"toontex: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
