"""Adversarially enhanced fine-tuning.

Each step couples the plain noise-prediction objective with a GAN branch:
the current noisy-sample reconstruction is decoded to a texture, rendered
at a random view (the fake), while a proxy image provider supplies a
detail-rich plausible image at the same view (the real). Adversarial
gradients reach the adapters through the rendered pixels via the
rasterizer's exact texel adjoint.

Only adapter and discriminator parameters ever update; the base denoiser
is frozen and byte-identical across a run. All randomness derives from
the config seed through two streams: the diffusion stream (batch order,
timesteps, noise, conditioning dropout) and the adversarial stream (view
choice, proxy seeds), so lambda_adv = 0 reproduces the plain fine-tuning
baseline bit for bit.

pretrain_base builds the frozen backbone the fine-tuning customizes: a
full-parameter, unconditionally trained denoiser standing in for an
off-the-shelf pretrained text-to-image model.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import dataforge, imgio
from . import rasterizer as ras
from .charmodel import CharacterMesh, build_character
from .diffusion import (
    AdapterSet,
    Denoiser,
    IdentityCodec,
    NoiseSchedule,
    diffusion_loss,
    reconstruct_x0_batch,
    save_checkpoint,
)
from .diffusion.unet import build_denoiser
from .diffusion.textenc import MAX_TOKENS
from .errors import ContractError, ExternalServiceError

PROB_EPS = 1e-6


@dataclass
class TrainConfig:
    adapter_lr: float = 1e-4
    disc_lr: float = 2e-4
    lambda_adv: float = 0.05
    batch_size: int = 4
    total_steps: int = 2000
    num_views: int = 8
    seed: int = 0
    rank: int = 8
    cond_dropout: float = 0.1
    grad_clip: float = 1.0
    render_size: int = 64
    view_radius: float = ras.DEFAULT_VIEW_RADIUS
    view_elevation: float = ras.DEFAULT_VIEW_ELEVATION
    proxy_detail: float = 0.06
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.adapter_lr <= 0 or self.disc_lr <= 0:
            raise ContractError("learning rates must be positive")
        if self.lambda_adv < 0:
            raise ContractError("lambda_adv must be nonnegative")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ContractError("batch size and total steps must be positive")


@dataclass
class PretrainConfig:
    steps: int = 1500
    lr: float = 2e-4
    batch_size: int = 4
    seed: int = 0
    grad_clip: float = 1.0
    num_images: int = 400


class Discriminator(nn.Module):
    """4-layer strided conv patch classifier; per-patch logits reduce to a
    scalar probability via sigmoid of the mean logit."""

    def __init__(self, width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, width, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(width, width * 2, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(width * 2, width * 4, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(width * 4, 1, 4, stride=1, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def probability(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B,) probability the image is real."""
        logits = self.net(x)
        return torch.sigmoid(logits.mean(dim=(1, 2, 3)))


def gan_losses(disc: Discriminator, real: torch.Tensor,
               fake: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Non-saturating GAN losses.

    loss_D = -[log D(real) + log(1 - D(fake))], with the fake detached so
    discriminator gradients never reach the generator side; loss_G =
    -log D(fake) through the live fake. Probabilities are clamped to
    [1e-6, 1 - 1e-6] before the logs.
    """
    if real.shape != fake.shape:
        raise ContractError(f"real {tuple(real.shape)} vs fake {tuple(fake.shape)}")
    if not (torch.isfinite(real).all() and torch.isfinite(fake).all()):
        raise ContractError("gan_losses requires finite inputs")
    p_real = torch.clamp(disc.probability(real), PROB_EPS, 1 - PROB_EPS)
    p_fake_d = torch.clamp(disc.probability(fake.detach()), PROB_EPS, 1 - PROB_EPS)
    p_fake_g = torch.clamp(disc.probability(fake), PROB_EPS, 1 - PROB_EPS)
    loss_d = -(torch.log(p_real) + torch.log(1 - p_fake_d)).mean()
    loss_g = -torch.log(p_fake_g).mean()
    return loss_d, loss_g


class _ShadeBridge(torch.autograd.Function):
    """Differentiable shading: forward runs the rasterizer's shade, the
    backward pass is its exact texel adjoint (texture_gradient)."""

    @staticmethod
    def forward(ctx, texture: torch.Tensor, coverage, background):
        # texture: (3, H, W) in [0, 1]
        tex_np = texture.detach().cpu().numpy().transpose(1, 2, 0).astype(np.float64)
        rgb = ras.shade(coverage, tex_np, background=background)
        ctx.coverage = coverage
        ctx.tex_shape = tex_np.shape
        ctx.dtype = texture.dtype
        return torch.from_numpy(rgb.transpose(2, 0, 1)).to(texture.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        up = grad_out.detach().cpu().numpy().transpose(1, 2, 0).astype(np.float64)
        h, w = ctx.tex_shape[:2]
        grad_tex = ras.texture_gradient(ctx.coverage, up, h, w)
        grad = torch.from_numpy(grad_tex.transpose(2, 0, 1)).to(ctx.dtype)
        return grad, None, None


def render_fake(texture: torch.Tensor, coverage,
                background=(1.0, 1.0, 1.0)) -> torch.Tensor:
    """(3, H, W) texture -> (3, R, R) rendered view, differentiable in the
    texture via the rasterizer adjoint."""
    return _ShadeBridge.apply(texture, coverage, background)


class ProceduralProxyProvider:
    """Depth+prompt conditioned stand-in for an external image generator.

    Renders the dataset texture that belongs to the prompt at the sampled
    view, then layers deterministic high-frequency detail: a woven
    micro-pattern keyed to the prompt's cloth type plus edge-aware noise,
    so proxy reals carry more fine detail than over-smooth renders.
    """

    def __init__(self, records: list[dataforge.DatasetRecord],
                 template: dataforge.UVRegionTemplate,
                 meshes: dict[str, CharacterMesh],
                 coverage_for, detail: float = 0.06):
        self.by_prompt = {r.prompt: r for r in records}
        self.template = template
        self.meshes = meshes
        self.coverage_for = coverage_for
        self.detail = detail
        self._texture_cache: dict[str, np.ndarray] = {}

    def generate(self, depth: np.ndarray, prompt: str, seed: int,
                 camera: ras.Camera | None = None) -> np.ndarray:
        if camera is None:
            raise ExternalServiceError(
                "procedural proxy provider needs the sampled camera")
        record = self.by_prompt.get(prompt)
        if record is None:
            raise ExternalServiceError(f"no dataset record for prompt {prompt!r}")
        if prompt not in self._texture_cache:
            tex = dataforge.generate_texture(record.spec, self.template)
            self._texture_cache[prompt] = tex.pixels
        coverage = self.coverage_for(record.mesh_id, camera)
        rgb = ras.shade(coverage, self._texture_cache[prompt])

        mask = coverage.covered()
        rng = np.random.default_rng([seed & 0x7FFFFFFF, 77])
        h, w = rgb.shape[:2]
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        fx, fy = dataforge.CLOTH_WEAVE[record.spec.cloth_type]
        phase = rng.uniform(0, 2 * np.pi)
        weave = np.sin(2 * np.pi * fx * xx / w + phase) * np.sin(2 * np.pi * fy * yy / h)
        gx, gy = np.gradient(np.asarray(depth, dtype=np.float64))
        edge = np.sqrt(gx * gx + gy * gy)
        edge = edge / (edge.max() + 1e-9)
        noise = rng.standard_normal((h, w))
        detail = self.detail * weave + self.detail * (0.4 + 0.6 * edge) * noise
        out = rgb + np.where(mask, detail, 0.0)[:, :, None]
        return np.clip(out, 0.0, 1.0)


class HttpProxyProvider:
    """Posts depth + prompt to an external depth-conditioned image service."""

    def __init__(self, endpoint: str, token_env: str = "TOONTEX_PROXY_TOKEN",
                 timeout: float = 30.0):
        self.endpoint = endpoint
        self.token_env = token_env
        self.timeout = timeout

    def generate(self, depth: np.ndarray, prompt: str, seed: int,
                 camera: ras.Camera | None = None) -> np.ndarray:
        import os

        import requests

        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"depth": np.asarray(depth).tolist(), "prompt": prompt,
                      "seed": seed},
                headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            img = np.asarray(resp.json()["image"], dtype=np.float64)
        except Exception as exc:
            raise ExternalServiceError(f"proxy image service failed: {exc}") from exc
        if img.shape != (*np.asarray(depth).shape, 3):
            raise ExternalServiceError(
                f"proxy image shape {img.shape} does not match depth")
        return np.clip(img, 0.0, 1.0)


class TrainState:
    """Single-owner mutable training state."""

    def __init__(self, config: TrainConfig, denoiser: Denoiser,
                 schedule: NoiseSchedule, proxy_provider=None,
                 template: dataforge.UVRegionTemplate | None = None,
                 records: list[dataforge.DatasetRecord] | None = None,
                 meshes: dict[str, CharacterMesh] | None = None):
        self.config = config
        self.denoiser = denoiser
        self.denoiser.requires_grad_(False)
        self.schedule = schedule
        self.codec = IdentityCodec()
        self.adapters = AdapterSet.for_denoiser(denoiser, config.rank,
                                                seed=config.seed + 1)
        self.discriminator = Discriminator()
        torch.manual_seed(config.seed + 2)
        for m in self.discriminator.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.normal_(m.weight, 0.0, 0.02)
                nn.init.zeros_(m.bias)
        self.opt_adapter = torch.optim.AdamW(self.adapters.parameters(),
                                             lr=config.adapter_lr,
                                             betas=(0.9, 0.999), weight_decay=1e-2)
        self.opt_disc = torch.optim.AdamW(self.discriminator.parameters(),
                                          lr=config.disc_lr,
                                          betas=(0.9, 0.999), weight_decay=1e-2)
        self.diff_gen = torch.Generator().manual_seed(config.seed)
        self.adv_gen = torch.Generator().manual_seed(config.seed + 9001)
        self.views = ras.view_set(config.render_size, config.view_radius,
                                  config.view_elevation)[:config.num_views]
        self.meshes = meshes if meshes is not None else {}
        self.template = template
        self._coverage: dict[tuple[str, float, int], ras.CoverageMap] = {}
        self._depth: dict[tuple[str, float, int], np.ndarray] = {}
        self.proxy = proxy_provider
        if self.proxy is None and records is not None and template is not None:
            self.proxy = ProceduralProxyProvider(
                records, template, self.meshes, self.coverage_for,
                detail=config.proxy_detail)
        self.step = 0

    def mesh_for(self, mesh_id: str) -> CharacterMesh:
        if mesh_id not in self.meshes:
            self.meshes[mesh_id] = build_character(mesh_id)
        return self.meshes[mesh_id]

    def coverage_for(self, mesh_id: str, camera: ras.Camera) -> ras.CoverageMap:
        key = (mesh_id, camera.azimuth_deg, camera.width)
        if key not in self._coverage:
            self._coverage[key] = ras.rasterize(self.mesh_for(mesh_id), None, camera)
        return self._coverage[key]

    def depth_for(self, mesh_id: str, camera: ras.Camera) -> np.ndarray:
        key = (mesh_id, camera.azimuth_deg, camera.width)
        if key not in self._depth:
            self._depth[key] = ras.render_depth(self.coverage_for(mesh_id, camera))
        return self._depth[key]


def train_step(state: TrainState, x0: torch.Tensor, tokens: torch.Tensor,
               prompts: list[str], mesh_ids: list[str]) -> dict:
    """One optimization step over a batch.

    Adapters update with grad(L_diff + lambda * loss_G); the discriminator
    updates with grad(loss_D); the base stays untouched. A proxy provider
    failure aborts the step with state unchanged.
    """
    cfg = state.config
    t_start = time.perf_counter()
    result = diffusion_loss(state.denoiser, state.adapters, x0, tokens,
                            state.schedule, state.diff_gen)
    l_diff = result.loss

    loss_g = loss_d = None
    if cfg.lambda_adv > 0:
        view_idx = int(torch.randint(len(state.views), (1,),
                                     generator=state.adv_gen).item())
        proxy_seeds = torch.randint(0, 2 ** 31 - 1, (x0.shape[0],),
                                    generator=state.adv_gen)
        camera = state.views[view_idx]
        # proxy reals first: a provider failure must leave state unchanged
        reals = []
        for i, (prompt, mesh_id) in enumerate(zip(prompts, mesh_ids)):
            depth = state.depth_for(mesh_id, camera)
            real_np = state.proxy.generate(depth, prompt, int(proxy_seeds[i]),
                                           camera=camera)
            reals.append(torch.from_numpy(real_np.transpose(2, 0, 1)).to(x0.dtype))
        real = torch.stack(reals)

        x0_hat = reconstruct_x0_batch(result.x_t, result.eps_hat, result.t,
                                      state.schedule)
        textures = state.codec.decode(x0_hat)
        fake = torch.stack([
            render_fake(textures[i], state.coverage_for(mesh_ids[i], camera))
            for i in range(x0.shape[0])
        ])
        loss_d, loss_g = gan_losses(state.discriminator, real, fake)
        adapter_loss = l_diff + cfg.lambda_adv * loss_g
    else:
        adapter_loss = l_diff

    state.opt_adapter.zero_grad()
    state.opt_disc.zero_grad()
    adapter_loss.backward()
    torch.nn.utils.clip_grad_norm_(state.adapters.parameters(), cfg.grad_clip)
    state.opt_adapter.step()

    if loss_d is not None:
        state.opt_disc.zero_grad()  # drop spillover from the generator loss
        loss_d.backward()
        state.opt_disc.step()

    state.step += 1
    return {
        "step": state.step,
        "l_diff": float(l_diff.detach()),
        "loss_g": None if loss_g is None else float(loss_g.detach()),
        "loss_d": None if loss_d is None else float(loss_d.detach()),
        "lambda_adv": cfg.lambda_adv,
        "wall_s": time.perf_counter() - t_start,
    }


def _load_training_tensors(records, dataset_dir, denoiser: Denoiser):
    codec = IdentityCodec()
    xs, tokens = [], []
    for r in records:
        pixels = imgio.read_ppm(Path(dataset_dir) / r.texture_path)
        xs.append(codec.encode(pixels))
        tokens.append(denoiser.vocab.encode(r.prompt, denoiser.config.max_tokens))
    return torch.stack(xs), torch.tensor(tokens, dtype=torch.long)


def train(config: TrainConfig, dataset_dir, out_dir,
          base_denoiser: Denoiser | None = None,
          schedule: NoiseSchedule | None = None,
          proxy_provider=None, metadata: dict | None = None,
          template: dataforge.UVRegionTemplate | None = None):
    """Fine-tuning loop: seeded shuffling, periodic checkpoints, JSONL
    metrics log. Returns (checkpoint_path, metrics list)."""
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = dataforge.load_manifest(dataset_dir / "manifest.jsonl")
    if not records:
        raise ContractError("dataset manifest is empty")
    schedule = schedule or NoiseSchedule.linear()
    denoiser = base_denoiser or build_denoiser(seed=config.seed)
    if template is None:
        template = dataforge.region_template(denoiser.config.resolution)

    state = TrainState(config, denoiser, schedule, proxy_provider=proxy_provider,
                       template=template, records=records)
    x_all, tok_all = _load_training_tensors(records, dataset_dir, denoiser)
    null_row = torch.tensor(denoiser.vocab.null_sequence(denoiser.config.max_tokens),
                            dtype=torch.long)

    metrics = []
    log_path = out_dir / "metrics.jsonl"
    ckpt_path = out_dir / "model.ckpt"
    n = len(records)
    order = torch.randperm(n, generator=state.diff_gen)
    pos = 0
    with open(log_path, "w", encoding="ascii") as log:
        for _ in range(config.total_steps):
            if pos + config.batch_size > n:
                order = torch.randperm(n, generator=state.diff_gen)
                pos = 0
            idx = order[pos:pos + config.batch_size]
            pos += config.batch_size
            tokens = tok_all[idx].clone()
            drop = torch.rand(len(idx), generator=state.diff_gen) < config.cond_dropout
            tokens[drop] = null_row
            row = train_step(state, x_all[idx], tokens,
                             [records[int(i)].prompt for i in idx],
                             [records[int(i)].mesh_id for i in idx])
            metrics.append(row)
            log.write(json.dumps(row, sort_keys=True) + "\n")
            if state.step % config.checkpoint_every == 0 or state.step == config.total_steps:
                save_checkpoint(ckpt_path, denoiser, schedule, state.adapters,
                                state.discriminator,
                                metadata={**(metadata or {}),
                                          "train_config": asdict(config),
                                          "step": state.step})
    return ckpt_path, metrics


def pretrain_base(config: PretrainConfig, out_path,
                  denoiser: Denoiser | None = None,
                  schedule: NoiseSchedule | None = None,
                  dataset_dir=None, metadata: dict | None = None):
    """Full-parameter unconditional pretraining of the base denoiser.

    This is the stand-in for the pretrained text-to-image backbone that
    fine-tuning keeps frozen. It trains every base parameter with the
    plain noise-prediction objective and the null conditioning row over
    generic procedural images (broad 2D content deliberately unlike the
    UV-atlas domain); pass dataset_dir to pretrain on a texture dataset
    instead.
    """
    schedule = schedule or NoiseSchedule.linear()
    denoiser = denoiser or build_denoiser(seed=config.seed)
    denoiser.requires_grad_(True)
    if dataset_dir is not None:
        records = dataforge.load_manifest(Path(dataset_dir) / "manifest.jsonl")
        x_all, _ = _load_training_tensors(records, dataset_dir, denoiser)
    else:
        images = dataforge.generic_pretrain_images(
            config.num_images, config.seed, denoiser.config.resolution)
        x_all = torch.from_numpy(images * 2.0 - 1.0).permute(0, 3, 1, 2).float()
    null = torch.tensor([denoiser.vocab.null_sequence(denoiser.config.max_tokens)]
                        * config.batch_size, dtype=torch.long)
    opt = torch.optim.AdamW(denoiser.parameters(), lr=config.lr,
                            betas=(0.9, 0.999), weight_decay=1e-2)
    gen = torch.Generator().manual_seed(config.seed + 31337)
    n = len(x_all)
    order = torch.randperm(n, generator=gen)
    pos = 0
    losses = []
    for _ in range(config.steps):
        if pos + config.batch_size > n:
            order = torch.randperm(n, generator=gen)
            pos = 0
        idx = order[pos:pos + config.batch_size]
        pos += config.batch_size
        opt.zero_grad()
        loss = diffusion_loss(denoiser, None, x_all[idx], null[:len(idx)],
                              schedule, gen).loss
        loss.backward()
        torch.nn.utils.clip_grad_norm_(denoiser.parameters(), config.grad_clip)
        opt.step()
        losses.append(float(loss.detach()))
    denoiser.requires_grad_(False)
    if out_path is not None:
        save_checkpoint(out_path, denoiser, schedule,
                        metadata={**(metadata or {}),
                                  "pretrain_config": asdict(config),
                                  "final_loss_100": float(np.mean(losses[-100:]))})
    return denoiser, losses
