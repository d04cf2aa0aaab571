import json
from pathlib import Path

import numpy as np
import pytest
import torch

from toontex import cli, imgio
from toontex.config import RunConfig
from toontex.diffusion import AdapterSet, NoiseSchedule, save_checkpoint
from toontex.diffusion.unet import build_denoiser
from toontex.errors import ContractError


class TestRunConfig:
    def test_defaults_complete(self):
        cfg = RunConfig()
        assert cfg.get("advtrain", "lambda_adv") == 0.05
        assert cfg.get("diffusion", "guidance") == 7.5
        assert cfg.get("diffusion", "rank") == 8
        assert cfg.channels() == (32, 64, 128)

    def test_save_load_roundtrip(self, tmp_path):
        cfg = RunConfig()
        cfg.set("run", "seed", 42)
        cfg.set("advtrain", "lambda_adv", 0.1)
        path = tmp_path / "run.ini"
        cfg.save(path)
        back = RunConfig.load(path)
        assert back.get("run", "seed") == 42
        assert back.get("advtrain", "lambda_adv") == 0.1
        assert back.hash() == cfg.hash()

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[advtrain]\nwarp_speed = 9\n")
        with pytest.raises(ContractError, match="warp_speed"):
            RunConfig.load(path)
        path.write_text("[warpdrive]\nx = 1\n")
        with pytest.raises(ContractError, match="warpdrive"):
            RunConfig.load(path)
        with pytest.raises(ContractError):
            RunConfig().set("run", "velocity", 3)

    def test_type_coercion_and_errors(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[run]\nseed = 7\n[dataforge]\nexclude_benchmark = false\n")
        cfg = RunConfig.load(path)
        assert cfg.get("run", "seed") == 7
        assert cfg.get("dataforge", "exclude_benchmark") is False
        path.write_text("[run]\nseed = banana\n")
        with pytest.raises(ContractError):
            RunConfig.load(path)

    def test_hash_changes_with_values(self):
        a, b = RunConfig(), RunConfig()
        b.set("run", "seed", 1)
        assert a.hash() != b.hash()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared CLI test artifacts: config, dataset, tiny checkpoint, poses."""
    root = tmp_path_factory.mktemp("cli")
    cfg = RunConfig()
    cfg.set("diffusion", "sample_steps", 2)
    cfg.set("rasterizer", "render_size", 32)
    cfg.set("dataforge", "dataset_size", 6)
    cfg.set("evalkit", "kid_subset", 8)
    cfg.set("evalkit", "kid_subsets", 4)
    cfg_path = root / "run.ini"
    cfg.save(cfg_path)

    assert cli.main(["dataset-build", "--config", str(cfg_path),
                     "--out", str(root / "ds"), "--n", "6"]) == 0

    den = build_denoiser(seed=0)
    gen = torch.Generator().manual_seed(1)
    with torch.no_grad():
        for p in den.parameters():
            p.add_(0.02 * torch.randn(p.shape, generator=gen))
    adapters = AdapterSet.for_denoiser(den, rank=8, seed=1)
    ckpt = root / "model.ckpt"
    save_checkpoint(ckpt, den, NoiseSchedule.linear(), adapters)

    poses = root / "poses.json"
    poses.write_text(json.dumps({"poses": [[0.0] * 69, [0.1] * 69]}))
    return root, cfg_path, ckpt, poses


class TestCliCommands:
    def test_dataset_build_outputs(self, workdir):
        root, *_ = workdir
        assert (root / "ds" / "manifest.jsonl").exists()
        assert (root / "ds" / "run.json").exists()
        run = json.loads((root / "ds" / "run.json").read_text())
        assert {"command", "config_hash", "seed"} <= set(run)

    def test_sample_writes_texture(self, workdir):
        root, cfg_path, ckpt, _ = workdir
        out = root / "sampled.ppm"
        rc = cli.main(["sample", "--config", str(cfg_path), "--checkpoint", str(ckpt),
                       "--prompt", "A cartoon rabbit wearing blue shirt and white pants.",
                       "--out", str(out)])
        assert rc == 0
        img = imgio.read_ppm(out)
        assert img.shape == (64, 64, 3)

    def test_sample_rejects_bad_prompt(self, workdir):
        root, cfg_path, ckpt, _ = workdir
        rc = cli.main(["sample", "--config", str(cfg_path), "--checkpoint", str(ckpt),
                       "--prompt", "A cartoon dragon wearing armor.",
                       "--out", str(root / "no.ppm")])
        assert rc == 2

    def test_render_eight_views(self, workdir):
        root, cfg_path, ckpt, _ = workdir
        tex = root / "ds" / "textures" / "00000.ppm"
        out = root / "renders"
        rc = cli.main(["render", "--config", str(cfg_path), "--species", "bear",
                       "--texture", str(tex), "--out", str(out), "--depth"])
        assert rc == 0
        assert len(list(out.glob("view_*.ppm"))) == 8
        assert len(list(out.glob("depth_*.pgm"))) == 8

    def test_animate_frames(self, workdir):
        root, cfg_path, ckpt, poses = workdir
        tex = root / "ds" / "textures" / "00001.ppm"
        out = root / "anim"
        rc = cli.main(["animate", "--config", str(cfg_path), "--species", "cat",
                       "--texture", str(tex), "--poses", str(poses),
                       "--out", str(out)])
        assert rc == 0
        assert len(list(out.glob("frame_*.ppm"))) == 2

    def test_seamfix_reports_metric(self, workdir):
        root, cfg_path, ckpt, _ = workdir
        tex = root / "ds" / "textures" / "00002.ppm"
        out = root / "fixed.ppm"
        rc = cli.main(["seamfix", "--config", str(cfg_path), "--species", "dog",
                       "--texture", str(tex), "--out", str(out)])
        assert rc == 0
        run = json.loads((out.parent / "run.json").read_text())
        # back-projection resampling bounds any residual increase
        assert run["seam_after"] <= run["seam_before"] + 2e-2

    def test_caption_with_mocks(self, workdir):
        root, cfg_path, ckpt, _ = workdir
        tex = root / "ds" / "textures" / "00003.ppm"
        out = root / "caption.json"
        rc = cli.main(["caption", "--config", str(cfg_path), "--species", "fox",
                       "--texture", str(tex), "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert len(doc["sessions"]) == 8
        for session in doc["sessions"]:
            assert len(session["qa"]) == 6

    def test_eval_image_dirs(self, workdir):
        root, cfg_path, ckpt, _ = workdir
        real_dir, fake_dir = root / "er", root / "ef"
        real_dir.mkdir(exist_ok=True)
        fake_dir.mkdir(exist_ok=True)
        rng = np.random.default_rng(0)
        for i in range(8):
            imgio.write_ppm(real_dir / f"{i}.ppm", rng.random((16, 16, 3)))
            imgio.write_ppm(fake_dir / f"{i}.ppm", rng.random((16, 16, 3)))
        out = root / "report.json"
        rc = cli.main(["eval", "--config", str(cfg_path), "--out", str(out),
                       "--real-dir", str(real_dir), "--fake-dir", str(fake_dir)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["fid"] is not None and doc["kid_x1000"] is not None
        assert doc["clip_score"] is None  # unavailable, never fabricated
        assert any("clip_score unavailable" in n for n in doc["notes"])

    def test_fixtures_library(self, workdir):
        root, cfg_path, *_ = workdir
        out = root / "lib"
        rc = cli.main(["fixtures", "--config", str(cfg_path), "--species", "rabbit",
                       "--out", str(out)])
        assert rc == 0
        assert (out / "rabbit.obj").exists()
        assert (out / "rabbit.rig.json").exists()
        assert (out / "regions.ppm").exists()

    def test_usage_error_exit_code_1(self):
        assert cli.main(["sample"]) == 1
        assert cli.main(["not-a-command"]) == 1

    def test_pipeline_deterministic_tree(self, workdir):
        root, cfg_path, ckpt, poses = workdir
        trees = []
        for name in ("p1", "p2"):
            out = root / name
            rc = cli.main(["pipeline", "--config", str(cfg_path),
                           "--prompt", "A cartoon bear wearing black suit.",
                           "--checkpoint", str(ckpt), "--poses", str(poses),
                           "--out", str(out)])
            assert rc == 0
            tree = {}
            for p in sorted(out.rglob("*")):
                if p.is_file():
                    tree[str(p.relative_to(out))] = p.read_bytes()
            trees.append(tree)
        assert trees[0].keys() == trees[1].keys()
        for key in trees[0]:
            assert trees[0][key] == trees[1][key], f"{key} differs"

    def test_pipeline_unknown_species_exit_2(self, workdir):
        root, cfg_path, ckpt, poses = workdir
        rc = cli.main(["pipeline", "--config", str(cfg_path),
                       "--prompt", "A cartoon unicorn wearing red dress.",
                       "--checkpoint", str(ckpt), "--out", str(root / "px")])
        assert rc == 2
