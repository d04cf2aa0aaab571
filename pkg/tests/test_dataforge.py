import json

import numpy as np
import pytest

from toontex import dataforge as df
from toontex.errors import ContractError


@pytest.fixture(scope="module")
def template():
    return df.region_template(64)


class TestRegionTemplate:
    def test_regions_disjoint_union_is_chart(self, template):
        union = np.zeros((64, 64), dtype=bool)
        for name, mask in template.masks.items():
            assert not (union & mask).any(), f"{name} overlaps"
            union |= mask
        assert np.array_equal(union, template.chart_mask)

    def test_all_regions_nonempty(self, template):
        for name, mask in template.masks.items():
            assert mask.any(), f"{name} empty"

    def test_save_load_roundtrip(self, template, tmp_path):
        path = tmp_path / "regions.ppm"
        df.save_region_template(template, path)
        back = df.load_region_template(path)
        for name in template.masks:
            assert np.array_equal(back.masks[name], template.masks[name])


class TestGenerateTexture:
    def test_deterministic(self, template):
        spec = df.TextureSpec("cat", "dress", ("pink",), "dotted", seed=9)
        a = df.generate_texture(spec, template)
        b = df.generate_texture(spec, template)
        assert np.array_equal(a.pixels, b.pixels)

    def test_blue_shirt_white_pants_region_means(self, template):
        spec = df.TextureSpec("rabbit", "shirt and pants", ("blue", "white"), seed=3)
        tex = df.generate_texture(spec, template)
        torso = df.region_mean_color(tex, template, "torso")
        leg = df.region_mean_color(tex, template, "left_leg")
        assert np.linalg.norm(torso - np.array(df.COLORS["blue"])) < 0.15
        assert np.linalg.norm(leg - np.array(df.COLORS["white"])) < 0.15

    def test_pattern_means_stay_near_anchor(self, template):
        for pattern in df.PATTERNS:
            spec = df.TextureSpec("dog", "suit", ("red",), pattern, seed=1)
            tex = df.generate_texture(spec, template)
            mean = df.region_mean_color(tex, template, "torso")
            assert np.linalg.norm(mean - np.array(df.COLORS["red"])) < 0.2

    def test_skin_on_uncovered_regions(self, template):
        spec = df.TextureSpec("fox", "hoodie", ("green",), seed=2)
        tex = df.generate_texture(spec, template)
        leg = df.region_mean_color(tex, template, "left_leg")
        assert np.linalg.norm(leg - np.array(df.SKIN_TONES["fox"])) < 0.1

    def test_texture_invariants(self, template):
        spec = df.TextureSpec("pig", "overall", ("cyan",), "plaid", seed=5)
        tex = df.generate_texture(spec, template)
        assert tex.pixels.shape == (64, 64, 3)
        assert tex.pixels.min() >= 0 and tex.pixels.max() <= 1
        assert np.array_equal(tex.chart_mask, template.chart_mask)

    def test_unknown_fields_rejected(self):
        with pytest.raises(ContractError):
            df.TextureSpec("cat", "tuxedo", ("red",))
        with pytest.raises(ContractError):
            df.TextureSpec("cat", "suit", ("neon",))
        with pytest.raises(ContractError):
            df.TextureSpec("cat", "suit", ("red", "blue"))  # wrong color count


class TestPrompts:
    def test_paper_example_prompt(self):
        spec = df.TextureSpec("rabbit", "shirt and pants", ("blue", "white"))
        assert df.prompt_from_spec(spec) == \
            "A cartoon rabbit wearing blue shirt and white pants."

    def test_roundtrip_over_grammar(self):
        for species in ("bear", "elephant"):
            for cloth, garments in df.CLOTH_TYPES.items():
                for pattern in df.PATTERNS:
                    colors = tuple(list(df.COLORS)[:len(garments)])
                    spec = df.TextureSpec(species, cloth, colors, pattern, seed=4)
                    back = df.parse_prompt(df.prompt_from_spec(spec), seed=4)
                    assert back == spec

    def test_parse_rejects_unknown_species(self):
        with pytest.raises(ContractError, match="bear"):
            df.parse_prompt("A cartoon dragon wearing black suit.")

    def test_parse_rejects_malformed(self):
        with pytest.raises(ContractError):
            df.parse_prompt("A cartoon bear wearing suit")  # no period
        with pytest.raises(ContractError):
            df.parse_prompt("A cartoon bear wearing suit.")  # color missing
        with pytest.raises(ContractError):
            df.parse_prompt("A cartoon bear wearing blue pants.")  # pants w/o shirt


class TestPromptSuite:
    def test_300_unique_20_per_species(self):
        suite = df.test_prompt_suite()
        assert set(suite) == set(df.SPECIES)
        all_prompts = [p for prompts in suite.values() for p in prompts]
        assert len(all_prompts) == 300
        assert len(set(all_prompts)) == 300
        for prompts in suite.values():
            assert len(prompts) == 20

    def test_grammar_conformance(self):
        suite = df.test_prompt_suite()
        for species, prompts in suite.items():
            for p in prompts:
                spec = df.parse_prompt(p)
                assert spec.species == species
                assert p.startswith(f"A cartoon {species} wearing ")


class TestBuildDataset:
    def test_reproducible_bytes(self, template, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        df.build_dataset(12, 77, template, d1)
        df.build_dataset(12, 77, template, d2)
        assert (d1 / "manifest.jsonl").read_bytes() == (d2 / "manifest.jsonl").read_bytes()
        for p1 in sorted((d1 / "textures").iterdir()):
            p2 = d2 / "textures" / p1.name
            assert p1.read_bytes() == p2.read_bytes()

    def test_manifest_fields(self, template, tmp_path):
        df.build_dataset(3, 5, template, tmp_path / "d")
        rows = [json.loads(line) for line in
                (tmp_path / "d" / "manifest.jsonl").read_text().splitlines()]
        for row in rows:
            assert set(row) == {"texture_path", "prompt", "species", "cloth",
                                "colors", "pattern", "seed", "mesh_id"}

    def test_records_roundtrip_and_prompt_consistency(self, template, tmp_path):
        records = df.build_dataset(10, 13, template, tmp_path / "d")
        loaded = df.load_manifest(tmp_path / "d" / "manifest.jsonl")
        assert [r.prompt for r in records] == [r.prompt for r in loaded]
        for r in loaded:
            assert df.prompt_from_spec(r.spec) == r.prompt

    def test_excludes_benchmark_combos(self, template, tmp_path):
        records = df.build_dataset(60, 3, template, tmp_path / "d")
        test_set = {(c, tuple(cols), p) for c, cols, p in df.TEST_COMBOS}
        for r in records:
            combo = (r.spec.cloth_type, r.spec.colors, r.spec.pattern)
            assert combo not in test_set

    def test_invalid_size(self, template, tmp_path):
        with pytest.raises(ContractError):
            df.build_dataset(0, 0, template, tmp_path / "d")


class TestGenericPretrainImages:
    def test_shape_range_determinism(self):
        a = df.generic_pretrain_images(4, 3, 32)
        b = df.generic_pretrain_images(4, 3, 32)
        assert a.shape == (4, 32, 32, 3)
        assert a.min() >= 0 and a.max() <= 1
        assert np.array_equal(a, b)

    def test_images_vary(self):
        imgs = df.generic_pretrain_images(4, 3, 32)
        assert np.abs(imgs[0] - imgs[1]).max() > 0.1
