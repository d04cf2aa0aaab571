"""Procedural text-texture paired data and the 300-prompt test benchmark.

The prompt grammar is closed: 15 species, 5 cloth types, 12 named colors,
4 patterns. Prompts follow "A cartoon {species} wearing {attributes}." and
parse back to their spec, so text conditioning can be verified against the
texture's region colors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio
from .charmodel.fixtures import ATLAS_REGIONS, SPECIES
from .errors import ContractError
from .uvtools import TextureMap

COLORS: dict[str, tuple[float, float, float]] = {
    "white": (0.95, 0.95, 0.95),
    "black": (0.08, 0.08, 0.08),
    "red": (0.82, 0.13, 0.12),
    "green": (0.17, 0.62, 0.22),
    "blue": (0.16, 0.32, 0.78),
    "yellow": (0.91, 0.83, 0.17),
    "orange": (0.92, 0.53, 0.12),
    "purple": (0.52, 0.22, 0.65),
    "pink": (0.93, 0.56, 0.68),
    "brown": (0.48, 0.31, 0.16),
    "gray": (0.52, 0.52, 0.52),
    "cyan": (0.20, 0.71, 0.74),
}

PATTERNS = ("solid", "striped", "dotted", "plaid")

# cloth type -> (colored garments as (noun, regions), skin regions)
CLOTH_TYPES: dict[str, list[tuple[str, tuple[str, ...]]]] = {
    "overall": [("overall", ("torso", "left_leg", "right_leg"))],
    "suit": [("suit", ("torso", "left_arm", "right_arm", "left_leg", "right_leg"))],
    "shirt and pants": [("shirt", ("torso", "left_arm", "right_arm")),
                        ("pants", ("left_leg", "right_leg"))],
    "dress": [("dress", ("torso", "left_leg", "right_leg"))],
    "hoodie": [("hoodie", ("torso", "left_arm", "right_arm"))],
}

SKIN_TONES: dict[str, tuple[float, float, float]] = {
    "human": (0.91, 0.76, 0.65), "bear": (0.55, 0.38, 0.24),
    "mouse": (0.72, 0.70, 0.72), "cat": (0.85, 0.67, 0.42),
    "tiger": (0.90, 0.55, 0.22), "dog": (0.72, 0.55, 0.38),
    "rabbit": (0.88, 0.86, 0.84), "monkey": (0.62, 0.45, 0.32),
    "elephant": (0.62, 0.64, 0.70), "fox": (0.88, 0.45, 0.20),
    "pig": (0.95, 0.71, 0.71), "deer": (0.76, 0.57, 0.35),
    "hippo": (0.58, 0.56, 0.66), "cattle": (0.45, 0.32, 0.28),
    "sheep": (0.92, 0.90, 0.85),
}

SHOE_COLOR = (0.22, 0.16, 0.12)
BACKGROUND_COLOR = (1.0, 1.0, 1.0)

# the 20 attribute combinations of the test benchmark (cloth, colors, pattern)
TEST_COMBOS: list[tuple[str, tuple[str, ...], str]] = [
    ("shirt and pants", ("blue", "white"), "solid"),
    ("shirt and pants", ("red", "black"), "solid"),
    ("shirt and pants", ("green", "gray"), "striped"),
    ("shirt and pants", ("yellow", "blue"), "dotted"),
    ("overall", ("blue",), "solid"),
    ("overall", ("red",), "striped"),
    ("overall", ("green",), "dotted"),
    ("overall", ("brown",), "plaid"),
    ("suit", ("black",), "solid"),
    ("suit", ("gray",), "striped"),
    ("suit", ("purple",), "solid"),
    ("suit", ("cyan",), "plaid"),
    ("dress", ("pink",), "solid"),
    ("dress", ("white",), "dotted"),
    ("dress", ("orange",), "striped"),
    ("dress", ("purple",), "plaid"),
    ("hoodie", ("green",), "solid"),
    ("hoodie", ("orange",), "dotted"),
    ("hoodie", ("black",), "striped"),
    ("hoodie", ("cyan",), "solid"),
]


@dataclass(frozen=True)
class TextureSpec:
    species: str
    cloth_type: str
    colors: tuple[str, ...]
    pattern: str = "solid"
    seed: int = 0

    def __post_init__(self):
        if self.species not in SPECIES:
            raise ContractError(f"unknown species {self.species!r}")
        if self.cloth_type not in CLOTH_TYPES:
            raise ContractError(f"unknown cloth type {self.cloth_type!r}")
        if self.pattern not in PATTERNS:
            raise ContractError(f"unknown pattern {self.pattern!r}")
        garments = CLOTH_TYPES[self.cloth_type]
        if len(self.colors) != len(garments):
            raise ContractError(
                f"{self.cloth_type!r} needs {len(garments)} colors, got {len(self.colors)}")
        for c in self.colors:
            if c not in COLORS:
                raise ContractError(f"unknown color {c!r}")


@dataclass
class UVRegionTemplate:
    """Disjoint per-region texel masks whose union is the chart mask."""

    resolution: int
    masks: dict[str, np.ndarray]
    chart_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        union = np.zeros((self.resolution, self.resolution), dtype=bool)
        for name, m in self.masks.items():
            if (union & m).any():
                raise ContractError(f"region {name!r} overlaps another region")
            union |= m
        self.chart_mask = union


@dataclass
class DatasetRecord:
    texture_path: str
    prompt: str
    spec: TextureSpec
    mesh_id: str


def region_template(resolution: int = 64) -> UVRegionTemplate:
    """Region masks rasterized from the shared atlas layout."""
    centers = (np.arange(resolution) + 0.5) / resolution
    uu, vv = np.meshgrid(centers, centers)
    masks = {}
    for name, rects in ATLAS_REGIONS.items():
        m = np.zeros((resolution, resolution), dtype=bool)
        for u0, v0, u1, v1 in rects:
            m |= (uu >= u0) & (uu < u1) & (vv >= v0) & (vv < v1)
        masks[name] = m
    return UVRegionTemplate(resolution, masks)


_REGION_CODES = {  # distinct colors for the shipped region-mask image
    "head": (1.0, 0.0, 0.0), "torso": (0.0, 1.0, 0.0),
    "left_arm": (0.0, 0.0, 1.0), "right_arm": (1.0, 1.0, 0.0),
    "left_leg": (1.0, 0.0, 1.0), "right_leg": (0.0, 1.0, 1.0),
    "feet": (1.0, 0.5, 0.0), "eyes": (1.0, 1.0, 1.0),
}


def save_region_template(template: UVRegionTemplate, path) -> None:
    img = np.zeros((template.resolution, template.resolution, 3))
    for name, mask in template.masks.items():
        img[mask] = _REGION_CODES[name]
    imgio.write_ppm(path, img)


def load_region_template(path) -> UVRegionTemplate:
    img = imgio.read_ppm(path)
    res = img.shape[0]
    masks = {}
    for name, code in _REGION_CODES.items():
        masks[name] = np.all(np.abs(img - np.asarray(code)) < 0.01, axis=2)
    return UVRegionTemplate(res, masks)


def _pattern_field(pattern: str, base: np.ndarray, second: np.ndarray,
                   res: int, phase: int) -> np.ndarray:
    """(res, res, 3) cloth fill; pattern frequencies are fixed per kind."""
    period = max(4, res // 8)
    ii, jj = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    if pattern == "solid":
        return np.broadcast_to(base, (res, res, 3)).copy()
    if pattern == "striped":
        sel = ((ii + phase) // (period // 2)) % 2 == 1
    elif pattern == "dotted":
        cy = (ii + phase) % period - period / 2 + 0.5
        cx = (jj + phase) % period - period / 2 + 0.5
        sel = cy * cy + cx * cx <= (period / 4) ** 2
    elif pattern == "plaid":
        sel = ((((ii + phase) // (period // 2)) % 2 == 1)
               ^ (((jj + phase) // (period // 2)) % 2 == 1))
    else:
        raise ContractError(f"unknown pattern {pattern!r}")
    out = np.broadcast_to(base, (res, res, 3)).copy()
    out[sel] = second
    return out


# fabric weave cycles per atlas, by cloth type (shared with the proxy
# provider so "real" detail and texture detail agree)
CLOTH_WEAVE = {
    "overall": (22.0, 6.0), "suit": (16.0, 16.0),
    "shirt and pants": (12.0, 24.0), "dress": (8.0, 20.0),
    "hoodie": (18.0, 10.0),
}
WEAVE_AMPLITUDE = 0.045


def generate_texture(spec: TextureSpec, template: UVRegionTemplate) -> TextureMap:
    """Texture for a spec: skin on head/uncovered limbs, patterned cloth
    with a fabric weave per garment, fixed eye pattern, white background.

    The texture is a pure function of the grammar fields (species, cloth,
    colors, pattern): the prompt fully determines its target, which is
    what makes text-conditioned fine-tuning learnable at desk scale.
    """
    res = template.resolution
    rng = np.random.default_rng([_spec_code(spec)])
    px = np.empty((res, res, 3))
    px[:] = BACKGROUND_COLOR

    skin = np.asarray(SKIN_TONES[spec.species])
    skin = np.clip(skin + rng.uniform(-0.02, 0.02, size=3), 0, 1)
    ii, jj = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    fx, fy = CLOTH_WEAVE[spec.cloth_type]
    weave = WEAVE_AMPLITUDE * (np.sin(2 * np.pi * fx * jj / res)
                               * np.sin(2 * np.pi * fy * ii / res))
    cloth_regions: set[str] = set()
    garments = CLOTH_TYPES[spec.cloth_type]
    for (noun, regions), color_name in zip(garments, spec.colors):
        base = np.asarray(COLORS[color_name])
        base = np.clip(base + rng.uniform(-0.02, 0.02, size=3), 0, 1)
        second = np.clip(base * 0.7 + 0.12, 0, 1)
        phase = int(rng.integers(0, res))
        fill = _pattern_field(spec.pattern, base, second, res, phase)
        fill = fill + weave[:, :, None]
        for region in regions:
            px[template.masks[region]] = fill[template.masks[region]]
            cloth_regions.add(region)

    for region in ("head", "torso", "left_arm", "right_arm", "left_leg", "right_leg"):
        if region not in cloth_regions:
            px[template.masks[region]] = skin
    px[template.masks["feet"]] = SHOE_COLOR
    px[template.masks["eyes"]] = _eye_pattern(template)
    return TextureMap(np.clip(px, 0, 1), template.chart_mask.copy())


def _eye_pattern(template: UVRegionTemplate) -> np.ndarray:
    """Default eyeball texels: white sclera, dark pupil disk per eye rect."""
    res = template.resolution
    out = np.full((res, res, 3), 0.97)
    ii, jj = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    for u0, v0, u1, v1 in ATLAS_REGIONS["eyes"]:
        ci = (v0 + v1) / 2 * res - 0.5
        cj = (u0 + u1) / 2 * res - 0.5
        r = (u1 - u0) * res / 4
        pupil = (ii - ci) ** 2 + (jj - cj) ** 2 <= r * r
        out[pupil] = 0.05
    return out[template.masks["eyes"]]


def _spec_code(spec: TextureSpec) -> int:
    """Stable small integer encoding of the grammar fields."""
    code = SPECIES.index(spec.species)
    code = code * 8 + list(CLOTH_TYPES).index(spec.cloth_type)
    for c in spec.colors:
        code = code * 16 + list(COLORS).index(c)
    code = code * 4 + PATTERNS.index(spec.pattern)
    return code


def prompt_from_spec(spec: TextureSpec) -> str:
    """Template: 'A cartoon {species} wearing {attributes}.'"""
    garments = CLOTH_TYPES[spec.cloth_type]
    parts = [f"{color} {noun}" for (noun, _), color in zip(garments, spec.colors)]
    attributes = " and ".join(parts)
    pattern = "" if spec.pattern == "solid" else f"{spec.pattern} "
    return f"A cartoon {spec.species} wearing {pattern}{attributes}."


_NOUN_TO_CLOTH = {"overall": "overall", "suit": "suit", "dress": "dress",
                  "hoodie": "hoodie", "shirt": "shirt and pants"}


def parse_prompt(prompt: str, seed: int = 0) -> TextureSpec:
    """Inverse of prompt_from_spec over the closed grammar."""
    text = prompt.strip()
    if not text.endswith("."):
        raise ContractError(f"prompt must end with a period: {prompt!r}")
    words = text[:-1].split()
    if len(words) < 5 or [w.lower() for w in words[:2]] != ["a", "cartoon"]:
        raise ContractError(f"prompt must start with 'A cartoon': {prompt!r}")
    species = words[2].lower()
    if species not in SPECIES:
        raise ContractError(f"unknown species {species!r}; known: {', '.join(SPECIES)}")
    if words[3] != "wearing":
        raise ContractError(f"expected 'wearing' after species: {prompt!r}")
    rest = words[4:]
    pattern = "solid"
    if rest and rest[0] in PATTERNS:
        pattern = rest[0]
        rest = rest[1:]
    colors, nouns = [], []
    i = 0
    while i < len(rest):
        if rest[i] == "and":
            i += 1
            continue
        if i + 1 >= len(rest):
            raise ContractError(f"dangling attribute word {rest[i]!r} in {prompt!r}")
        color, noun = rest[i], rest[i + 1]
        if color not in COLORS:
            raise ContractError(f"unknown color {color!r} in {prompt!r}")
        if noun == "pants":
            if not nouns or nouns[-1] != "shirt":
                raise ContractError(f"'pants' without 'shirt' in {prompt!r}")
        elif noun not in _NOUN_TO_CLOTH:
            raise ContractError(f"unknown garment {noun!r} in {prompt!r}")
        colors.append(color)
        nouns.append(noun)
        i += 2
    if not nouns:
        raise ContractError(f"no garment found in {prompt!r}")
    cloth = _NOUN_TO_CLOTH[nouns[0]]
    expected_nouns = [g[0] for g in CLOTH_TYPES[cloth]]
    if nouns != expected_nouns:
        raise ContractError(f"garment sequence {nouns} invalid in {prompt!r}")
    return TextureSpec(species, cloth, tuple(colors), pattern, seed)


def expected_region_colors(spec: TextureSpec) -> dict[str, tuple[float, float, float]]:
    """Region -> named RGB anchor for every cloth-covered region."""
    out = {}
    for (noun, regions), color_name in zip(CLOTH_TYPES[spec.cloth_type], spec.colors):
        for region in regions:
            out[region] = COLORS[color_name]
    return out


def region_mean_color(texture: TextureMap, template: UVRegionTemplate,
                      region: str) -> np.ndarray:
    mask = template.masks[region]
    return texture.pixels[mask].mean(axis=0)


def sample_spec(rng: np.random.Generator, seed: int,
                exclude_test_combos: bool = True) -> TextureSpec:
    """One spec drawn uniformly from the grammar."""
    test_set = {(c, tuple(cols), p) for c, cols, p in TEST_COMBOS}
    color_names = list(COLORS)
    for _ in range(1000):
        species = SPECIES[int(rng.integers(len(SPECIES)))]
        cloth = list(CLOTH_TYPES)[int(rng.integers(len(CLOTH_TYPES)))]
        n_colors = len(CLOTH_TYPES[cloth])
        idx = rng.choice(len(color_names), size=n_colors, replace=False)
        colors = tuple(color_names[int(i)] for i in idx)
        pattern = PATTERNS[int(rng.integers(len(PATTERNS)))]
        if exclude_test_combos and (cloth, colors, pattern) in test_set:
            continue
        return TextureSpec(species, cloth, colors, pattern, seed)
    raise RuntimeError("failed to sample a non-benchmark spec")


def build_dataset(n: int, seed: int, template: UVRegionTemplate, out_dir,
                  exclude_test_combos: bool = True) -> list[DatasetRecord]:
    """n records with textures on disk plus a JSONL manifest.

    Record i's randomness derives from (seed, i) alone, so the output is
    byte-reproducible regardless of generation order.
    """
    if n <= 0:
        raise ContractError("dataset size must be positive")
    out_dir = Path(out_dir)
    (out_dir / "textures").mkdir(parents=True, exist_ok=True)
    records = []
    lines = []
    for i in range(n):
        rng = np.random.default_rng([seed & 0x7FFFFFFF, i])
        record_seed = int(rng.integers(0, 2 ** 31 - 1))
        spec = sample_spec(rng, record_seed, exclude_test_combos)
        tex = generate_texture(spec, template)
        rel = f"textures/{i:05d}.ppm"
        imgio.write_ppm(out_dir / rel, tex.pixels)
        prompt = prompt_from_spec(spec)
        records.append(DatasetRecord(rel, prompt, spec, spec.species))
        lines.append(json.dumps({
            "texture_path": rel, "prompt": prompt, "species": spec.species,
            "cloth": spec.cloth_type, "colors": list(spec.colors),
            "pattern": spec.pattern, "seed": spec.seed, "mesh_id": spec.species,
        }, sort_keys=True))
    (out_dir / "manifest.jsonl").write_text("\n".join(lines) + "\n", encoding="ascii")
    return records


def load_manifest(path) -> list[DatasetRecord]:
    records = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        spec = TextureSpec(row["species"], row["cloth"], tuple(row["colors"]),
                           row["pattern"], row["seed"])
        records.append(DatasetRecord(row["texture_path"], row["prompt"], spec,
                                     row["mesh_id"]))
    return records


def test_prompt_suite() -> dict[str, list[str]]:
    """300 prompts: the 20 benchmark attribute combos for each species."""
    suite = {}
    for species in SPECIES:
        prompts = []
        for cloth, colors, pattern in TEST_COMBOS:
            prompts.append(prompt_from_spec(TextureSpec(species, cloth, colors, pattern)))
        suite[species] = prompts
    return suite


def generic_pretrain_images(n: int, seed: int, resolution: int = 64) -> np.ndarray:
    """Generic procedural images for pretraining the base denoiser.

    Gradients, soft color blobs, striped patches and light noise; a broad
    2D image distribution deliberately unlike the UV-atlas layout, so
    fine-tuning has a real domain gap to close (the role natural-image
    pretraining plays at full scale). Image i depends on (seed, i) only.
    """
    if n <= 0:
        raise ContractError("image count must be positive")
    res = resolution
    yy, xx = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    out = np.empty((n, res, res, 3))
    for i in range(n):
        rng = np.random.default_rng([seed & 0x7FFFFFFF, 7777, i])
        theta = rng.uniform(0, 2 * np.pi)
        g = (np.cos(theta) * xx + np.sin(theta) * yy) / res
        g = (g - g.min()) / max(g.max() - g.min(), 1e-9)
        # mid-saturated palette: no flat near-white or near-black areas,
        # keeping this distribution far from the atlas value statistics
        c0, c1 = rng.uniform(0.12, 0.88, (2, 3))
        img = c0 + g[:, :, None] * (c1 - c0)
        for k in range(int(rng.integers(4, 10))):
            cy, cx = rng.uniform(0, res, 2)
            ry, rx = rng.uniform(res / 12, res / 3, 2)
            color = rng.uniform(0.12, 0.88, 3)
            d = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
            m = np.clip(1.5 - d, 0.0, 1.0)
            if rng.random() < 0.5:  # striped fill
                period = rng.uniform(3, 14)
                phi = rng.uniform(0, 2 * np.pi)
                ang = rng.uniform(0, np.pi)
                wave = np.sin(2 * np.pi * (np.cos(ang) * xx + np.sin(ang) * yy)
                              / period + phi)
                color2 = rng.uniform(0.12, 0.88, 3)
                fill = np.where(wave[:, :, None] > 0, color, color2)
            else:
                fill = np.broadcast_to(color, (res, res, 3))
            img = img * (1 - m[:, :, None]) + fill * m[:, :, None]
        img = img + rng.normal(0.0, 0.012, img.shape)
        out[i] = np.clip(img, 0.0, 1.0)
    return out
