"""toontex: text-guided UV texture generation for parametric cartoon bipeds.

Subpackages and modules:
    charmodel   blendshape identity, skeleton, linear blend skinning, animation
    rasterizer  deterministic software rasterizer with exact texel gradients
    uvtools     UV seam extraction, repair and view-to-texture back-projection
    diffusion   denoising diffusion core with low-rank adapters
    advtrain    adversarially enhanced fine-tuning loop
    dataforge   procedural text-texture dataset and test prompt benchmark
    captioner   multi-agent captioning orchestration over pluggable clients
    evalkit     FID / KID / CLIP-score / seam / detail metrics
    cli         command line surface tying the above together
"""

__version__ = "0.1.0"
