"""Parametric biped character: blendshape identity, kinematic skeleton,
Rodrigues rotations, linear blend skinning, animation."""

from .model import (
    BlendshapeBasis,
    CharacterMesh,
    Skeleton,
    SkinWeights,
    animate,
    apply_blendshapes,
    global_transform,
    regress_joints,
    rodrigues,
    skin_pose,
)
from .fixtures import (
    ATLAS_REGIONS,
    SPECIES,
    build_character,
    seam_test_character,
    tiny_chain_character,
)
from .meshio import load_character, save_character

__all__ = [
    "ATLAS_REGIONS",
    "BlendshapeBasis",
    "CharacterMesh",
    "SPECIES",
    "Skeleton",
    "SkinWeights",
    "animate",
    "apply_blendshapes",
    "build_character",
    "global_transform",
    "load_character",
    "regress_joints",
    "rodrigues",
    "save_character",
    "seam_test_character",
    "skin_pose",
    "tiny_chain_character",
]
