import numpy as np
import pytest

from toontex.charmodel import load_character, save_character
from toontex.errors import ContractError


def test_roundtrip(tiny_char, tmp_path):
    obj, rig = tmp_path / "c.obj", tmp_path / "c.rig.json"
    save_character(tiny_char, obj, rig)
    back = load_character(obj, rig)
    assert np.allclose(back.vertices, tiny_char.vertices, atol=1e-8)
    assert np.array_equal(back.triangles, tiny_char.triangles)
    assert np.allclose(back.uvs, tiny_char.uvs, atol=1e-8)
    assert np.array_equal(back.uv_indices, tiny_char.uv_indices)
    assert np.array_equal(back.skeleton.parents, tiny_char.skeleton.parents)
    assert np.allclose(back.skin_weights.weights, tiny_char.skin_weights.weights)
    assert np.allclose(back.blendshapes.basis, tiny_char.blendshapes.basis, atol=1e-8)
    assert len(back.joint_vertex_sets) == tiny_char.skeleton.num_joints


def test_obj_layout(tiny_char, tmp_path):
    obj, rig = tmp_path / "c.obj", tmp_path / "c.rig.json"
    save_character(tiny_char, obj, rig)
    lines = obj.read_text().splitlines()
    kinds = [ln.split()[0] for ln in lines if ln and not ln.startswith("#")]
    assert kinds.count("v") == tiny_char.num_vertices
    assert kinds.count("vt") == len(tiny_char.uvs)
    assert kinds.count("f") == len(tiny_char.triangles)
    first_face = next(ln for ln in lines if ln.startswith("f "))
    assert all("/" in corner for corner in first_face.split()[1:])


def test_rig_fixed_field_names(tiny_char, tmp_path):
    import json
    obj, rig = tmp_path / "c.obj", tmp_path / "c.rig.json"
    save_character(tiny_char, obj, rig)
    doc = json.loads(rig.read_text())
    assert {"joints", "parents", "weights", "mean", "basis"} <= set(doc)


def test_missing_uv_index_rejected(tmp_path):
    obj = tmp_path / "bad.obj"
    obj.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1 2 3\n")
    rig = tmp_path / "bad.rig.json"
    rig.write_text('{"joints": [[0,0,0]], "parents": [-1], '
                   '"weights": [[1],[1],[1]], "mean": [[0,0,0],[1,0,0],[0,1,0]], '
                   '"basis": []}')
    with pytest.raises(ContractError, match="UV"):
        load_character(obj, rig)


def test_missing_rig_field_rejected(tiny_char, tmp_path):
    import json
    obj, rig = tmp_path / "c.obj", tmp_path / "c.rig.json"
    save_character(tiny_char, obj, rig)
    doc = json.loads(rig.read_text())
    del doc["weights"]
    rig.write_text(json.dumps(doc))
    with pytest.raises(ContractError, match="weights"):
        load_character(obj, rig)
