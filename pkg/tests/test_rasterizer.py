import numpy as np
import pytest

from toontex import rasterizer as ras
from toontex.charmodel.model import BlendshapeBasis, CharacterMesh, Skeleton, SkinWeights
from toontex.errors import ContractError


def make_mesh(verts, tris, uvs, uv_idx):
    verts = np.asarray(verts, dtype=float)
    n = len(verts)
    return CharacterMesh(
        vertices=verts,
        triangles=np.asarray(tris, dtype=int),
        uvs=np.asarray(uvs, dtype=float),
        uv_indices=np.asarray(uv_idx, dtype=int),
        skeleton=Skeleton(np.zeros((1, 3)), [-1]),
        skin_weights=SkinWeights(np.ones((n, 1))),
        blendshapes=BlendshapeBasis(verts.copy(), np.zeros((0, 3 * n))),
    )


class TestCamera:
    def test_eight_azimuths_distinct(self):
        cams = ras.view_set(size=64)
        assert len(cams) == 8
        positions = [tuple(np.round(c.position(), 12)) for c in cams]
        assert len(set(positions)) == 8

    def test_periodicity(self):
        a = ras.camera_from_spherical(0.0, 1.5, 80.0, 40.0, 64)
        b = ras.camera_from_spherical(360.0, 1.5, 80.0, 40.0, 64)
        assert np.allclose(a.position(), b.position(), atol=1e-12)
        for u, v in zip(a.basis(), b.basis()):
            assert np.allclose(u, v, atol=1e-12)

    def test_position_norm_is_radius(self, rng):
        for _ in range(20):
            phi, el, r = rng.uniform(0, 360), rng.uniform(-89, 89), rng.uniform(0.5, 3)
            cam = ras.camera_from_spherical(phi, r, el, 40.0, 32)
            assert abs(np.linalg.norm(cam.position()) - r) <= 1e-12

    def test_invalid_params(self):
        with pytest.raises(ContractError):
            ras.camera_from_spherical(0, -1.0, 0, 40.0, 32)
        with pytest.raises(ContractError):
            ras.camera_from_spherical(0, 1.0, 0, 190.0, 32)


class TestRasterize:
    def test_fullscreen_triangle(self):
        mesh = make_mesh([[-5, -5, 0], [5, -5, 0], [0, 8, 0]], [[0, 1, 2]],
                         [[0, 0], [1, 0], [0.5, 1]], [[0, 1, 2]])
        cam = ras.camera_from_spherical(0, 2.0, 0.0, 60.0, 16)
        cov = ras.rasterize(mesh, None, cam)
        assert cov.covered().all()
        assert np.max(np.abs(cov.bary.sum(axis=2) - 1.0)) <= 1e-12

    def test_zbuffer_nearer_wins(self):
        # two stacked triangles; the one at z=+0.5 is nearer to the camera at +z
        mesh = make_mesh(
            [[-5, -5, 0], [5, -5, 0], [0, 8, 0],
             [-5, -5, 0.5], [5, -5, 0.5], [0, 8, 0.5]],
            [[0, 1, 2], [3, 4, 5]],
            [[0, 0], [1, 0], [0.5, 1]], [[0, 1, 2], [0, 1, 2]])
        cam = ras.camera_from_spherical(0, 2.0, 0.0, 60.0, 16)
        cov = ras.rasterize(mesh, None, cam)
        assert (cov.tri_id == 1).all()

    def test_hand_enumerated_coverage_8x8(self):
        # independent oracle: sign-of-cross point-in-triangle at pixel centers
        mesh = make_mesh([[-0.8, -0.8, 0], [0.8, -0.8, 0], [-0.8, 0.8, 0]],
                         [[0, 1, 2]], [[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
        cam = ras.camera_from_spherical(0, 2.0, 0.0, 60.0, 8)
        cov = ras.rasterize(mesh, None, cam)
        screen, _ = cam.project(mesh.vertices)
        expected = np.zeros((8, 8), dtype=bool)
        a, b, c = screen

        def edge(p, q, x):
            return (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0])

        for i in range(8):
            for j in range(8):
                x = (j + 0.5, i + 0.5)
                s0, s1, s2 = edge(a, b, x), edge(b, c, x), edge(c, a, x)
                expected[i, j] = (s0 >= 0 and s1 >= 0 and s2 >= 0) or \
                                 (s0 <= 0 and s1 <= 0 and s2 <= 0)
        assert expected.any() and not expected.all()
        assert np.array_equal(cov.covered(), expected)

    def test_degenerate_triangle_skipped(self):
        mesh = make_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]],
                         [[0, 0], [1, 0], [1, 0]], [[0, 1, 2]])
        cam = ras.camera_from_spherical(0, 2.0, 0.0, 60.0, 8)
        cov = ras.rasterize(mesh, None, cam)  # must not raise
        assert not cov.covered().any()

    def test_deterministic_bit_identical(self, rabbit):
        cam = ras.camera_from_spherical(30, 1.5, 15.0, 40.0, 64)
        c1 = ras.rasterize(rabbit, None, cam)
        c2 = ras.rasterize(rabbit, None, cam)
        for f in ("tri_id", "bary", "uv", "depth"):
            assert np.array_equal(getattr(c1, f), getattr(c2, f))

    def test_uv_and_bary_invariants(self, rabbit):
        cam = ras.camera_from_spherical(200, 1.5, 30.0, 40.0, 64)
        cov = ras.rasterize(rabbit, None, cam)
        m = cov.covered()
        assert m.any()
        assert (cov.bary[m] >= -1e-12).all()
        assert np.max(np.abs(cov.bary[m].sum(axis=1) - 1)) <= 1e-12
        assert (cov.uv[m] >= 0).all() and (cov.uv[m] <= 1).all()
        assert (cov.depth[m] >= cam.near).all() and (cov.depth[m] <= cam.far).all()
        assert np.isinf(cov.depth[~m]).all()

    def test_nonfinite_vertices_rejected(self, rabbit):
        cam = ras.camera_from_spherical(0, 1.5, 0, 40.0, 16)
        bad = rabbit.vertices.copy()
        bad[0, 0] = np.inf
        with pytest.raises(ContractError):
            ras.rasterize(rabbit, bad, cam)


def fullscreen_coverage(size=16):
    mesh = make_mesh([[-5, -5, 0], [5, -5, 0], [0, 8, 0]], [[0, 1, 2]],
                     [[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]], [[0, 1, 2]])
    cam = ras.camera_from_spherical(0, 2.0, 0.0, 60.0, size)
    return ras.rasterize(mesh, None, cam)


class TestShade:
    def test_constant_texture(self):
        cov = fullscreen_coverage()
        tex = np.full((32, 32, 3), 0.37)
        rgb = ras.shade(cov, tex)
        assert np.allclose(rgb, 0.37, atol=1e-12)

    def test_texel_center_exact(self, rng):
        tex = rng.random((8, 8, 3))
        # uv exactly at the center of texel (2, 5)
        uv = np.array([[(5 + 0.5) / 8, (2 + 0.5) / 8]])
        val = ras.bilinear_sample(tex, uv)
        assert np.array_equal(val[0], tex[2, 5])

    def test_bilinear_midpoint_hand_weights(self, rng):
        tex = rng.random((2, 2, 3))
        val = ras.bilinear_sample(tex, np.array([[0.5, 0.5]]))
        assert np.allclose(val[0], tex.mean(axis=(0, 1)), atol=1e-12)

    def test_linear_in_texture(self, rng):
        cov = fullscreen_coverage()
        t1, t2 = rng.random((2, 16, 16, 3))
        a, b = 0.3, -1.7
        lhs = ras.shade(cov, a * t1 + b * t2, background=(0, 0, 0))
        rhs = a * ras.shade(cov, t1, background=(0, 0, 0)) + \
            b * ras.shade(cov, t2, background=(0, 0, 0))
        m = cov.covered()
        assert np.max(np.abs(lhs[m] - rhs[m])) <= 1e-6

    def test_background_color(self, rabbit):
        cam = ras.camera_from_spherical(0, 1.5, 10.0, 40.0, 32)
        view = ras.render_view(rabbit, cam, np.zeros((16, 16, 3)))
        m = view.coverage.covered()
        assert np.allclose(view.rgb[~m], 1.0)
        assert np.allclose(view.rgb[m], 0.0)


class TestTextureGradient:
    def test_zero_upstream(self, rabbit):
        cam = ras.camera_from_spherical(45, 1.5, 20.0, 40.0, 32)
        cov = ras.rasterize(rabbit, None, cam)
        g = ras.texture_gradient(cov, np.zeros((32, 32, 3)), 16, 16)
        assert np.array_equal(g, np.zeros((16, 16, 3)))

    def test_one_hot_partition_of_unity(self):
        cov = fullscreen_coverage(8)
        up = np.zeros((8, 8, 3))
        up[4, 4, 1] = 1.0
        g = ras.texture_gradient(cov, up, 16, 16)
        assert abs(g[:, :, 1].sum() - 1.0) <= 1e-9
        assert g[:, :, 0].sum() == 0
        assert np.count_nonzero(g[:, :, 1]) <= 4

    def test_adjoint_of_shade(self, rabbit, rng):
        cam = ras.camera_from_spherical(120, 1.5, 25.0, 40.0, 48)
        cov = ras.rasterize(rabbit, None, cam)
        for _ in range(10):
            t = rng.random((32, 32, 3))
            u = rng.standard_normal((48, 48, 3))
            lhs = float(np.sum(ras.shade(cov, t, background=(0, 0, 0)) * u))
            rhs = float(np.sum(t * ras.texture_gradient(cov, u, 32, 32)))
            assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs))

    def test_matches_finite_differences(self, rabbit, rng):
        cam = ras.camera_from_spherical(300, 1.5, 15.0, 40.0, 32)
        cov = ras.rasterize(rabbit, None, cam)
        tex = rng.random((16, 16, 3))
        up = rng.standard_normal((32, 32, 3))
        grad = ras.texture_gradient(cov, up, 16, 16)
        step = 1e-3
        # probe texels that actually receive gradient, plus a few that don't
        flat_idx = np.argsort(np.abs(grad).reshape(-1))[-20:]
        for fi in flat_idx:
            i, j, c = np.unravel_index(fi, grad.shape)
            tp, tm = tex.copy(), tex.copy()
            tp[i, j, c] += step
            tm[i, j, c] -= step
            fd = (np.sum(ras.shade(cov, tp, background=(0, 0, 0)) * up)
                  - np.sum(ras.shade(cov, tm, background=(0, 0, 0)) * up)) / (2 * step)
            assert abs(fd - grad[i, j, c]) <= 1e-3 * max(1.0, abs(grad[i, j, c]))

    def test_shape_mismatch(self, rabbit):
        cam = ras.camera_from_spherical(0, 1.5, 0, 40.0, 16)
        cov = ras.rasterize(rabbit, None, cam)
        with pytest.raises(ContractError):
            ras.texture_gradient(cov, np.zeros((8, 8, 3)), 16, 16)


class TestRenderDepth:
    def test_normalized_near_one_far_zero(self, rabbit):
        cam = ras.camera_from_spherical(0, 1.5, 10.0, 40.0, 48)
        cov = ras.rasterize(rabbit, None, cam)
        d = ras.render_depth(cov)
        m = cov.covered()
        assert d[m].min() == 0.0 and d[m].max() == 1.0
        assert (d[~m] == 0).all()
        # nearest pixel has the highest normalized value
        nearest = np.unravel_index(np.argmin(np.where(m, cov.depth, np.inf)), cov.depth.shape)
        assert d[nearest] == 1.0

    def test_empty_coverage(self):
        mesh = make_mesh([[0, 0, -50], [1, 0, -50], [0, 1, -50]], [[0, 1, 2]],
                         [[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
        cam = ras.camera_from_spherical(0, 1.5, 0, 40.0, 8)
        d = ras.render_depth(ras.rasterize(mesh, None, cam))
        assert np.array_equal(d, np.zeros((8, 8)))
