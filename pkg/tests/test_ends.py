import json

import numpy as np
import pytest

from saddlescope.ends import (
    CombSurface,
    InvalidComplex,
    MarkedComplex,
    NotStabilized,
    check_bound,
    count_ends,
    count_ends_refined,
    fixture_from_segments,
    frontier_components,
    genus_surface,
    level_counts,
    load_fixture,
    path_cells,
    random_marked_complex,
    residual_components,
    sharpness_witness,
    sphere_grid,
    torus_grid,
)


def square_loop(n, lo, hi):
    # Vertex ids of the square [lo, hi]^2 on the top sheet of sphere_grid(n).
    vid = lambda i, j: i * (n + 1) + j  # noqa: E731
    side = list(range(lo, hi))
    path = [vid(i, lo) for i in side] + [vid(hi, j) for j in side]
    path += [vid(i, hi) for i in range(hi, lo, -1)] + [vid(lo, j) for j in range(hi, lo - 1, -1)]
    return path


def top_face_cell(surf, n, i, j):
    # Top-sheet faces are stored first, row-major, interleaved with bottom faces.
    return surf.face_cell(2 * (i * n + j))


@pytest.fixture(scope="module")
def cross():
    return load_fixture("cross")


@pytest.fixture(scope="module")
def circle_segments():
    return load_fixture("circle_segments")


class TestSurfaces:
    @pytest.mark.parametrize("g", [0, 1, 2, 3])
    def test_euler_characteristic(self, g):
        surf, _ = genus_surface(g, 6)
        assert surf.euler_characteristic == 2 - 2 * g
        assert surf.genus == g
        surf.validate()

    def test_edges_have_two_faces(self):
        surf = torus_grid(5)
        counts = np.zeros(surf.n_edges, dtype=int)
        for fe in surf.face_edges:
            counts[list(fe)] += 1
        assert np.all(counts == 2)

    def test_subdivision_keeps_euler(self):
        surf, _ = genus_surface(2, 4)
        new, parent = surf.subdivide()
        assert new.euler_characteristic == surf.euler_characteristic
        assert len(parent) == new.n_cells

    def test_open_surface_rejected(self):
        with pytest.raises(InvalidComplex):
            CombSurface.from_faces(4, [[0, 1, 2, 3]]).validate()


class TestFixtures:
    def test_cross(self, cross):
        assert count_ends(cross) == 1
        assert frontier_components(cross) == 1

    def test_circle_segments(self, circle_segments):
        assert count_ends(circle_segments) == 2
        assert frontier_components(circle_segments) == 1
        rep = check_bound(circle_segments)
        assert rep == {"ends": 2, "m": 1, "g": 1, "bound": 2, "holds": True}

    def test_fixture_round_trip(self, tmp_path):
        fx = fixture_from_segments(16, [((4, 8), (12, 8)), ((8, 4), (8, 12))], (1, 1), expected_ends=1)
        path = tmp_path / "fx.json"
        path.write_text(json.dumps(fx))
        mc = load_fixture(json.loads(path.read_text()))
        assert count_ends(mc) == fx["expected_ends"]

    def test_wrong_genus(self):
        fx = fixture_from_segments(16, [((4, 8), (12, 8))], (1, 1))
        fx["genus"] = 2
        with pytest.raises(InvalidComplex):
            load_fixture(fx)


class TestSphere:
    def test_equator(self):
        n = 8
        surf = sphere_grid(n)
        K = path_cells(surf, square_loop(n, 0, n))
        mc = MarkedComplex.from_seed(surf, K, top_face_cell(surf, n, 3, 3))
        assert count_ends(mc) == 1
        assert check_bound(mc)["holds"]

    def test_annulus_between_circles(self):
        n = 10
        surf = sphere_grid(n)
        K = path_cells(surf, square_loop(n, 0, n)) | path_cells(surf, square_loop(n, 3, 7))
        mc = MarkedComplex.from_seed(surf, K, top_face_cell(surf, n, 1, 1))
        assert frontier_components(mc) == 2
        assert count_ends(mc) == 2
        assert mc.m == 2 and check_bound(mc)["holds"]

    def test_random_disjoint_circles(self, rng):
        n = 16
        surf = sphere_grid(n)
        for _ in range(10):
            # Disjoint squares in separate blocks of the top sheet.
            K = np.zeros(surf.n_cells, dtype=bool)
            m = 0
            for bi in (0, 8):
                for bj in (0, 8):
                    if rng.random() < 0.6:
                        lo = int(rng.integers(1, 3))
                        hi = int(rng.integers(lo + 2, 7))
                        loop = [v + bi * (n + 1) + bj for v in square_loop(n, lo, hi)]
                        K |= path_cells(surf, loop)
                        m += 1
            if m == 0:
                continue
            count, comp = residual_components(surf, K)
            for c in range(count):
                mc = MarkedComplex(surf, K, comp == c)
                rep = check_bound(mc)
                assert rep["ends"] <= m


class TestBound:
    @pytest.mark.parametrize("g", [0, 1, 2])
    def test_sharpness(self, g):
        mc = sharpness_witness(g)
        rep = check_bound(mc)
        assert rep["m"] == 1 and rep["g"] == g
        assert rep["ends"] == g + 1 == rep["bound"]

    @pytest.mark.slow
    def test_random_complexes(self, rng):
        violations = []
        for trial in range(200):
            g = int(rng.integers(0, 3))
            mc = random_marked_complex(rng, g)
            rep = check_bound(mc)
            if not rep["holds"]:
                violations.append((trial, rep))
        assert violations == []

    @pytest.mark.parametrize("name", ["cross", "circle_segments"])
    def test_subdivision_invariance(self, name, request):
        mc = request.getfixturevalue(name)
        assert count_ends(mc, subdivisions=1) == count_ends(mc, subdivisions=2)

    def test_subdivision_invariance_random(self, rng):
        for _ in range(5):
            mc = random_marked_complex(rng, int(rng.integers(0, 3)), n=6)
            assert count_ends_refined(mc) == count_ends_refined(mc.subdivide())


class TestContracts:
    def test_levels_minimum(self, cross):
        with pytest.raises(ValueError):
            count_ends(cross, levels=2)

    def test_unstabilized(self, monkeypatch, cross):
        import saddlescope.ends as ends

        monkeypatch.setattr(ends, "level_counts", lambda mc, levels: [1, 2, 2])
        with pytest.raises(NotStabilized):
            count_ends(cross)

    def test_level_counts_shape(self):
        mc = sharpness_witness(1, 6).subdivide()
        counts = level_counts(mc, 3)
        assert len(counts) == 3 and counts[0] == counts[1] == 2

    def test_invalid_marked_complexes(self):
        surf = torus_grid(6)
        K = path_cells(surf, [0, 1, 2])
        with pytest.raises(InvalidComplex):
            MarkedComplex(surf, K & (np.arange(surf.n_cells) >= surf.n_vertices), ~K)
        with pytest.raises(InvalidComplex):
            MarkedComplex(surf, K, np.ones(surf.n_cells, dtype=bool))
        with pytest.raises(InvalidComplex):
            MarkedComplex.from_seed(surf, K, 0)
        U = ~K
        U[surf.face_cell(0)] = False
        with pytest.raises(InvalidComplex):
            MarkedComplex(surf, K, U)
