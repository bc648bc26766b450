import math

import numpy as np
import pytest

from fatlas.manifold import build_mesh, distance_fields, estimate_geometry
from fatlas.net import farthest_point_net
from fatlas.simplex import SimplicialComplex, check_even_incidence, validate_closed_pseudomanifold
from fatlas.surfaces import flat_torus, paraboloid, sphere
from fatlas.triangulate import (
    NerveError,
    PipelineConfig,
    PipelineError,
    RealizationError,
    exhaustion_demo,
    fat_triangulation_pipeline,
    geodesic_voronoi,
    nerve_complex,
    realize_coordinates,
    thickness_report,
)
from oracles import octahedron


@pytest.fixture(scope="module")
def sphere_mesh():
    s = sphere()
    return s, build_mesh(s, 0.04)


@pytest.fixture(scope="module")
def flat_mesh():
    s = flat_torus()
    return s, build_mesh(s, 0.0125)


@pytest.fixture(scope="module")
def sphere_run():
    return fat_triangulation_pipeline(sphere(), PipelineConfig(eps=0.6, seed=0))


@pytest.fixture(scope="module")
def flat_run():
    return fat_triangulation_pipeline(flat_torus(), PipelineConfig(eps=0.25, seed=0))


def net_at(surface, mesh, points, eps):
    base = farthest_point_net(surface, mesh, eps, 0)
    return base.with_centers([mesh.nearest_vertex(surface, p) for p in points], mesh)


class TestVoronoi:
    def test_single_center(self, sphere_mesh):
        s, m = sphere_mesh
        net = farthest_point_net(s, m, 4.0, 0)
        part = geodesic_voronoi(s, m, net)
        assert net.n0 == 1 and (part.labels == 0).all() and part.connected
        with pytest.raises(NerveError):
            nerve_complex(part, net)

    def test_antipodal_hemispheres(self, sphere_mesh):
        s, m = sphere_mesh
        net = net_at(s, m, [[0.0, 0.0], [math.pi, 0.0]], 1.0)
        part = geodesic_voronoi(s, m, net)
        assert part.connected
        edges = m.triangle_edges()
        cross = part.labels[edges[:, 0]] != part.labels[edges[:, 1]]
        boundary = np.unique(edges[cross])
        assert np.abs(m.points[boundary, 0] - math.pi / 2).max() <= 3 * m.h
        # two cells and no triple corner: the retry signal
        with pytest.raises(NerveError) as err:
            nerve_complex(part, net)
        assert err.value.retry

    def test_flat_torus_squares(self, flat_mesh):
        s, m = flat_mesh
        pts = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]
        net = net_at(s, m, pts, 0.3)
        part = geodesic_voronoi(s, m, net)
        expect = (m.points[:, 0] >= 0.5).astype(int) + 2 * (m.points[:, 1] >= 0.5)
        centers = np.asarray(pts)
        diff = np.abs(m.points[:, None, :] - centers[None])
        diff = np.minimum(diff, 1 - diff)
        clear = np.abs(diff - 0.25).min(axis=(1, 2)) > 3 * m.h
        assert np.array_equal(part.labels[clear], expect[clear])
        counts = np.bincount(part.labels, minlength=4)
        assert counts.min() > 0.2 * len(m)

    def test_ties_go_to_lowest_index(self, flat_mesh):
        s, m = flat_mesh
        net = net_at(s, m, [[0.25, 0.5], [0.75, 0.5]], 0.3)
        part = geodesic_voronoi(s, m, net)
        fields = distance_fields(m, list(net.center_ids))
        tie = fields[0] == fields[1]
        assert tie.any() and (part.labels[tie] == 0).all()


class TestNerve:
    def test_sphere_chi(self, sphere_run):
        assert sphere_run.chi == 2
        rep = validate_closed_pseudomanifold(sphere_run.nerve)
        assert rep.ok and rep.euler_characteristic == 2

    def test_flat_torus_chi(self, flat_run):
        assert flat_run.chi == 0
        assert validate_closed_pseudomanifold(flat_run.nerve).ok

    def test_every_edge_in_two_triangles(self, sphere_run):
        for owners in sphere_run.nerve.facet_incidence().values():
            assert len(owners) == 2

    def test_wrong_chi_signals_retry(self, sphere_mesh):
        s, m = sphere_mesh
        net = farthest_point_net(s, m, 0.9, 1)
        part = geodesic_voronoi(s, m, net)
        assert nerve_complex(part, net, expected_chi=2).meta["chi"] == 2
        with pytest.raises(NerveError):
            nerve_complex(part, net, expected_chi=0)


class TestRealize:
    def test_sphere_chordal(self, sphere_run):
        r = sphere_run.realized
        assert np.allclose(np.linalg.norm(r.vertices, axis=1), 1.0)
        uv = np.asarray(r.meta["chart_coords"])
        assert np.allclose(r.vertices, sphere().embed(uv[:, 0], uv[:, 1]))

    def test_flat_torus_unwrap(self, flat_run):
        r = flat_run.realized
        cells = r.cells()
        uv = flat_run.nerve.vertices
        for f, s in enumerate(r.simplices):
            for a in range(3):
                for b in range(a + 1, 3):
                    d = np.abs(uv[s[a]] - uv[s[b]])
                    geo = np.linalg.norm(np.minimum(d, 1 - d))
                    assert np.linalg.norm(cells[f, a] - cells[f, b]) == pytest.approx(geo, abs=1e-12)
            # seam triangles are unwrapped into one piece
            assert np.allclose(np.mod(cells[f], 1.0), uv[list(s)])

    def test_repeated_vertex(self):
        with pytest.raises((RealizationError, ValueError)):
            realize_coordinates(SimplicialComplex(np.zeros((3, 2)), ((0, 0, 1),)), sphere())

    def test_degenerate(self):
        cx = SimplicialComplex(np.array([[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]]), ((0, 1, 2),))
        with pytest.raises(RealizationError):
            realize_coordinates(cx, flat_torus())

    def test_edge_lengths_track_geodesics(self, sphere_run):
        # eps = 0.6 is below convrad/2 for the unit sphere
        assert sphere_run.eps <= sphere_run.estimates.convrad_low / 2
        lo, hi = sphere_run.edge_ratio
        assert 0.9 <= lo and hi <= 1.1


class TestThicknessReport:
    def test_octahedron(self):
        rep = thickness_report(SimplicialComplex.from_faces(*octahedron()))
        assert rep.phi_min == pytest.approx(math.sqrt(3) / 4)

    def test_empty(self):
        with pytest.raises(ValueError):
            thickness_report(SimplicialComplex(np.zeros((1, 3)), ()))


class TestPipeline:
    def test_sphere_outputs(self, sphere_run):
        r = sphere_run
        assert r.after.phi_min >= r.before.phi_min > 0
        assert check_even_incidence(r.subdivided).ok
        for a, b in r.subdivided.facet_incidence().values():
            assert r.colors[a] != r.colors[b]
        assert r.subdivided.colors == r.colors
        assert len(r.subdivided) == 6 * len(r.nerve)

    def test_flat_torus_outputs(self, flat_run):
        assert flat_run.subdivided.cell_coords is not None
        assert flat_run.after.phi_min >= flat_run.before.phi_min > 0
        assert check_even_incidence(flat_run.subdivided).ok

    def test_deterministic(self, flat_run):
        again = fat_triangulation_pipeline(flat_torus(), PipelineConfig(eps=0.25, seed=0))
        assert again.thickened.simplices == flat_run.thickened.simplices
        assert np.array_equal(again.thickened.cells(), flat_run.thickened.cells())
        assert again.summary() == flat_run.summary()

    def test_auto_eps_uses_convexity_radius(self):
        r = fat_triangulation_pipeline(sphere(), PipelineConfig(seed=2))
        assert r.eps == pytest.approx(0.9 * math.pi / 2)
        assert r.chi == 2

    def test_clamped_eps(self):
        r = fat_triangulation_pipeline(flat_torus(), PipelineConfig(eps=0.5, seed=0))
        assert r.eps == pytest.approx(0.9 * 0.25)

    def test_eps_above_diameter_fails_at_nerve(self):
        with pytest.raises(PipelineError) as err:
            fat_triangulation_pipeline(sphere(), PipelineConfig(eps=100.0, clamp_eps=False,
                                                                max_retries=2))
        e = err.value
        assert e.stage == "nerve"
        assert len(e.trace) == 6 and all(t["n0"] == 1 for t in e.trace)
        assert e.trace[-1]["eps"] == pytest.approx(100 * (2 / 3) ** 2)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            PipelineConfig(safety=0)
        with pytest.raises(ValueError):
            PipelineConfig(eps=0.2, h=0.1)


class TestExhaustion:
    def test_paraboloid_nested(self):
        p = paraboloid()
        rep = exhaustion_demo(p, [0.0, 0.0], [1, 2, 3], eps=1.0, h=0.025)
        sizes = [len(x.vertex_ids) for x in rep.pieces]
        assert rep.nested and sizes[0] < sizes[1] < sizes[2]
        assert all(x.triangles > 0 and x.boundary_edges > 0 for x in rep.pieces)

    def test_single_radius(self):
        rep = exhaustion_demo(paraboloid(), [0.0, 0.0], [1.5], eps=1.0, h=0.025)
        assert len(rep.pieces) == 1 and rep.nested

    def test_cover(self):
        rep = exhaustion_demo(paraboloid(), [0.0, 0.0], [1, 100], eps=1.0, h=0.025)
        assert rep.covers_mesh and not exhaustion_demo(paraboloid(), [0, 0], [1], eps=1.0,
                                                        h=0.05).covers_mesh


def test_golden_sphere_runs(sphere_run):
    """Recorded summaries for two seeds; combinatorics exact, thickness to 1e-9."""
    import json
    from pathlib import Path
    golden = json.loads((Path(__file__).parent / "golden" / "sphere_eps0.6.json").read_text())
    runs = {"0": sphere_run,
            "1": fat_triangulation_pipeline(sphere(), PipelineConfig(eps=0.6, seed=1))}
    for seed, r in runs.items():
        got, want = r.summary(), golden[seed]
        for key, value in want.items():
            if key.startswith("phi"):
                assert got[key] == pytest.approx(value, abs=1e-9), key
            else:
                assert got[key] == value, key
