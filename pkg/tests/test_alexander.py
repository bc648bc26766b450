import math

import numpy as np
import pytest

from fatlas.alexander import (
    ContractError,
    ModelTarget,
    RejectedSample,
    affine_to_model,
    assemble_qm_map,
    branching_set,
    dilatation_at,
    dilatation_of_matrix,
    dilatation_report,
    face_consistency,
    fd_jacobian,
    label_parity_coloring,
    local_injectivity_check,
    radial_fold,
    radial_fold_jacobian,
    regular_model_vertices,
    simplex_map,
    stereographic,
)
from fatlas.simplex import (
    SimplicialComplex,
    barycentric_subdivision,
    chessboard_coloring,
    coherent_orientation,
    thickness,
    vertex_labeling,
)
from oracles import octahedron, regular_simplex, tetrahedron_boundary

EQUILATERAL = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


def k2_oracle(J):
    """Outer dilatation of a 2x2 matrix from trace and determinant of J^T J."""
    s = float(np.sum(J * J))
    d = float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
    return (s + math.sqrt(max(s * s - 4 * d * d, 0.0))) / (2 * d)


def colored(verts, faces):
    cx = SimplicialComplex.from_faces(verts, faces)
    labels = vertex_labeling(cx)
    orient = coherent_orientation(cx)
    return cx.with_(vertex_labels=labels, orientation=orient,
                    colors=label_parity_coloring(cx, labels, orient))


@pytest.fixture(scope="module")
def octa_map():
    return assemble_qm_map(colored(*octahedron()))


@pytest.fixture(scope="module")
def subdivided_map():
    sd = barycentric_subdivision(SimplicialComplex.from_faces(*tetrahedron_boundary()))
    return assemble_qm_map(sd.with_(colors=chessboard_coloring(sd)))


class TestModel:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_unit_edges_positive(self, n):
        q = regular_model_vertices(n)
        d = np.linalg.norm(q[:, None] - q[None], axis=-1)
        assert np.allclose(d[~np.eye(n + 1, dtype=bool)], 1.0)
        assert np.allclose(q.mean(0), 0) and np.linalg.det(q[1:] - q[0]) > 0

    def test_gauge_is_one_on_boundary(self):
        t = ModelTarget.regular(3)
        for i in range(4):
            b = np.delete(t.vertices, i, axis=0).mean(0)
            assert t.gauge(b).max() == pytest.approx(1.0)

    def test_degenerate_model(self):
        with pytest.raises(ContractError):
            ModelTarget.from_vertices([[0, 0], [1, 0], [2, 0]])


class TestAffine:
    def test_right_isoceles_to_equilateral(self):
        A = affine_to_model([[0, 0], [1, 0], [0, 1]], EQUILATERAL)
        assert A.dilatation == pytest.approx(math.sqrt(3), abs=1e-6)
        assert np.allclose(A(np.array([[0, 0], [1, 0], [0, 1]])), EQUILATERAL)

    def test_random_points_see_the_same_dilatation(self):
        f = simplex_map(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), 0,
                        target=ModelTarget.from_vertices(EQUILATERAL))
        rng = np.random.default_rng(0)
        h = 1e-6
        for x in rng.dirichlet(np.ones(3), 100) @ np.array([[0, 0], [1, 0], [0, 1.0]]):
            J = np.column_stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)])
            assert k2_oracle(J) == pytest.approx(math.sqrt(3), abs=1e-6)

    def test_identity(self):
        q = regular_model_vertices(2)
        assert affine_to_model(q).dilatation == pytest.approx(1.0, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(ContractError):
            affine_to_model([[0, 0], [1, 0], [2, 0]])

    def test_closed_form_vs_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            J = rng.normal(size=(2, 2))
            if np.linalg.det(J) <= 0:
                J[:, 0] *= -1
            assert dilatation_of_matrix(J) == pytest.approx(k2_oracle(J), rel=1e-9)
        assert dilatation_of_matrix(np.diag([1.0, -1.0])) == math.inf

    def test_closed_form_vs_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            tau = rng.normal(size=(3, 2))
            if np.linalg.det(tau[1:] - tau[0]) < 0:
                tau = tau[[0, 2, 1]]
            A = affine_to_model(tau)
            x = rng.dirichlet(np.ones(3)) @ tau
            h = 1e-6
            J = np.column_stack([(A(x + h * e) - A(x - h * e)) / (2 * h) for e in np.eye(2)])
            assert dilatation_of_matrix(J) == pytest.approx(A.dilatation, abs=1e-5)

    def test_monotone_in_thickness(self):
        phis = np.geomspace(math.sqrt(3) / 4, 1e-3, 10)
        ks = []
        for phi in phis:
            tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 2 * phi]])
            assert thickness(tri) == pytest.approx(phi, rel=1e-9)
            ks.append(affine_to_model(tri).dilatation)
        assert ks[0] == pytest.approx(1.0)
        assert all(a <= b for a, b in zip(ks, ks[1:]))


class TestFold:
    def setup_method(self):
        self.t = ModelTarget.regular(2)
        self.c = self.t.center

    def test_boundary_fixed(self):
        rng = np.random.default_rng(0)
        q = self.t.vertices
        for w in rng.dirichlet(np.ones(2), 20):
            b = w @ q[:2]
            assert np.allclose(radial_fold(self.t, b), b, atol=1e-14)

    def test_midpoint_and_center(self):
        b = self.t.vertices[:2].mean(0)
        mid = (b + self.c) / 2
        assert np.allclose(radial_fold(self.t, mid), self.c + 2 * (b - self.c))
        assert not np.isfinite(radial_fold(self.t, self.c)).any()

    def test_analytic_jacobian(self):
        rng = np.random.default_rng(3)
        h = 1e-7
        for y in rng.dirichlet(np.ones(3), 30) @ self.t.vertices:
            fd = np.column_stack([(radial_fold(self.t, y + h * e) - radial_fold(self.t, y - h * e))
                                  / (2 * h) for e in np.eye(2)])
            assert np.allclose(radial_fold_jacobian(self.t, y), fd, rtol=1e-5, atol=1e-5)

    def test_orientation_reversing(self):
        y = self.c + 0.1 * np.array([0.3, 0.1])
        assert np.linalg.det(radial_fold_jacobian(self.t, y)) < 0

    def test_symmetric_points_equal_dilatation(self):
        # equilateral domain folded: the D3 orbit of a point and its half-radius copy
        f = simplex_map(EQUILATERAL, 1, target=ModelTarget.from_vertices(EQUILATERAL))
        c = EQUILATERAL.mean(0)
        r = 0.5 / math.sqrt(3)  # inradius
        theta = 0.2
        angles = [theta + k * 2 * math.pi / 3 for k in range(3)]
        angles += [math.pi / 2 - (a - math.pi / 2) for a in angles]  # reflections
        vals = []
        h = 1e-7
        for scale in (0.8, 0.4):
            for a in angles:
                x = c + scale * r * np.array([math.cos(a), math.sin(a)])
                J = np.column_stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)])
                # the fold reverses orientation; compose with a reflection
                vals.append(k2_oracle(J @ np.diag([1.0, -1.0])))
        assert max(vals) - min(vals) < 1e-4


class TestAssembled:
    def test_uncolored(self):
        with pytest.raises(ContractError):
            assemble_qm_map(SimplicialComplex.from_faces(*octahedron()))

    def test_inconsistent_colors(self):
        cx = colored(*octahedron())
        bad = list(cx.colors)
        bad[0] = 1 - bad[0]
        with pytest.raises(ContractError):
            assemble_qm_map(cx.with_(colors=tuple(bad)))

    def test_vertices_exact(self, octa_map):
        q = octa_map.target.vertices
        for f, s in enumerate(octa_map.complex.simplices):
            for i, v in enumerate(s):
                bary = np.eye(3)[i]
                assert np.array_equal(octa_map(f, bary), q[octa_map.labels[v]])

    def test_folded_barycenter_goes_to_infinity(self, octa_map):
        f = octa_map.folds.index(1)
        # the model incenter of a regular simplex is its barycenter
        assert not np.isfinite(octa_map(f, np.full(3, 1 / 3))).any()
        assert np.array_equal(stereographic(octa_map(f, np.full(3, 1 / 3))), [0, 0, 1])

    def test_face_consistency(self, octa_map, subdivided_map):
        assert face_consistency(octa_map, 1000) < 1e-9
        assert face_consistency(subdivided_map, 1000) < 1e-9

    def test_congruent_simplices(self, octa_map):
        rep = dilatation_report(octa_map, 3000, seed=0)
        assert rep.quasiregular and rep.samples == 3000 * 8
        folded = rep.per_simplex_max[np.array(octa_map.folds) == 1]
        plain = rep.per_simplex_max[np.array(octa_map.folds) == 0]
        assert np.allclose(plain, 1.0)
        assert folded.max() <= 1.02 * folded.min()

    def test_report_rechecks_inequality(self, subdivided_map):
        rep = dilatation_report(subdivided_map, 50, seed=1)
        assert rep.quasiregular and not rep.violations and rep.min_jacobian > 0
        assert rep.K == pytest.approx(rep.per_simplex_max.max())

    def test_empty_budget(self, octa_map):
        with pytest.raises(ValueError):
            dilatation_report(octa_map, 0)

    def test_local_fd_matches_closed_form(self, subdivided_map):
        fmap = subdivided_map
        rng = np.random.default_rng(4)
        for f in np.flatnonzero(np.array(fmap.folds) == 0)[:20]:
            x = fmap.local(f, rng.dirichlet(np.ones(3)))
            J = fd_jacobian(fmap, f, x)
            assert np.allclose(J, fmap.affine[f].linear, atol=1e-5)
            assert dilatation_of_matrix(J) == pytest.approx(fmap.affine[f].dilatation, abs=1e-5)

    def test_rejects_near_center(self, octa_map):
        f = octa_map.folds.index(1)
        with pytest.raises(RejectedSample):
            dilatation_at(octa_map, f, np.array([1 / 3, 1 / 3 + 1e-5, 1 / 3 - 1e-5]))

    def test_local_injectivity(self, octa_map, subdivided_map):
        assert local_injectivity_check(octa_map, 300) == []
        assert local_injectivity_check(subdivided_map, 300) == []

    def test_branching_set(self):
        cx = SimplicialComplex.from_faces(*octahedron())
        assert sorted(branching_set(cx)) == [(v,) for v in range(6)]
        tet = SimplicialComplex.from_faces(regular_simplex(3), [[0, 1, 2, 3]])
        assert len(branching_set(tet)) == 6


def test_stereographic_on_unit_sphere():
    rng = np.random.default_rng(5)
    for y in rng.normal(size=(20, 2)) * 3:
        p = stereographic(y)
        assert np.linalg.norm(p) == pytest.approx(1.0)
        # inverse projection from the north pole
        assert np.allclose(p[:2] / (1 - p[2]), y)
