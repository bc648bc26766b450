"""Piecewise Alexander map of a colored triangulation onto the extended plane.

Every top simplex is sent affinely onto a fixed regular model simplex, vertex
to the model vertex named by its label. Simplices of the second color are
then folded through the model's incenter onto the closure of its complement,
so neighbouring simplices land on opposite sides of their common model facet.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .simplex import (
    SimplicialComplex,
    check_even_incidence,
    coherent_orientation,
    permutation_parity,
    vertex_labeling,
)

INF = np.inf


class ContractError(ValueError):
    """The complex does not satisfy the preconditions of the construction."""


class RejectedSample(ValueError):
    """Sample too close to the fold center, the model boundary or a fold kink."""


# ---------------------------------------------------------------------------
# model simplex and radial fold
# ---------------------------------------------------------------------------

def regular_model_vertices(n: int) -> np.ndarray:
    """Regular n-simplex with unit edges, centroid at the origin, positively oriented."""
    # standard simplex in R^{n+1}, projected onto an orthonormal basis of its hyperplane
    e = np.eye(n + 1) / math.sqrt(2)
    basis, _ = np.linalg.qr(np.vstack([np.ones(n + 1), np.eye(n + 1)[:n]]).T)
    q = (e - e.mean(axis=0)) @ basis[:, 1:n + 1]
    if np.linalg.det(q[1:] - q[0]) < 0:
        q[:, -1] *= -1
    return q


@dataclass(frozen=True, eq=False)
class ModelTarget:
    vertices: np.ndarray  # (n+1, n)
    center: np.ndarray
    normals: np.ndarray  # facet i (opposite vertex i) has <a_i, y - c> <= 1 inside
    diameter: float

    @classmethod
    def regular(cls, n: int = 2) -> "ModelTarget":
        return cls.from_vertices(regular_model_vertices(n))

    @classmethod
    def from_vertices(cls, q) -> "ModelTarget":
        q = np.asarray(q, float)
        n = q.shape[1]
        if q.shape != (n + 1, n) or abs(np.linalg.det(q[1:] - q[0])) < 1e-14:
            raise ContractError("model simplex must be a nondegenerate n-simplex in R^n")
        # incenter: barycentric weights proportional to facet volumes
        vols = np.array([_facet_volume(np.delete(q, i, axis=0)) for i in range(n + 1)])
        c = vols @ q / vols.sum()
        a = np.zeros((n + 1, n))
        for i in range(n + 1):
            facet = np.delete(q, i, axis=0)
            normal = _facet_normal(facet, q[i])
            d = float(normal @ (facet[0] - c))
            a[i] = normal / d
        diam = max(np.linalg.norm(x - y) for x, y in itertools.combinations(q, 2))
        return cls(q, c, a, float(diam))

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    def gauge(self, y) -> np.ndarray:
        """Minkowski gauge of the model about its center: 1 on the boundary."""
        return (np.asarray(y, float) - self.center) @ self.normals.T


def _facet_volume(pts):
    e = pts[1:] - pts[0]
    return math.sqrt(max(np.linalg.det(e @ e.T), 0.0)) if len(e) else 1.0


def _facet_normal(facet, opposite):
    n = facet.shape[1]
    e = (facet[1:] - facet[0]).T
    if e.shape[1] == 0:
        normal = np.ones(n)
    else:
        u, _, _ = np.linalg.svd(e, full_matrices=True)
        normal = u[:, -1]
    if normal @ (opposite - facet[0]) > 0:
        normal = -normal
    return normal / np.linalg.norm(normal)


def radial_fold(target: ModelTarget, y) -> np.ndarray:
    """Inversion through the model center along rays, fixing the boundary pointwise.

    ``c + t (b - c)`` goes to ``c + (b - c) / t`` for boundary points ``b``; the
    center goes to infinity (an all-inf array).
    """
    y = np.asarray(y, float)
    u = y - target.center
    t = float(np.max(u @ target.normals.T))
    if t <= 1e-12:  # the center, up to rounding
        return np.full(target.n, INF)
    return target.center + u / (t * t)


def radial_fold_jacobian(target: ModelTarget, y) -> np.ndarray:
    """Analytic derivative of the fold inside one gauge sector."""
    u = np.asarray(y, float) - target.center
    g = u @ target.normals.T
    a = target.normals[int(np.argmax(g))]
    t = float(g.max())
    return (np.eye(target.n) - 2 * np.outer(u, a) / t) / (t * t)


def _sample_clearance(target: ModelTarget, y) -> dict:
    """Distances (in model units) to the center, the boundary and the nearest fold kink."""
    u = np.asarray(y, float) - target.center
    g = u @ target.normals.T
    lengths = np.linalg.norm(target.normals, axis=1)
    # distance to facet i is (1 - g_i) / |a_i|
    boundary = float(np.min((1 - g) / lengths))
    order = np.argsort(-g)
    i, j = order[0], order[1]
    kink = float((g[i] - g[j]) / np.linalg.norm(target.normals[i] - target.normals[j]))
    return {"center": float(np.linalg.norm(u)), "boundary": boundary, "kink": kink}


# ---------------------------------------------------------------------------
# affine part
# ---------------------------------------------------------------------------

def dilatation_of_matrix(J: np.ndarray) -> float:
    """Outer dilatation |J|^n / det J (inf when det J <= 0)."""
    J = np.atleast_2d(J)
    det = float(np.linalg.det(J))
    if det <= 0:
        return INF
    smax = float(np.linalg.svd(J, compute_uv=False)[0])
    return smax ** J.shape[0] / det


@dataclass(frozen=True)
class AffineMap:
    linear: np.ndarray
    offset: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, float) @ self.linear.T + self.offset

    @property
    def dilatation(self) -> float:
        return dilatation_of_matrix(self.linear)


def affine_to_model(tau, target=None) -> AffineMap:
    """Affine map of R^n taking the vertices of ``tau`` (in order) to ``target``'s vertices.

    ``target`` is a ModelTarget, an explicit vertex array, or None for the
    regular model of matching dimension.
    """
    tau = np.asarray(tau, float)
    n = tau.shape[1]
    if tau.shape[0] != n + 1:
        raise ContractError("affine_to_model needs n+1 points in R^n")
    if target is None:
        q = ModelTarget.regular(n).vertices
    elif isinstance(target, ModelTarget):
        q = target.vertices
    else:
        q = np.asarray(target, float)
    E = (tau[1:] - tau[0]).T
    if abs(np.linalg.det(E)) < 1e-14 * max(1.0, np.abs(E).max()) ** n:
        raise ContractError("degenerate simplex has no affine map to the model")
    L = (q[1:] - q[0]).T @ np.linalg.inv(E)
    return AffineMap(L, q[0] - L @ tau[0])


# ---------------------------------------------------------------------------
# assembled map
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AlexanderMap:
    complex: SimplicialComplex
    target: ModelTarget
    labels: tuple  # model vertex index per complex vertex
    folds: tuple  # 1 where the simplex is folded (its chessboard color)
    frames: np.ndarray  # (F, N, n) orthonormal basis of each simplex span
    origins: np.ndarray  # (F, N)
    affine: tuple  # AffineMap per simplex, local frame -> model
    diameters: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.complex)

    def local(self, f: int, bary) -> np.ndarray:
        """Frame coordinates of the point with barycentric coordinates ``bary``."""
        pts = self.complex.cells()[f]
        x = np.asarray(bary, float) @ pts
        return (x - self.origins[f]) @ self.frames[f]

    def map_local(self, f: int, x) -> np.ndarray:
        y = self.affine[f](x)
        return radial_fold(self.target, y) if self.folds[f] else y

    def __call__(self, f: int, bary) -> np.ndarray:
        """Image of a point given by simplex id and barycentric coordinates."""
        bary = np.asarray(bary, float)
        s = self.complex.simplices[f]
        q = self.target.vertices[[self.labels[v] for v in s]]
        nz = np.nonzero(bary)[0]
        if len(nz) == 1 and bary[nz[0]] == 1.0:
            return q[nz[0]].copy()  # exact vertex condition
        y = bary @ q
        return radial_fold(self.target, y) if self.folds[f] else y

    def model_point(self, f: int, bary) -> np.ndarray:
        s = self.complex.simplices[f]
        return np.asarray(bary, float) @ self.target.vertices[[self.labels[v] for v in s]]


def label_parity_coloring(cx: SimplicialComplex, labels, orientation) -> tuple:
    """Color 0 where the label order of a simplex agrees with its orientation.

    With a proper vertex labeling this is a chessboard coloring: neighbours
    share all labels but induce opposite orders on their common facet.
    """
    out = []
    for f, s in enumerate(cx.simplices):
        order = sorted(range(len(s)), key=lambda i: labels[s[i]])
        out.append(0 if permutation_parity(order) * orientation[f] > 0 else 1)
    return tuple(out)


def _frames(cx: SimplicialComplex, orient):
    cells = cx.cells()
    F, k, N = cells.shape
    n = k - 1
    frames = np.zeros((F, N, n))
    for f in range(F):
        E = (cells[f, 1:] - cells[f, 0]).T
        Q, R = np.linalg.qr(E)
        if np.sign(np.prod(np.diag(R))) != orient[f]:
            Q[:, -1] *= -1
        frames[f] = Q
    return frames, cells[:, 0].copy()


def assemble_qm_map(cx: SimplicialComplex, target: ModelTarget | None = None) -> AlexanderMap:
    """Alexander map of a chessboard-colored complex.

    Vertices go to the model vertex named by their label (a proper vertex
    coloring, taken from the subdivision when present); color-1 simplices are
    folded. Raises ContractError for uncolored complexes.
    """
    if cx.colors is None:
        raise ContractError("complex has no chessboard coloring")
    if not check_even_incidence(cx).ok:
        raise ContractError("complex fails even incidence")
    for a, b in cx.facet_incidence().values() if cx.dim > 0 else ():
        if cx.colors[a] == cx.colors[b]:
            raise ContractError(f"simplices {a} and {b} share a facet and a color")
    n = cx.dim
    target = target or ModelTarget.regular(n)
    if target.n != n:
        raise ContractError("model dimension differs from the complex")
    labels = cx.vertex_labels if cx.vertex_labels is not None else vertex_labeling(cx)
    orient = cx.orientation or coherent_orientation(cx)
    if orient is None:
        raise ContractError("complex is not orientable")
    parity = label_parity_coloring(cx, labels, orient)
    if parity != cx.colors:
        if all(a != b for a, b in zip(parity, cx.colors)):
            # the opposite orientation makes every affine part sense-preserving
            orient = tuple(-o for o in orient)
        else:
            raise ContractError("coloring does not follow the vertex-label orientation parity")
    frames, origins = _frames(cx, orient)
    cells = cx.cells()
    maps, diam = [], np.zeros(len(cx))
    for f, s in enumerate(cx.simplices):
        loc = (cells[f] - origins[f]) @ frames[f]
        q = target.vertices[[labels[v] for v in s]]
        maps.append(affine_to_model(loc, q))
        diam[f] = max(np.linalg.norm(a - b) for a, b in itertools.combinations(loc, 2))
    return AlexanderMap(cx, target, tuple(labels), tuple(int(c) for c in cx.colors), frames,
                        origins, tuple(maps), diam)


def simplex_map(tau, color: int, labels=None, target: ModelTarget | None = None):
    """Map of a single realized n-simplex in R^n: affine, then folded when ``color`` is 1."""
    tau = np.asarray(tau, float)
    n = tau.shape[1]
    target = target or ModelTarget.regular(n)
    order = list(range(n + 1)) if labels is None else list(labels)
    A = affine_to_model(tau, target.vertices[order])
    if color:
        return lambda x: radial_fold(target, A(x))
    return A


def stereographic(y) -> np.ndarray:
    """Extended plane to the unit sphere; infinity goes to the north pole (conformal)."""
    y = np.asarray(y, float)
    if not np.all(np.isfinite(y)):
        return np.array([0.0, 0.0, 1.0])
    r2 = float(y @ y)
    return np.append(2 * y, r2 - 1) / (r2 + 1)


# ---------------------------------------------------------------------------
# dilatation
# ---------------------------------------------------------------------------

def fd_jacobian(fmap: AlexanderMap, f: int, x_local, step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of the simplex map in its local frame."""
    x = np.asarray(x_local, float)
    h = step if step is not None else 1e-6 * fmap.diameters[f]
    cols = []
    for e in np.eye(len(x)):
        cols.append((fmap.map_local(f, x + h * e) - fmap.map_local(f, x - h * e)) / (2 * h))
    return np.column_stack(cols)


def check_sample(fmap: AlexanderMap, f: int, bary, tol: float = 1e-3) -> None:
    """Raise RejectedSample when the model image is too close to a fold singularity."""
    if not fmap.folds[f]:
        return
    y = fmap.model_point(f, bary)
    clear = _sample_clearance(fmap.target, y)
    lim = tol * fmap.target.diameter
    for key, val in clear.items():
        if val < lim:
            raise RejectedSample(f"sample within {val:.2e} of the fold {key}")


def jacobian_at(fmap: AlexanderMap, f: int, bary) -> np.ndarray:
    check_sample(fmap, f, bary)
    if not fmap.folds[f]:
        return fmap.affine[f].linear
    return fd_jacobian(fmap, f, fmap.local(f, bary))


def dilatation_at(fmap: AlexanderMap, f: int, bary) -> float:
    """Outer dilatation at an interior point (closed form on affine simplices)."""
    if not fmap.folds[f]:
        return fmap.affine[f].dilatation
    return dilatation_of_matrix(jacobian_at(fmap, f, bary))


@dataclass
class DilatationReport:
    per_simplex_max: np.ndarray
    per_simplex_q99: np.ndarray
    K: float
    samples: int
    rejected: int
    min_jacobian: float
    violations: list  # (simplex, bary) where 0 < |f'|^n <= K J_f fails

    @property
    def quasiregular(self) -> bool:
        return not self.violations and self.min_jacobian > 0 and math.isfinite(self.K)

    def summary(self) -> dict:
        return {"K": self.K, "samples": self.samples, "rejected": self.rejected,
                "min_jacobian": self.min_jacobian, "quasiregular": self.quasiregular,
                "violations": len(self.violations),
                "per_simplex_max_range": [float(self.per_simplex_max.min()),
                                          float(self.per_simplex_max.max())]}


def dilatation_report(fmap: AlexanderMap, samples_per_simplex: int, seed: int = 0,
                      max_tries: int = 50) -> DilatationReport:
    """Sample interior points of every simplex and aggregate the outer dilatation.

    Afterwards the quasiregularity inequality is re-checked at every accepted
    sample against the reported global K.
    """
    if samples_per_simplex <= 0:
        raise ValueError("sample budget must be positive")
    rng = np.random.default_rng(seed)
    n = fmap.target.n
    F = len(fmap)
    kmax = np.zeros(F)
    kq = np.zeros(F)
    rejected = 0
    records = []
    for f in range(F):
        vals = []
        for _ in range(samples_per_simplex):
            for _ in range(max_tries):
                bary = rng.dirichlet(np.ones(n + 1))
                try:
                    J = jacobian_at(fmap, f, bary)
                    break
                except RejectedSample:
                    rejected += 1
            else:
                raise RuntimeError(f"could not place a sample in simplex {f}")
            smax = float(np.linalg.svd(J, compute_uv=False)[0])
            det = float(np.linalg.det(J))
            records.append((f, bary, smax ** n, det))
            vals.append(smax ** n / det if det > 0 else INF)
        vals = np.asarray(vals)
        kmax[f] = vals.max()
        kq[f] = np.quantile(vals, 0.99)
    K = float(kmax.max())
    violations = []
    min_det = INF
    for f, bary, norm_n, det in records:
        min_det = min(min_det, det)
        if not (0 < norm_n <= K * det * (1 + 1e-12)):
            violations.append((f, bary.tolist()))
    return DilatationReport(kmax, kq, K, len(records), rejected, float(min_det), violations)


# ---------------------------------------------------------------------------
# consistency checks
# ---------------------------------------------------------------------------

def _shared_face_samples(cx: SimplicialComplex, count: int, rng):
    shared = [(face, owners) for face, owners in cx.facet_incidence().items() if len(owners) == 2]
    if not shared:
        return []
    out = []
    for k in range(count):
        face, (f, g) = shared[int(rng.integers(len(shared)))]
        w = rng.dirichlet(np.ones(len(face)))
        out.append((face, f, g, w))
    return out


def _bary_in(cx, f, face, w):
    s = cx.simplices[f]
    bary = np.zeros(len(s))
    for v, wv in zip(face, w):
        bary[s.index(v)] = wv
    return bary


def face_consistency(fmap: AlexanderMap, count: int = 1000, seed: int = 0) -> float:
    """Largest disagreement between the two evaluations of shared-facet points."""
    rng = np.random.default_rng(seed)
    cx = fmap.complex
    worst = 0.0
    for face, f, g, w in _shared_face_samples(cx, count, rng):
        a = fmap(f, _bary_in(cx, f, face, w))
        b = fmap(g, _bary_in(cx, g, face, w))
        worst = max(worst, float(np.abs(a - b).max()))
    return worst


def branching_set(cx: SimplicialComplex) -> list:
    """The (n-2)-skeleton."""
    if cx.dim < 2:
        return []
    return cx.faces(cx.dim - 2)


def local_injectivity_check(fmap: AlexanderMap, count: int = 200, seed: int = 0,
                            depth: float = 1e-3) -> list:
    """Two-sided image test across open facets; returns the failing samples.

    A point of a shared facet is pushed slightly into each incident simplex;
    the two images must fall on opposite sides of the model facet.
    """
    rng = np.random.default_rng(seed)
    cx = fmap.complex
    tgt = fmap.target
    failures = []
    for face, f, g, w in _shared_face_samples(cx, count, rng):
        labs = {fmap.labels[v] for v in face}
        opposite = next(i for i in range(tgt.n + 1) if i not in labs)
        a = tgt.normals[opposite]
        sides = []
        for h in (f, g):
            bary = _bary_in(cx, h, face, w) * (1 - depth)
            inner = [i for i, v in enumerate(cx.simplices[h]) if v not in face]
            bary[inner] += depth / len(inner)
            y = fmap(h, bary)
            sides.append(INF if not np.all(np.isfinite(y)) else float(a @ (y - tgt.center)) - 1)
        if not sides[0] * sides[1] < 0:
            failures.append({"face": list(face), "simplices": [f, g], "sides": sides})
    return failures
