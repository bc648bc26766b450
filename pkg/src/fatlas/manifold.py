"""Intrinsic geometry of charted surfaces.

Curvature comes from the Brioschi formula, geodesics from RK4 integration of
the geodesic equation, and distances from Dijkstra on a dense chart grid whose
edge lengths are measured in the metric. The bound calculators compare ball
areas against constant-curvature space forms.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize
from scipy.integrate import quad
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .surfaces import ChartedSurface, InvalidMetricError

logger = logging.getLogger(__name__)


class NoCertifiedBound(RuntimeError):
    """No injectivity-radius rule applies; an explicit epsilon must be supplied."""


class LogMapError(RuntimeError):
    """Shooting did not converge to the target point."""


def worker_count() -> int:
    try:
        cap = int(os.environ.get("FATLAS_THREADS", "0"))
    except ValueError:
        cap = 0
    n = os.cpu_count() or 1
    return max(1, min(n, cap) if cap > 0 else n)


# ---------------------------------------------------------------------------
# pointwise geometry
# ---------------------------------------------------------------------------

def metric_at(surface: ChartedSurface, u: float, v: float) -> np.ndarray:
    g = surface.metric(u, v)
    if not np.all(np.isfinite(g)):
        raise InvalidMetricError("non-finite metric", (u, v))
    E, F, G = g[0, 0], g[0, 1], g[1, 1]
    if E <= 0 or E * G - F * F <= 0:
        raise InvalidMetricError(f"metric {g.tolist()} is not positive definite", (u, v))
    return g


def gauss_curvature(surface: ChartedSurface, u, v) -> np.ndarray:
    """Gaussian curvature from the metric alone (Brioschi formula)."""
    E, F, G, Eu, Ev, Fu, Fv, Gu, Gv, Evv, Fuv, Guu = surface.jet(u, v)
    a = -0.5 * Evv + Fuv - 0.5 * Guu
    b = 0.5 * Eu
    c = Fu - 0.5 * Ev
    d = Fv - 0.5 * Gu
    e = 0.5 * Gv
    det1 = a * (E * G - F * F) - b * (d * G - F * e) + c * (d * F - E * e)
    p, q = 0.5 * Ev, 0.5 * Gu
    det2 = -p * (p * G - F * q) + q * (p * F - E * q)
    return (det1 - det2) / (E * G - F * F) ** 2


def christoffel(surface: ChartedSurface, u, v):
    """Christoffel symbols ``(Gu_uu, Gu_uv, Gu_vv, Gv_uu, Gv_uv, Gv_vv)``."""
    E, F, G, Eu, Ev, Fu, Fv, Gu, Gv = surface.jet(u, v)[:9]
    den = 2 * (E * G - F * F)
    return ((G * Eu - 2 * F * Fu + F * Ev) / den,
            (G * Ev - F * Gu) / den,
            (2 * G * Fv - G * Gu - F * Gv) / den,
            (2 * E * Fu - E * Ev - F * Eu) / den,
            (E * Gu - F * Ev) / den,
            (E * Gv - 2 * F * Fv + F * Gu) / den)


def metric_norm(surface: ChartedSurface, p, w) -> float:
    g = surface.metric(p[0], p[1])
    w = np.asarray(w, float)
    return float(math.sqrt(max(w @ g @ w, 0.0)))


# ---------------------------------------------------------------------------
# geodesics
# ---------------------------------------------------------------------------

def _geodesic_rhs(surface, y):
    u, v, du, dv = y
    uu, uv, vv, wuu, wuv, wvv = christoffel(surface, u, v)
    return np.array([du, dv,
                     -(uu * du * du + 2 * uv * du * dv + vv * dv * dv),
                     -(wuu * du * du + 2 * wuv * du * dv + wvv * dv * dv)])


def _switch_chart(src, dst, y):
    """Re-express a geodesic state in another chart through the shared embedding."""
    vel = src.embed_jacobian(y[0], y[1]) @ y[2:]
    uv = dst.chart_of(src.embed(y[0], y[1]))
    w, *_ = np.linalg.lstsq(dst.embed_jacobian(*uv), vel, rcond=None)
    return np.concatenate([uv, w])


def _rk4(surface, p, w, n_steps: int) -> np.ndarray:
    """Integrate the geodesic with initial velocity ``w`` over unit time.

    Chart coordinates are left unwrapped unless the path crosses into the
    helper chart near a pole, in which case the result is wrapped.
    """
    y = np.array([p[0], p[1], w[0], w[1]], dtype=float)
    dt = 1.0 / n_steps
    cur = surface
    with np.errstate(all="ignore"):
        for _ in range(n_steps):
            if cur.polar and surface.alt is not None and abs(math.sin(y[0])) < 0.5:
                nxt = surface.alt if cur is surface else surface
                y, cur = _switch_chart(cur, nxt, y), nxt
            k1 = _geodesic_rhs(cur, y)
            k2 = _geodesic_rhs(cur, y + 0.5 * dt * k1)
            k3 = _geodesic_rhs(cur, y + 0.5 * dt * k2)
            k4 = _geodesic_rhs(cur, y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise ArithmeticError("geodesic integration hit a chart singularity")
    if cur is not surface:
        y = _switch_chart(cur, surface, surface.alt.wrap(y[:2]).tolist() + list(y[2:]))
    return y


def _chart_gap(surface, a, b) -> float:
    if surface.has_embedding:
        return float(np.linalg.norm(surface.embed(*a[:2]) - surface.embed(*b[:2])))
    mid = 0.5 * (a[:2] + b[:2])
    return metric_norm(surface, mid, a[:2] - b[:2])


def _shoot(surface, p, w, tol=1e-7, n0=16, max_steps=2 ** 17):
    """Step-doubling RK4: returns (unwrapped endpoint state, steps used)."""
    n = n0
    coarse = _rk4(surface, p, w, n)
    while True:
        fine = _rk4(surface, p, w, 2 * n)
        if _chart_gap(surface, coarse, fine) < tol:
            return fine, 2 * n
        if 2 * n >= max_steps:
            raise ArithmeticError("geodesic step control did not converge")
        n, coarse = 2 * n, fine


def geodesic_shoot(surface: ChartedSurface, p, direction, length: float,
                   tol: float = 1e-7) -> np.ndarray:
    """Exponential map: follow the geodesic from ``p`` along ``direction`` for ``length``.

    ``direction`` is a chart vector; it is normalized in the metric at ``p``.
    """
    p = np.asarray(p, float)
    if length == 0:
        return surface.wrap(p)
    d = np.asarray(direction, float)
    d = d / metric_norm(surface, p, d)
    end, _ = _shoot(surface, p, d * length, tol)
    return surface.wrap(end[:2])


def nearest_translate(surface: ChartedSurface, ref, q) -> np.ndarray:
    """Lattice translate of ``q`` closest (in the metric at ``ref``) to ``ref``."""
    cands = surface.translates(q)
    g = surface.metric(*ref)
    diff = cands - np.asarray(ref, float)
    d2 = np.einsum("ni,ij,nj->n", diff, g, diff)
    return cands[int(np.argmin(d2))]


def log_map(surface: ChartedSurface, p, q, *, mesh: "BackgroundMesh | None" = None,
            tol: float = 1e-9, max_iter: int = 40):
    """Inverse exponential map by damped Gauss-Newton shooting.

    Returns ``(unit_direction, length)`` with the direction a chart vector of
    unit metric length. The initial guess is the chart displacement to the
    nearest translate of ``q``, or the first leg of the mesh shortest path when
    ``mesh`` is given. Raises LogMapError on failure.
    """
    p = surface.wrap(np.asarray(p, float))
    q = surface.wrap(np.asarray(q, float))
    if _point_gap(surface, p, q) == 0:
        return np.zeros(2), 0.0

    if mesh is not None:
        w = _mesh_seed(surface, mesh, p, q)
    else:
        w = nearest_translate(surface, p, q) - p

    def residual(w_, steps=None):
        if steps is None:
            end, steps = _shoot(surface, p, w_, tol=min(1e-8, tol))
        else:
            end = _rk4(surface, p, w_, steps)
        return _point_residual(surface, end[:2], q), steps

    r, steps = residual(w)
    for _ in range(max_iter):
        err = np.linalg.norm(r)
        if err < tol:
            length = metric_norm(surface, p, w)
            return w / length, length
        delta = 1e-7 * max(np.linalg.norm(w), 1e-3)
        jac = np.column_stack([(residual(w + delta * e, steps)[0] - r) / delta
                               for e in np.eye(2)])
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        lam = 1.0
        while lam > 1e-4:
            try:
                r_new, steps_new = residual(w + lam * step)
            except ArithmeticError:
                lam *= 0.5
                continue
            if np.linalg.norm(r_new) < err:
                w, r, steps = w + lam * step, r_new, steps_new
                break
            lam *= 0.5
        else:
            break
    raise LogMapError(f"log map from {p.tolist()} to {q.tolist()} did not converge")


def _point_gap(surface, a, b) -> float:
    if surface.has_embedding:
        return float(np.linalg.norm(surface.embed(*a) - surface.embed(*b)))
    t = nearest_translate(surface, a, b)
    return float(np.linalg.norm(t - a))


def _point_residual(surface, x, q) -> np.ndarray:
    if surface.has_embedding:
        return surface.embed(*x) - surface.embed(*q)
    t = nearest_translate(surface, x, q)
    chol = np.linalg.cholesky(surface.metric(*t))
    return chol.T @ (x - t)


def _mesh_seed(surface, mesh, p, q):
    a, b = mesh.nearest_vertex(surface, p), mesh.nearest_vertex(surface, q)
    dist, pred = dijkstra(mesh.graph, indices=a, return_predecessors=True)
    path = [b]
    while path[-1] != a and pred[path[-1]] >= 0:
        path.append(pred[path[-1]])
    path = path[::-1]
    nxt = mesh.points[path[min(len(path) - 1, max(1, len(path) // 4))]]
    d = nearest_translate(surface, p, nxt) - p
    if not np.any(d):
        d = nearest_translate(surface, p, q) - p
    return d / metric_norm(surface, p, d) * dist[b]


# ---------------------------------------------------------------------------
# background mesh and distances
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BackgroundMesh:
    """Dense chart grid with metric edge lengths.

    ``edges`` rows are ``(src, dst, wrap_u, wrap_v)``: the wrap counts say how
    many times the edge crosses each periodic seam. ``triangles`` tile the
    domain and define cell adjacency for Voronoi nerves.
    """

    points: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    triangles: np.ndarray
    h: float
    shape: tuple[int, int]
    stencil: int
    h_metric: float
    graph: object = field(repr=False, default=None)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = len(self.points)
        src, dst = self.edges[:, 0], self.edges[:, 1]
        g = coo_matrix((np.concatenate([self.lengths, self.lengths]),
                        (np.concatenate([src, dst]), np.concatenate([dst, src]))),
                       shape=(n, n)).tocsr()
        object.__setattr__(self, "graph", g)

    def __len__(self) -> int:
        return len(self.points)

    def nearest_vertex(self, surface: ChartedSurface, point) -> int:
        point = surface.wrap(np.asarray(point, float))
        if surface.has_embedding:
            emb = self._cache.get("embedded")
            if emb is None:
                emb = surface.embed(self.points[:, 0], self.points[:, 1])
                self._cache["embedded"] = emb
            return int(np.argmin(((emb - surface.embed(*point)) ** 2).sum(1)))
        diff = self.points - point
        for axis, period in enumerate(surface.periods):
            if period:
                diff[:, axis] -= period * np.round(diff[:, axis] / period)
        g = surface.metric(*point)
        return int(np.argmin(np.einsum("ni,ij,nj->n", diff, g, diff)))

    def triangle_edges(self) -> np.ndarray:
        """Unique vertex pairs along grid-triangle sides."""
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)


def _stencil_offsets(radius: int) -> list[tuple[int, int]]:
    out = []
    for a in range(0, radius + 1):
        for b in range(-radius, radius + 1):
            if (a == 0 and b <= 0) or math.gcd(a, abs(b)) != 1:
                continue
            out.append((a, b))
    return out


def _axis_samples(lo, hi, h, periodic, centered):
    span = hi - lo
    if periodic:
        n = max(int(round(span / h)), 8)
        return lo + span * np.arange(n) / n, span / n
    if centered:
        n = max(int(round(span / h)), 4)
        return lo + span * (np.arange(n) + 0.5) / n, span / n
    n = max(int(round(span / h)), 4) + 1
    return np.linspace(lo, hi, n), span / (n - 1)


def _segment_lengths(surface, start, delta):
    """Simpson's rule for the metric length of straight chart segments."""
    total = 0.0
    for t, wgt in ((0.0, 1.0), (0.5, 4.0), (1.0, 1.0)):
        pts = start + t * delta
        g = surface.metric(pts[:, 0], pts[:, 1])
        total = total + wgt * np.sqrt(np.clip(np.einsum("ni,nij,nj->n", delta, g, delta), 0, None))
    return total / 6.0


def build_mesh(surface: ChartedSurface, h: float, stencil: int = 3,
               max_vertices: int = 2_000_000) -> BackgroundMesh:
    """Chart grid of spacing about ``h`` joined to every primitive offset within ``stencil`` steps.

    Polar charts get cell-centred rows and one vertex per pole.
    """
    if not h > 0:
        raise ValueError("mesh resolution must be positive")
    (u0, u1), (v0, v1) = surface.domain
    us, du = _axis_samples(u0, u1, h, surface.periodic[0], surface.polar)
    vs, dv = _axis_samples(v0, v1, h, surface.periodic[1], False)
    nu, nv = len(us), len(vs)
    if nu * nv > max_vertices:
        raise ValueError(f"resolution h={h:g} needs {nu * nv} grid vertices (limit {max_vertices})")
    for n, per in ((nu, surface.periodic[0]), (nv, surface.periodic[1])):
        if per and n < 2 * stencil + 2:
            raise ValueError("mesh too coarse for the stencil on a periodic axis")
    U, V = np.meshgrid(us, vs, indexing="ij")
    points = np.column_stack([U.ravel(), V.ravel()])
    idx = np.arange(nu * nv).reshape(nu, nv)

    src_l, dst_l, wu_l, wv_l, len_l = [], [], [], [], []
    I, J = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    I, J = I.ravel(), J.ravel()
    for a, b in _stencil_offsets(stencil):
        i2, j2 = I + a, J + b
        wu = np.zeros_like(i2)
        wv = np.zeros_like(j2)
        ok = np.ones(len(I), dtype=bool)
        if surface.periodic[0]:
            wu = np.floor_divide(i2, nu)
            i2 = np.mod(i2, nu)
        else:
            ok &= (i2 >= 0) & (i2 < nu)
        if surface.periodic[1]:
            wv = np.floor_divide(j2, nv)
            j2 = np.mod(j2, nv)
        else:
            ok &= (j2 >= 0) & (j2 < nv)
        s = idx[I[ok], J[ok]]
        t = idx[i2[ok], j2[ok]]
        delta = np.tile([a * du, b * dv], (len(s), 1))
        src_l.append(s)
        dst_l.append(t)
        wu_l.append(wu[ok])
        wv_l.append(wv[ok])
        len_l.append(_segment_lengths(surface, points[s], delta))

    tris = []
    ci, cj = np.meshgrid(np.arange(nu if surface.periodic[0] else nu - 1),
                         np.arange(nv if surface.periodic[1] else nv - 1), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    a = idx[ci, cj]
    b = idx[(ci + 1) % nu, cj]
    c = idx[(ci + 1) % nu, (cj + 1) % nv]
    d = idx[ci, (cj + 1) % nv]
    tris.append(np.column_stack([a, b, c]))
    tris.append(np.column_stack([a, c, d]))

    if surface.polar:
        poles = np.array([[u0, v0], [u1, v0]])
        base = len(points)
        points = np.vstack([points, poles])
        for k, (row_dir, rows) in enumerate(((1, range(stencil)), (-1, range(stencil)))):
            pole = base + k
            for r in rows:
                row = r if row_dir > 0 else nu - 1 - r
                s = np.full(nv, pole)
                t = idx[row]
                start = np.column_stack([np.full(nv, u0 if k == 0 else u1), vs])
                delta = np.column_stack([np.full(nv, row_dir * (r + 0.5) * du), np.zeros(nv)])
                src_l.append(s)
                dst_l.append(t)
                wu_l.append(np.zeros(nv, int))
                wv_l.append(np.zeros(nv, int))
                len_l.append(_segment_lengths(surface, start, delta))
            row = idx[0] if k == 0 else idx[nu - 1]
            tris.append(np.column_stack([np.full(nv, pole), row, np.roll(row, -1)]))

    edges = np.column_stack([np.concatenate(src_l), np.concatenate(dst_l),
                             np.concatenate(wu_l), np.concatenate(wv_l)]).astype(np.int64)
    lengths = np.concatenate(len_l)
    if not np.all(lengths > 0) or not np.all(np.isfinite(lengths)):
        raise InvalidMetricError("non-positive metric edge length in background mesh")
    unit = max(_segment_lengths(surface, points[:len(I)], np.tile([du, 0.0], (len(I), 1))).max(),
               _segment_lengths(surface, points[:len(I)], np.tile([0.0, dv], (len(I), 1))).max())
    return BackgroundMesh(points, edges, lengths, np.vstack(tris).astype(np.int64),
                          float(h), (nu, nv), stencil, float(unit))


def distance_fields(mesh: BackgroundMesh, sources, limit: float = np.inf) -> np.ndarray:
    """Graph distance from each source vertex, shape ``(len(sources), M)``."""
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if len(sources) == 0:
        return np.zeros((0, len(mesh)))
    workers = worker_count()
    if workers == 1 or len(sources) < 2 * workers:
        return dijkstra(mesh.graph, indices=sources, limit=limit)
    chunks = np.array_split(sources, workers)
    with ThreadPoolExecutor(workers) as pool:
        parts = list(pool.map(lambda c: dijkstra(mesh.graph, indices=c, limit=limit), chunks))
    return np.vstack(parts)


def geodesic_distance_field(surface: ChartedSurface, mesh: BackgroundMesh, sources,
                            limit: float = np.inf) -> np.ndarray:
    """Distance from the nearest source to every mesh vertex.

    ``sources`` may be vertex indices or chart points (snapped to the nearest vertex).
    """
    src = np.asarray(sources)
    if src.ndim == 2 or src.dtype.kind == "f":
        src = [mesh.nearest_vertex(surface, p) for p in np.atleast_2d(src)]
    if len(src) == len(mesh):
        return np.zeros(len(mesh))
    return np.asarray(dijkstra(mesh.graph, indices=np.asarray(src, np.int64),
                               min_only=True, limit=limit))


# ---------------------------------------------------------------------------
# global estimates
# ---------------------------------------------------------------------------

@dataclass
class InjRadBound:
    value: float
    rule: str
    certified: bool
    candidates: dict


@dataclass
class GeometryEstimates:
    k_low: float
    K_up: float
    D_up: float
    v_low: float
    injrad_low: float | None = None
    convrad_low: float | None = None
    injrad_rule: str | None = None
    injrad_certified: bool = False
    area: float | None = None
    curvature_fd_error: float = 0.0
    h: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _curvature_extremes(surface: ChartedSurface, n: int = 48):
    (u0, u1), (v0, v1) = surface.domain
    margin_u = 1e-3 * (u1 - u0) if surface.polar else 0.0
    lo_u, hi_u = u0 + margin_u, u1 - margin_u
    us = lo_u + (hi_u - lo_u) * (np.arange(n) + 0.5) / n
    vs = v0 + (v1 - v0) * (np.arange(n) + 0.5) / n
    U, V = np.meshgrid(us, vs, indexing="ij")
    K = gauss_curvature(surface, U.ravel(), V.ravel())
    pts = np.column_stack([U.ravel(), V.ravel()])
    bounds = [(lo_u, hi_u), (v0, v1)]
    f = lambda x, s: s * float(gauss_curvature(surface, x[0], x[1]))
    out = []
    for sign, pick in ((1.0, np.argsort(K)[:3]), (-1.0, np.argsort(-K)[:3])):
        best = sign * K[pick[0]]
        arg = pts[pick[0]]
        for i in pick:
            res = optimize.minimize(f, pts[i], args=(sign,), method="L-BFGS-B", bounds=bounds,
                                    options={"ftol": 1e-14, "gtol": 1e-10})
            if res.fun < best:
                best, arg = res.fun, res.x
        out.append((sign * best, arg))
    (k_low, at_low), (k_up, at_up) = out
    return float(k_low), float(k_up), at_low, at_up


def _area(surface: ChartedSurface, n: int) -> float:
    (u0, u1), (v0, v1) = surface.domain
    du, dv = (u1 - u0) / n, (v1 - v0) / n
    U, V = np.meshgrid(u0 + du * (np.arange(n) + 0.5), v0 + dv * (np.arange(n) + 0.5),
                       indexing="ij")
    g = surface.metric(U, V)
    return float(np.sqrt(np.clip(np.linalg.det(g), 0, None)).sum() * du * dv)


def estimate_geometry(surface: ChartedSurface, mesh: BackgroundMesh, *, seed: int = 0,
                      sweeps: int = 4) -> GeometryEstimates:
    """Curvature bounds, diameter, area and injectivity/convexity radius lower bounds."""
    # diameter: double sweep from a few sampled sources
    rng = np.random.default_rng(seed)
    sources = list(rng.choice(len(mesh), size=min(sweeps, len(mesh)), replace=False))
    ecc = 0.0
    for s in sources:
        cur = int(s)
        for _ in range(2):
            d = dijkstra(mesh.graph, indices=cur)
            finite = np.isfinite(d)
            if not finite.all():
                raise InvalidMetricError("background mesh is disconnected")
            ecc = max(ecc, float(d.max()))
            cur = int(np.argmax(d))
    D_up = ecc + 3 * mesh.h_metric

    area = _area(surface, 256)
    v_low = area - abs(area - _area(surface, 128))

    k_low, K_up, at_low, at_up = _curvature_extremes(surface)
    fd_err = 0.0
    if surface.jet_fn is None:
        # finite-difference jets: compare against a doubled step and add a 5% margin
        coarse = replace(surface, fd_step=2 * surface.fd_step)
        fd_err = max(abs(float(gauss_curvature(coarse, *at_low) - k_low)),
                     abs(float(gauss_curvature(coarse, *at_up) - K_up)))
        k_low -= 0.05 * abs(k_low) + fd_err
        K_up += 0.05 * abs(K_up) + fd_err

    est = GeometryEstimates(k_low, K_up, D_up, v_low, area=area, curvature_fd_error=fd_err,
                            h=mesh.h)
    try:
        bound = injrad_lower_bound(est, surface, mesh)
    except NoCertifiedBound:
        logger.warning("no injectivity-radius bound for %s", surface.surface_id)
        return est
    est.injrad_low = bound.value
    est.convrad_low = bound.value / 2
    est.injrad_rule = bound.rule
    est.injrad_certified = bound.certified
    return est


def catalog_injectivity_radius(surface: ChartedSurface) -> float | None:
    if surface.tag == "sphere":
        return math.pi * surface.params["R"]
    if surface.tag == "flat_torus":
        return 0.5 * min(surface.params["L1"], surface.params["L2"])
    return None


def shortest_noncontractible_loop(surface: ChartedSurface, mesh: BackgroundMesh,
                                  samples: int = 12) -> float:
    """Shortest mesh loop wrapping a periodic seam, from a lifted 3x3 cover of the grid."""
    # seams of polar or planar charts bound discs, so only tori have such loops
    if not any(surface.periodic) or surface.polar or surface.topology in ("sphere", "plane"):
        return math.inf
    m = len(mesh)
    tiles = [(a, b) for a in range(3) for b in range(3)]
    tile_id = {t: k for k, t in enumerate(tiles)}
    src, dst, wts = [], [], []
    e = mesh.edges
    for (a, b), k in tile_id.items():
        ta, tb = a + e[:, 2], b + e[:, 3]
        ok = (ta >= 0) & (ta < 3) & (tb >= 0) & (tb < 3)
        tk = ta[ok] * 3 + tb[ok]
        src.append(k * m + e[ok, 0])
        dst.append(tk * m + e[ok, 1])
        wts.append(mesh.lengths[ok])
    src, dst, wts = np.concatenate(src), np.concatenate(dst), np.concatenate(wts)
    n = 9 * m
    cover = coo_matrix((np.concatenate([wts, wts]),
                        (np.concatenate([src, dst]), np.concatenate([dst, src]))),
                       shape=(n, n)).tocsr()
    centre = tile_id[(1, 1)]
    picks = np.linspace(0, mesh.shape[0] * mesh.shape[1] - 1, samples).astype(int)
    best = math.inf
    for p in picks:
        d = dijkstra(cover, indices=centre * m + p)
        for k in range(9):
            if k != centre:
                best = min(best, float(d[k * m + p]))
    return best


def injrad_lower_bound(estimates: GeometryEstimates, surface: ChartedSurface,
                       mesh: BackgroundMesh | None = None) -> InjRadBound:
    """Best applicable lower bound for the injectivity radius.

    Rules, in order of preference: a catalog value; the bound pi/sqrt(K_up)
    for positively curved noncompact surfaces (or K >= 0 on surfaces
    homeomorphic to the plane); a heuristic min(pi/sqrt(K_up), half the
    shortest detected noncontractible loop), flagged uncertified.
    """
    cands: dict[str, float] = {}
    exact = catalog_injectivity_radius(surface)
    if exact is not None:
        cands["catalog"] = exact
    K_up, k_low = estimates.K_up, estimates.k_low
    conj = math.pi / math.sqrt(K_up) if K_up > 0 else math.inf
    if K_up > 0 and ((not surface.compact and k_low > 0)
                     or (surface.topology == "plane" and k_low >= 0)):
        cands["maeda"] = conj
    loop = shortest_noncontractible_loop(surface, mesh) if mesh is not None else math.inf
    heuristic = min(conj, 0.5 * loop)
    if math.isfinite(heuristic):
        cands["klingenberg_heuristic"] = heuristic
    if "catalog" in cands:
        return InjRadBound(cands["catalog"], "catalog", True, cands)
    if "maeda" in cands:
        return InjRadBound(cands["maeda"], "maeda", True, cands)
    if "klingenberg_heuristic" in cands:
        return InjRadBound(heuristic, "klingenberg_heuristic", False, cands)
    raise NoCertifiedBound(f"no injectivity-radius rule applies to {surface.surface_id}")


# ---------------------------------------------------------------------------
# comparison geometry
# ---------------------------------------------------------------------------

def comparison_volume(k: float, r: float, n: int = 2) -> float:
    """Volume of a radius-``r`` ball in the n-dimensional space form of curvature ``k``."""
    if r <= 0:
        return 0.0
    if n == 2:
        if k == 0:
            return math.pi * r * r
        if k > 0:
            s = math.sqrt(k)
            if r * s >= math.pi:
                return 4 * math.pi / k
            return 2 * math.pi / k * (1 - math.cos(r * s))
        s = math.sqrt(-k)
        return 2 * math.pi / -k * (math.cosh(r * s) - 1)
    sphere_area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    if k > 0:
        r = min(r, math.pi / math.sqrt(k))
        sn = lambda t: math.sin(math.sqrt(k) * t) / math.sqrt(k)
    elif k < 0:
        sn = lambda t: math.sinh(math.sqrt(-k) * t) / math.sqrt(-k)
    else:
        sn = lambda t: t
    return sphere_area * quad(lambda t: sn(t) ** (n - 1), 0, r)[0]


def _bound_curvature(estimates: GeometryEstimates, ricci_low: float | None, n: int) -> float:
    # in dimension n a Ricci lower bound (n-1)k plays the role of sectional curvature k
    return estimates.k_low if ricci_low is None else ricci_low / (n - 1)


def packing_bound(estimates: GeometryEstimates, eps: float, *, ricci_low: float | None = None,
                  n: int = 2) -> int:
    """Upper bound on the size of an epsilon-net.

    The (eps/2)-balls around net points are disjoint, and by relative volume
    comparison each one holds at least V_k(eps/2)/V_k(D) of the total volume.
    """
    k = _bound_curvature(estimates, ricci_low, n)
    ratio = comparison_volume(k, estimates.D_up, n) / comparison_volume(k, eps / 2, n)
    return max(1, math.floor(ratio + 1e-9))


def degree_bound(estimates: GeometryEstimates, eps: float, *, ricci_low: float | None = None,
                 n: int = 2) -> int:
    """Upper bound on how many net balls of radius eps meet a given one.

    Such centres lie within 2*eps, so their disjoint (eps/2)-balls fit in a
    ball of radius 5*eps/2.
    """
    k = _bound_curvature(estimates, ricci_low, n)
    ratio = comparison_volume(k, 2.5 * eps, n) / comparison_volume(k, eps / 2, n)
    return max(1, math.floor(ratio + 1e-9))
