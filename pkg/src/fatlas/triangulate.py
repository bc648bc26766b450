"""From an epsilon-net to a thick, chessboard-colored triangulation.

The net's geodesic Voronoi cells are labelled on the background mesh; grid
triangles whose corners carry three different labels mark Voronoi vertices,
and the nerve (one triangle per Voronoi vertex) is the triangulation.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .manifold import (
    BackgroundMesh,
    GeometryEstimates,
    NoCertifiedBound,
    build_mesh,
    distance_fields,
    estimate_geometry,
)
from .net import EpsilonNet, NetReport, ResolutionError, farthest_point_net, verify_net
from .simplex import (
    ColoringError,
    EvenIncidenceReport,
    SimplicialComplex,
    ThicknessReport,
    barycentric_subdivision,
    check_even_incidence,
    chessboard_coloring,
    coherent_orientation,
    thicken,
    thickness_batch,
    thickness_report,
    validate_closed_pseudomanifold,
)
from .surfaces import ChartedSurface

__all__ = [
    "VoronoiPartition", "NerveError", "PipelineError", "PipelineConfig", "PipelineResult",
    "geodesic_voronoi", "nerve_complex", "realize_coordinates", "thickness_report",
    "fat_triangulation_pipeline", "exhaustion_demo", "restrict_mesh",
]

logger = logging.getLogger(__name__)


class NerveError(RuntimeError):
    """The Voronoi nerve is not a valid closed triangulation; the caller may retry."""

    def __init__(self, reason: str, witness=None, retry: bool = True):
        super().__init__(reason)
        self.reason = reason
        self.witness = witness
        self.retry = retry


class RealizationError(ValueError):
    pass


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name, a witness and the retry trace."""

    def __init__(self, stage: str, message: str, witness=None, trace=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message
        self.witness = witness
        self.trace = list(trace or [])


# ---------------------------------------------------------------------------
# Voronoi partition and nerve
# ---------------------------------------------------------------------------

@dataclass
class VoronoiPartition:
    labels: np.ndarray  # nearest center per mesh vertex
    distance: np.ndarray  # distance to that center
    n_cells: int
    corners: np.ndarray  # grid triangles whose corners see three cells
    components: np.ndarray  # connected pieces per cell
    mesh: BackgroundMesh = field(repr=False)

    @property
    def connected(self) -> bool:
        return bool(np.all(self.components == 1))


def geodesic_voronoi(surface: ChartedSurface, mesh: BackgroundMesh, net: EpsilonNet, *,
                     offsets=None, fields=None) -> VoronoiPartition:
    """Label each mesh vertex by its nearest center (ties to the lowest index).

    ``offsets`` adds a small per-center constant to the distance fields, which
    moves the bisectors slightly and breaks degenerate configurations.
    """
    if fields is None:
        fields = distance_fields(mesh, list(net.center_ids), limit=max(3 * net.eps, 1e-12))
    work = fields if offsets is None else fields + np.asarray(offsets, float)[:, None]
    labels = np.argmin(work, axis=0)
    dist = fields[labels, np.arange(fields.shape[1])]
    if not np.all(np.isfinite(dist)):
        raise NerveError("mesh vertex outside every distance field", int(np.argmax(~np.isfinite(dist))))

    tl = labels[mesh.triangles]
    distinct = (tl[:, 0] != tl[:, 1]) & (tl[:, 1] != tl[:, 2]) & (tl[:, 0] != tl[:, 2])
    corners = np.nonzero(distinct)[0]

    # connectivity of each cell along grid-triangle sides
    pairs = mesh.triangle_edges()
    same = labels[pairs[:, 0]] == labels[pairs[:, 1]]
    n = len(mesh)
    g = coo_matrix((np.ones(same.sum()), (pairs[same, 0], pairs[same, 1])), shape=(n, n))
    _, comp = connected_components(g, directed=False)
    components = np.zeros(net.n0, dtype=int)
    for lab in range(net.n0):
        members = comp[labels == lab]
        components[lab] = len(np.unique(members))
    return VoronoiPartition(labels, dist, net.n0, corners, components, mesh)


def _corner_clusters(partition: VoronoiPartition) -> list[np.ndarray]:
    """Group corner triangles that share a mesh vertex."""
    tris = partition.mesh.triangles[partition.corners]
    k = len(tris)
    if k == 0:
        return []
    rows = np.repeat(np.arange(k), 3)
    cols = tris.ravel()
    inc = coo_matrix((np.ones(3 * k), (rows, cols)), shape=(k, len(partition.mesh))).tocsr()
    adj = inc @ inc.T
    _, comp = connected_components(adj, directed=False)
    order = np.argsort(comp, kind="stable")
    splits = np.nonzero(np.diff(comp[order]))[0] + 1
    return [partition.corners[g] for g in np.split(order, splits)]


def _touching_pairs(partition: VoronoiPartition, tri_ids: np.ndarray) -> set:
    mesh = partition.mesh
    verts = np.unique(mesh.triangles[tri_ids])
    ring = np.nonzero(np.isin(mesh.triangles, verts).any(axis=1))[0]
    lab = partition.labels[mesh.triangles[ring]]
    out = set()
    for a, b in ((0, 1), (1, 2), (0, 2)):
        diff = lab[:, a] != lab[:, b]
        for x, y in zip(lab[diff, a].tolist(), lab[diff, b].tolist()):
            out.add((min(x, y), max(x, y)))
    return out


def nerve_complex(partition: VoronoiPartition, net: EpsilonNet, *,
                  expected_chi: int | None = None,
                  center_distances: np.ndarray | None = None) -> SimplicialComplex:
    """Triangulation whose vertices are the net centers and whose triangles are Voronoi corners.

    A corner where four cells meet is split along the diagonal whose cells
    actually touch, else along the shorter center distance. Raises
    NerveError (a retry signal) when the result is not a closed surface.
    """
    if not partition.connected:
        bad = np.nonzero(partition.components != 1)[0].tolist()
        raise NerveError("disconnected Voronoi cell", {"cells": bad})
    if len(partition.corners) == 0:
        raise NerveError(f"no triple corners with {net.n0} cell(s)", {"n_cells": net.n0})
    if center_distances is None:
        center_distances = net.center_distances
    tris: dict[tuple, int] = {}
    for group in _corner_clusters(partition):
        labs = sorted(set(partition.labels[partition.mesh.triangles[group]].ravel().tolist()))
        if len(labs) == 3:
            new = [tuple(labs)]
        elif len(labs) == 4:
            touch = _touching_pairs(partition, group)
            diagonals = [((labs[0], labs[1]), (labs[2], labs[3])),
                         ((labs[0], labs[2]), (labs[1], labs[3])),
                         ((labs[0], labs[3]), (labs[1], labs[2]))]
            # a diagonal splits the 4-cycle of touching cells: both its pair and the
            # complementary pair must be absent from the cycle edges
            cands = []
            for p, q in diagonals:
                rest = [x for x in diagonals if x != (p, q)]
                cycle = [e for pair in rest for e in pair]
                if all(e in touch for e in cycle):
                    cands.extend([p, q])
            if not cands:
                raise NerveError("four-cell corner without a cyclic arrangement",
                                 {"cells": labs, "triangles": group.tolist()})
            touching = [c for c in cands if c in touch]
            pool = touching if len(touching) == 1 else cands
            if center_distances is not None:
                chosen = min(pool, key=lambda c: (center_distances[c[0], c[1]], c))
            else:
                chosen = min(pool)
            others = [x for x in labs if x not in chosen]
            new = [tuple(sorted((*chosen, o))) for o in others]
        else:
            raise NerveError(f"{len(labs)} cells meet at one corner",
                             {"cells": labs, "triangles": group.tolist()})
        for t in new:
            if t in tris:
                raise NerveError("two corners with the same cells", {"cells": list(t)})
            tris[t] = int(group[0])
    simplices = tuple(sorted(tris))
    cx = SimplicialComplex(net.centers.copy(), simplices,
                           meta={"center_ids": list(net.center_ids), "eps": net.eps})
    used = {v for s in simplices for v in s}
    if len(used) != net.n0:
        missing = sorted(set(range(net.n0)) - used)
        raise NerveError("centers missing from the nerve", {"centers": missing})
    rep = validate_closed_pseudomanifold(cx)
    if not rep.ok:
        raise NerveError("nerve is not a closed surface: " + "; ".join(rep.messages),
                         {"bad_facets": rep.bad_facets[:10], "bad_links": rep.bad_links[:10]})
    if expected_chi is not None and rep.euler_characteristic != expected_chi:
        raise NerveError(f"Euler characteristic {rep.euler_characteristic} != {expected_chi}",
                         {"chi": rep.euler_characteristic})
    orient = coherent_orientation(cx)
    return cx.with_(orientation=orient,
                    meta=dict(cx.meta, chi=rep.euler_characteristic))


# ---------------------------------------------------------------------------
# realization
# ---------------------------------------------------------------------------

def _unwrap_cells(surface: ChartedSurface, uv: np.ndarray, simplices) -> np.ndarray:
    cells = np.zeros((len(simplices), len(simplices[0]), 2))
    for f, s in enumerate(simplices):
        anchor = uv[s[0]]
        chol = np.linalg.cholesky(surface.metric(*anchor)).T
        cells[f, 0] = anchor
        for slot, v in enumerate(s[1:], start=1):
            t = surface.translates(uv[v])
            d = (t - anchor) @ chol.T
            cells[f, slot] = t[int(np.argmin((d * d).sum(1)))]
        cells[f] = anchor + (cells[f] - anchor) @ chol.T
    return cells


def realize_coordinates(cx: SimplicialComplex, surface: ChartedSurface) -> SimplicialComplex:
    """Euclidean realization of a nerve whose vertices are chart points.

    Embedded surfaces use the ambient coordinates of the vertices. Otherwise
    each triangle is unwrapped around its first vertex (nearest lattice
    translates) and scaled by the metric there, which is exact for flat tori.
    """
    uv = np.asarray(cx.vertices, float)
    if uv.shape[1] != 2:
        raise RealizationError("expected chart coordinates")
    for s in cx.simplices:
        if len(set(s)) != len(s):
            raise RealizationError(f"simplex {s} repeats a vertex")
    meta = dict(cx.meta, chart_coords=uv.tolist(), surface=surface.surface_id)
    if surface.has_embedding:
        out = cx.with_(vertices=surface.embed(uv[:, 0], uv[:, 1]), cell_coords=None,
                       periods=None, meta=meta)
    else:
        cells = _unwrap_cells(surface, uv, cx.simplices)
        out = cx.with_(cell_coords=cells, periods=surface.periods, meta=meta)
    phi = thickness_batch(out.cells())
    if np.any(phi <= 0):
        bad = int(np.argmin(phi))
        raise RealizationError(f"realized simplex {cx.simplices[bad]} is degenerate")
    return out


def _surface_projector(surface: ChartedSurface, uv0: np.ndarray):
    """Nearest-point projection onto an embedded surface by Gauss-Newton in the chart."""
    guesses = {v: np.asarray(p, float) for v, p in enumerate(uv0)}

    def project(v, x):
        chart, uv = surface, guesses[v]
        if surface.alt is not None and abs(math.sin(uv[0])) < 0.5:
            chart = surface.alt
            uv = chart.chart_of(x)
        elif surface.inverse_fn is not None:
            uv = surface.chart_of(x)
        uv = np.array(uv, float)
        for _ in range(30):
            r = chart.embed(*uv) - x
            step, *_ = np.linalg.lstsq(chart.embed_jacobian(*uv), -r, rcond=None)
            uv += step
            if np.abs(step).max() < 1e-14:
                break
        y = chart.embed(*uv)
        guesses[v] = surface.chart_of(y) if chart is not surface else surface.wrap(uv)
        return y

    return project


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    eps: float | None = None  # None: convrad_low * safety
    safety: float = 0.9
    clamp_eps: bool = True  # explicit eps is capped at convrad_low * safety
    h: float | None = None  # None: min(eps/20, estimation resolution)
    h_est: float | None = None
    seed: int = 0
    thicken_budget: int = 3000
    phi_target: float = 0.35
    max_move: float = 0.2  # fraction of eps
    max_retries: int = 5
    stencil: int = 3

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.h is not None and self.eps is not None and self.h > self.eps / 20 + 1e-15:
            raise ValueError("h must not exceed eps/20")


@dataclass
class PipelineResult:
    surface: ChartedSurface
    config: PipelineConfig
    estimates: GeometryEstimates
    eps: float
    mesh: BackgroundMesh
    net: EpsilonNet
    net_report: NetReport
    partition: VoronoiPartition
    nerve: SimplicialComplex
    realized: SimplicialComplex
    thickened: SimplicialComplex
    subdivided: SimplicialComplex
    colors: tuple
    before: ThicknessReport
    after: ThicknessReport
    final: ThicknessReport
    even_incidence: EvenIncidenceReport
    chi: int
    trace: list
    timings: dict
    edge_ratio: tuple  # min/max of realized edge length over geodesic center distance

    def summary(self) -> dict:
        return {
            "surface": self.surface.surface_id,
            "seed": self.config.seed,
            "eps": self.eps,
            "h": self.mesh.h,
            "n0": self.net.n0,
            "vertices": len(self.nerve.vertices),
            "triangles": len(self.nerve),
            "chi": self.chi,
            "phi_min_before": self.before.phi_min,
            "phi_min_after": self.after.phi_min,
            "phi_min_subdivided": self.final.phi_min,
            "subdivided_triangles": len(self.subdivided),
            "retries": len(self.trace),
        }


def _auto_h_est(surface: ChartedSurface, target_vertices: int = 8000) -> float:
    (u0, u1), (v0, v1) = surface.domain
    return math.sqrt((u1 - u0) * (v1 - v0) / target_vertices)


def _mesh_for(surface, h, stencil, cache):
    key = round(h, 12)
    if key not in cache:
        cache[key] = build_mesh(surface, h, stencil)
    return cache[key]


def fat_triangulation_pipeline(surface: ChartedSurface,
                               config: PipelineConfig | None = None) -> PipelineResult:
    """Estimate geometry, build a net, take its Voronoi nerve, thicken, subdivide and color."""
    config = config or PipelineConfig()
    timings: dict[str, float] = {}
    trace: list[dict] = []
    meshes: dict = {}

    def stage(name):
        timings[name] = time.perf_counter()

    def done(name):
        timings[name] = time.perf_counter() - timings[name]

    stage("estimate")
    h_est = config.h_est or _auto_h_est(surface)
    try:
        est_mesh = _mesh_for(surface, h_est, config.stencil, meshes)
        estimates = estimate_geometry(surface, est_mesh, seed=config.seed)
    except Exception as exc:
        raise PipelineError("estimate", str(exc)) from exc
    done("estimate")

    cap = estimates.convrad_low * config.safety if estimates.convrad_low else None
    if config.eps is None:
        if cap is None:
            raise PipelineError("estimate", "no certified injectivity-radius bound; supply eps",
                                {"injrad_rule": estimates.injrad_rule})
        eps = cap
    else:
        eps = config.eps
        if config.clamp_eps and cap is not None:
            eps = min(eps, cap)
    expected_chi = surface.euler_characteristic
    rng = np.random.default_rng(config.seed)
    attempt = 0

    while True:
        h = config.h if config.h is not None else min(eps / 20, h_est)
        stage("net")
        mesh = _mesh_for(surface, h, config.stencil, meshes)
        try:
            net = farthest_point_net(surface, mesh, eps, config.seed)
        except ResolutionError as exc:
            raise PipelineError("net", str(exc), {"eps": eps, "h": h}, trace) from exc
        done("net")
        stage("verify")
        fields = distance_fields(mesh, list(net.center_ids))
        report = verify_net(net, surface, mesh, estimates)
        if not (report.covering_ok and report.separation_ok):
            raise PipelineError("verify", "net invariants failed", report.to_dict(), trace)
        done("verify")

        stage("nerve")
        offsets = None
        failure = None
        for perturbed in (False, True):
            try:
                partition = geodesic_voronoi(surface, mesh, net, offsets=offsets, fields=fields)
                nerve = nerve_complex(partition, net, expected_chi=expected_chi,
                                      center_distances=fields[:, list(net.center_ids)])
                failure = None
                break
            except NerveError as exc:
                failure = exc
                trace.append({"stage": "nerve", "eps": eps, "perturbed": perturbed,
                              "n0": net.n0, "reason": exc.reason, "witness": exc.witness})
                # perturb centers by at most h/10 (as additive distance offsets)
                offsets = rng.uniform(0, mesh.h_metric / 10, net.n0)
        done("nerve")
        if failure is None:
            break
        attempt += 1
        if attempt > config.max_retries:
            raise PipelineError("nerve", f"no valid nerve after {config.max_retries} retries",
                                failure.witness, trace)
        eps *= 2 / 3

    stage("realize")
    try:
        realized = realize_coordinates(nerve, surface)
    except RealizationError as exc:
        raise PipelineError("realize", str(exc), None, trace) from exc
    done("realize")

    stage("thicken")
    project = None
    if surface.has_embedding:
        project = _surface_projector(surface, nerve.vertices)
    res = thicken(realized, config.thicken_budget, config.phi_target,
                  max_move=config.max_move * eps, seed=config.seed, project=project)
    if res.after.phi_min < res.before.phi_min:
        raise PipelineError("thicken", "thickness decreased",
                            {"before": res.before.phi_min, "after": res.after.phi_min}, trace)
    done("thicken")

    stage("subdivide")
    sd = barycentric_subdivision(res.complex)
    even = check_even_incidence(sd)
    if not even.ok:
        raise PipelineError("even_incidence", "odd incidence after subdivision",
                            even.offending[:10], trace)
    try:
        colors = chessboard_coloring(sd)
    except ColoringError as exc:
        raise PipelineError("coloring", "no chessboard coloring", exc.cycle, trace) from exc
    sd = sd.with_(colors=colors)
    done("subdivide")

    # chordal edge length against geodesic center distance
    ratios = []
    cd = fields[:, list(net.center_ids)]
    cells = realized.cells()
    for f, s in enumerate(realized.simplices):
        for a in range(3):
            for b in range(a + 1, 3):
                g = cd[s[a], s[b]]
                if g > 0 and np.isfinite(g):
                    ratios.append(np.linalg.norm(cells[f, a] - cells[f, b]) / g)
    edge_ratio = (float(min(ratios)), float(max(ratios))) if ratios else (1.0, 1.0)

    return PipelineResult(surface, config, estimates, eps, mesh, net, report, partition, nerve,
                          realized, res.complex, sd, colors, res.before, res.after,
                          thickness_report(sd), even, nerve.meta["chi"], trace, timings,
                          edge_ratio)


# ---------------------------------------------------------------------------
# exhaustion of noncompact surfaces
# ---------------------------------------------------------------------------

def restrict_mesh(mesh: BackgroundMesh, keep: np.ndarray) -> tuple[BackgroundMesh, np.ndarray]:
    """Sub-mesh on the vertices where ``keep`` is true; returns it with the kept ids."""
    keep = np.asarray(keep, bool)
    ids = np.nonzero(keep)[0]
    remap = np.full(len(mesh), -1)
    remap[ids] = np.arange(len(ids))
    e = mesh.edges
    ok = keep[e[:, 0]] & keep[e[:, 1]]
    edges = e[ok].copy()
    edges[:, :2] = remap[edges[:, :2]]
    tri_ok = keep[mesh.triangles].all(axis=1)
    sub = BackgroundMesh(mesh.points[ids], edges, mesh.lengths[ok], remap[mesh.triangles[tri_ok]],
                         mesh.h, mesh.shape, mesh.stencil, mesh.h_metric)
    return sub, ids


@dataclass
class ExhaustionPiece:
    radius: float
    vertex_ids: np.ndarray = field(repr=False)
    n0: int
    triangles: int
    boundary_edges: int  # collar edges left unmerged


@dataclass
class ExhaustionReport:
    pieces: list
    nested: bool
    covers_mesh: bool

    def to_dict(self) -> dict:
        return {"nested": self.nested, "covers_mesh": self.covers_mesh,
                "pieces": [{"radius": p.radius, "vertices": len(p.vertex_ids), "n0": p.n0,
                            "triangles": p.triangles, "boundary_edges": p.boundary_edges}
                           for p in self.pieces]}


def exhaustion_demo(surface: ChartedSurface, base_point, radii, *, eps: float,
                    h: float | None = None, seed: int = 0,
                    mesh: BackgroundMesh | None = None) -> ExhaustionReport:
    """Compact pieces M_i = {d(base, .) <= r_i} with nested bookkeeping and per-piece nerves.

    Pieces are triangulated independently; the collars along their boundaries
    are reported, not merged.
    """
    radii = sorted(float(r) for r in radii)
    if mesh is None:
        mesh = build_mesh(surface, h or eps / 20)
    base = mesh.nearest_vertex(surface, base_point)
    dist = distance_fields(mesh, [base])[0]
    pieces = []
    for r in radii:
        keep = dist <= r
        sub, ids = restrict_mesh(mesh, keep)
        n0 = tri_count = boundary = 0
        if len(ids) > 1 and eps > 3 * sub.h_metric:
            net = farthest_point_net(surface, sub, eps, seed)
            n0 = net.n0
            part = geodesic_voronoi(surface, sub, net)
            tris = set()
            for group in _corner_clusters(part):
                labs = tuple(sorted(set(part.labels[sub.triangles[group]].ravel().tolist())))
                if len(labs) == 3:
                    tris.add(labs)
            tri_count = len(tris)
            count: dict = {}
            for t in tris:
                for e in ((t[0], t[1]), (t[1], t[2]), (t[0], t[2])):
                    count[e] = count.get(e, 0) + 1
            boundary = sum(1 for c in count.values() if c == 1)
        pieces.append(ExhaustionPiece(r, ids, n0, tri_count, boundary))
    nested = all(np.isin(a.vertex_ids, b.vertex_ids).all() for a, b in zip(pieces, pieces[1:]))
    covers = bool(pieces) and len(pieces[-1].vertex_ids) == len(mesh)
    return ExhaustionReport(pieces, nested, covers)
