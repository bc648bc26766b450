"""Minimal epsilon-nets by farthest-point sampling on a background mesh."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .manifold import (
    BackgroundMesh,
    GeometryEstimates,
    degree_bound,
    distance_fields,
    estimate_geometry,
    packing_bound,
)
from .surfaces import ChartedSurface


class ResolutionError(ValueError):
    """epsilon is too small for the background mesh."""


@dataclass(frozen=True, eq=False)
class EpsilonNet:
    centers: np.ndarray  # chart coordinates, (n0, 2)
    center_ids: tuple  # background mesh vertex per center
    eps: float
    pattern: tuple  # sorted (k, l) pairs with k < l
    seed: int
    surface_id: str
    center_distances: np.ndarray | None = field(default=None, repr=False)

    @property
    def n0(self) -> int:
        return len(self.center_ids)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n0, dtype=int)
        for k, l in self.pattern:
            deg[k] += 1
            deg[l] += 1
        return deg

    def to_dict(self) -> dict:
        return {"surface": self.surface_id, "seed": self.seed, "eps": self.eps,
                "centers": self.centers.tolist(), "center_ids": list(self.center_ids),
                "pattern": [list(p) for p in self.pattern]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EpsilonNet":
        d = json.loads(text)
        return cls(np.asarray(d["centers"], float).reshape(-1, 2), tuple(d["center_ids"]),
                   float(d["eps"]), tuple(tuple(p) for p in d["pattern"]), int(d["seed"]),
                   d["surface"])

    def with_centers(self, ids, mesh: BackgroundMesh) -> "EpsilonNet":
        """Same radius with a different center list; pattern is recomputed."""
        ids = tuple(int(i) for i in ids)
        dist = _center_distances(mesh, ids, 2 * self.eps)
        return EpsilonNet(mesh.points[list(ids)].copy(), ids, self.eps, _pattern(dist, self.eps),
                          self.seed, self.surface_id, dist)


def _center_distances(mesh, ids, limit):
    if not ids:
        return np.zeros((0, 0))
    fields = distance_fields(mesh, list(ids), limit=limit)
    return fields[:, list(ids)]


def _pattern(dist: np.ndarray, eps: float) -> tuple:
    k, l = np.nonzero(np.triu(dist < 2 * eps, 1))
    return tuple(zip(k.tolist(), l.tolist()))


def farthest_point_net(surface: ChartedSurface, mesh: BackgroundMesh, eps: float,
                       seed: int = 0) -> EpsilonNet:
    """Greedy net: start at a seeded vertex, keep adding the farthest vertex while it is >= eps away.

    Ties in the argmax go to the lowest vertex index.
    """
    if not eps > 3 * mesh.h_metric:
        raise ResolutionError(f"eps={eps:g} must exceed 3h={3 * mesh.h_metric:g}")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(mesh)))
    ids = [first]
    dmin = dijkstra(mesh.graph, indices=first)
    if not np.isfinite(dmin).all():
        raise ValueError("background mesh is disconnected")
    while True:
        far = int(np.argmax(dmin))
        if dmin[far] < eps:
            break
        # separation holds by construction: the new center is >= eps from all others
        assert dmin[far] >= eps
        ids.append(far)
        d = dijkstra(mesh.graph, indices=far, limit=float(dmin.max()))
        np.minimum(dmin, d, out=dmin)
    dist = _center_distances(mesh, ids, 2 * eps)
    return EpsilonNet(mesh.points[ids].copy(), tuple(ids), float(eps), _pattern(dist, eps),
                      int(seed), surface.surface_id, dist)


def intersection_pattern(net: EpsilonNet, surface: ChartedSurface | None = None,
                         mesh: BackgroundMesh | None = None) -> dict[int, set]:
    """Adjacency of centers whose eps-balls meet, i.e. centers closer than 2*eps."""
    pairs = net.pattern
    if mesh is not None:
        pairs = _pattern(_center_distances(mesh, net.center_ids, 2 * net.eps), net.eps)
    adj = {k: set() for k in range(net.n0)}
    for k, l in pairs:
        adj[k].add(l)
        adj[l].add(k)
    return adj


@dataclass
class NetReport:
    eps: float
    n0: int
    covering_radius: float
    covering_witness: int | None  # mesh vertex farther than eps from every center
    min_separation: float
    separation_witness: tuple | None  # closest center pair when separation fails
    packing_bound: int
    degree_bound: int
    max_degree: int
    max_ball_incidence: int  # most eps-balls containing one mesh vertex
    covering_ok: bool
    separation_ok: bool
    packing_ok: bool
    degree_ok: bool

    @property
    def ok(self) -> bool:
        return self.covering_ok and self.separation_ok and self.packing_ok and self.degree_ok

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["ok"] = self.ok
        return d


def verify_net(net: EpsilonNet, surface: ChartedSurface, mesh: BackgroundMesh,
               estimates: GeometryEstimates | None = None) -> NetReport:
    """Check covering, separation, and the packing and degree bounds, with witnesses."""
    if estimates is None:
        estimates = estimate_geometry(surface, mesh)
    eps = net.eps
    ids = list(net.center_ids)
    fields = distance_fields(mesh, ids)
    nearest = fields.min(axis=0)
    far = int(np.argmax(nearest))
    cover = float(nearest[far])
    covering_ok = cover < eps

    pattern = _pattern(fields[:, ids], eps)
    centre_d = fields[:, ids].copy()
    np.fill_diagonal(centre_d, np.inf)
    if len(ids) > 1:
        a, b = np.unravel_index(int(np.argmin(centre_d)), centre_d.shape)
        sep = float(centre_d[a, b])
    else:
        a = b = 0
        sep = float("inf")
    separation_ok = sep >= eps

    deg = np.zeros(len(ids), dtype=int)
    for k, l in pattern:
        deg[k] += 1
        deg[l] += 1
    n1 = packing_bound(estimates, eps)
    n2 = degree_bound(estimates, eps)
    incidence = int((fields < eps).sum(axis=0).max())
    return NetReport(eps, len(ids), cover, None if covering_ok else far, sep,
                     None if separation_ok else (int(min(a, b)), int(max(a, b))),
                     n1, n2, int(deg.max(initial=0)), incidence, covering_ok, separation_ok,
                     len(ids) <= n1, int(deg.max(initial=0)) <= n2)
