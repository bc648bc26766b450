"""Dimension-generic Euclidean simplices and simplicial complexes.

A simplex is an ``(k+1, N)`` array of vertex coordinates. A complex stores its
top-dimensional simplices as sorted vertex-index tuples; lower faces are
derived on demand, so closure under faces holds by construction.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np


class ColoringError(Exception):
    """No proper 2-coloring of the dual graph exists; ``cycle`` is an odd dual cycle."""

    def __init__(self, cycle: list[int]):
        super().__init__(f"dual graph has an odd cycle of length {len(cycle)}: {cycle}")
        self.cycle = cycle


# ---------------------------------------------------------------------------
# single simplices
# ---------------------------------------------------------------------------

def simplex_volume(vertices) -> float:
    """Euclidean j-volume of the simplex spanned by ``j+1`` points.

    A single point has volume 1 by convention. Degenerate simplices give 0.
    """
    p = np.atleast_2d(np.asarray(vertices, dtype=float))
    j = len(p) - 1
    if j == 0:
        return 1.0
    edges = p[1:] - p[0]
    det = np.linalg.det(edges @ edges.T)
    return math.sqrt(max(det, 0.0)) / math.factorial(j)


def simplex_diameter(vertices) -> float:
    p = np.atleast_2d(np.asarray(vertices, dtype=float))
    if len(p) < 2:
        return 0.0
    diff = p[:, None, :] - p[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def thickness(vertices) -> float:
    """Thickness: min over faces of ``Vol_j / diam**j``.

    Faces of dimension 0 and 1 contribute exactly 1, so points and segments
    have thickness 1 and only faces of dimension >= 2 can lower the value.
    """
    p = np.atleast_2d(np.asarray(vertices, dtype=float))
    return float(thickness_batch(p[None])[0])


def thickness_batch(cells: np.ndarray) -> np.ndarray:
    """Thickness of many simplices of equal dimension, ``cells`` shaped ``(F, k+1, N)``."""
    cells = np.asarray(cells, dtype=float)
    n_cells, n_verts = cells.shape[:2]
    phi = np.ones(n_cells)
    for j in range(2, n_verts):
        for face in itertools.combinations(range(n_verts), j + 1):
            pts = cells[:, face, :]
            vol = _batch_volume(pts)
            diam = _batch_diameter(pts)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(diam > 0, vol / diam ** j, 0.0)
            np.minimum(phi, ratio, out=phi)
    return phi


def _batch_volume(pts: np.ndarray) -> np.ndarray:
    j = pts.shape[1] - 1
    edges = pts[:, 1:, :] - pts[:, :1, :]
    gram = edges @ np.swapaxes(edges, 1, 2)
    det = np.linalg.det(gram)
    return np.sqrt(np.clip(det, 0.0, None)) / math.factorial(j)


def _batch_diameter(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    return np.sqrt((diff ** 2).sum(-1)).reshape(len(pts), -1).max(-1)


def orientation_sign(vertices) -> int:
    """Sign of ``det(p1-p0, ..., pn-p0)`` for ``n+1`` points in n-space; 0 when degenerate."""
    p = np.atleast_2d(np.asarray(vertices, dtype=float))
    n = len(p) - 1
    if p.shape[1] != n:
        raise ValueError(f"need {p.shape[1] + 1} points in {p.shape[1]}-space, got {len(p)}")
    edges = p[1:] - p[0]
    det = np.linalg.det(edges)
    scale = np.prod(np.linalg.norm(edges, axis=1))
    if scale == 0 or abs(det) <= 1e-12 * scale:
        return 0
    return 1 if det > 0 else -1


def permutation_parity(perm: Sequence[int]) -> int:
    """+1 for even permutations, -1 for odd ones."""
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


# ---------------------------------------------------------------------------
# complexes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Pure simplicial complex with realized coordinates.

    ``simplices`` holds the top simplices as ascending index tuples.
    ``orientation[f] = +1`` means the ascending order of simplex ``f`` is the
    coherent orientation, ``-1`` the opposite. ``cell_coords`` optionally
    stores per-simplex coordinates (rows in tuple order), used when the vertex
    table lives in a periodic quotient and each simplex is unwrapped.
    """

    vertices: np.ndarray
    simplices: tuple[tuple[int, ...], ...]
    cell_coords: np.ndarray | None = None
    orientation: tuple[int, ...] | None = None
    colors: tuple[int, ...] | None = None
    vertex_labels: tuple[int, ...] | None = None
    periods: tuple[float | None, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        verts = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "vertices", verts)
        simplices = tuple(tuple(int(i) for i in s) for s in self.simplices)
        object.__setattr__(self, "simplices", simplices)
        dims = {len(s) for s in simplices}
        if len(dims) > 1:
            raise ValueError("complex must be pure (all top simplices of one dimension)")
        for s in simplices:
            if list(s) != sorted(s):
                raise ValueError(f"simplex {s} is not an ascending index tuple")
            if len(set(s)) != len(s):
                raise ValueError(f"simplex {s} repeats a vertex")
            if s and (s[0] < 0 or s[-1] >= len(verts)):
                raise ValueError(f"simplex {s} references a missing vertex")
        if self.cell_coords is not None:
            cc = np.asarray(self.cell_coords, dtype=float)
            if cc.shape[:2] != (len(simplices), self.dim + 1):
                raise ValueError("cell_coords shape does not match simplices")
            object.__setattr__(self, "cell_coords", cc)
        for name in ("orientation", "colors"):
            val = getattr(self, name)
            if val is not None:
                val = tuple(int(x) for x in val)
                if len(val) != len(simplices):
                    raise ValueError(f"{name} needs one entry per top simplex")
                object.__setattr__(self, name, val)

    @classmethod
    def from_faces(cls, vertices, faces, **kwargs) -> "SimplicialComplex":
        """Build from (possibly unsorted) oriented faces, recording each face's orientation."""
        simplices, orientation = [], []
        for face in faces:
            face = [int(i) for i in face]
            order = sorted(range(len(face)), key=face.__getitem__)
            simplices.append(tuple(face[i] for i in order))
            orientation.append(permutation_parity(order))
        return cls(vertices, tuple(simplices), orientation=tuple(orientation), **kwargs)

    # -- basic shape ----------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.simplices[0]) - 1 if self.simplices else -1

    @property
    def ambient_dim(self) -> int:
        if self.cell_coords is not None:
            return self.cell_coords.shape[2]
        return self.vertices.shape[1]

    def __len__(self) -> int:
        return len(self.simplices)

    def cells(self) -> np.ndarray:
        """Realized coordinates of every top simplex, shape ``(F, n+1, N)``."""
        if self.cell_coords is not None:
            return self.cell_coords
        if not self.simplices:
            return np.zeros((0, 0, self.vertices.shape[1]))
        return self.vertices[np.asarray(self.simplices)]

    def faces(self, j: int) -> list[tuple[int, ...]]:
        out: set[tuple[int, ...]] = set()
        for s in self.simplices:
            out.update(itertools.combinations(s, j + 1))
        return sorted(out)

    def euler_characteristic(self) -> int:
        return sum((-1) ** j * len(self.faces(j)) for j in range(self.dim + 1))

    def facet_incidence(self) -> dict[tuple[int, ...], list[int]]:
        """Map each (n-1)-face to the top simplices containing it."""
        inc: dict[tuple[int, ...], list[int]] = {}
        for f, s in enumerate(self.simplices):
            for facet in itertools.combinations(s, len(s) - 1):
                inc.setdefault(facet, []).append(f)
        return inc

    def dual_graph(self) -> list[list[int]]:
        adj: list[set[int]] = [set() for _ in self.simplices]
        for owners in self.facet_incidence().values():
            for a, b in itertools.combinations(owners, 2):
                adj[a].add(b)
                adj[b].add(a)
        return [sorted(a) for a in adj]

    def vertex_star(self) -> list[list[int]]:
        star: list[list[int]] = [[] for _ in range(len(self.vertices))]
        for f, s in enumerate(self.simplices):
            for v in s:
                star[v].append(f)
        return star

    def with_(self, **changes) -> "SimplicialComplex":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# orientation, validity
# ---------------------------------------------------------------------------

def coherent_orientation(cx: SimplicialComplex) -> tuple[int, ...] | None:
    """Orient top simplices so that neighbours induce opposite facet orientations.

    Returns None when no coherent orientation exists. Each connected component
    of the dual graph starts from the simplex's existing sign (or +1).
    """
    if not cx.simplices:
        return ()
    n = cx.dim
    inc = cx.facet_incidence()
    # position of the removed vertex, per (simplex, facet)
    slot: dict[tuple[int, tuple[int, ...]], int] = {}
    for f, s in enumerate(cx.simplices):
        for i in range(n + 1):
            slot[(f, s[:i] + s[i + 1:])] = i
    signs = [0] * len(cx.simplices)
    seed_signs = cx.orientation or (1,) * len(cx.simplices)
    for start in range(len(cx.simplices)):
        if signs[start]:
            continue
        signs[start] = seed_signs[start]
        queue = deque([start])
        while queue:
            f = queue.popleft()
            s = cx.simplices[f]
            for i in range(n + 1):
                facet = s[:i] + s[i + 1:]
                owners = inc[facet]
                if len(owners) != 2:
                    continue
                g = owners[0] if owners[1] == f else owners[1]
                want = -signs[f] * (-1) ** (i + slot[(g, facet)])
                if signs[g] == 0:
                    signs[g] = want
                    queue.append(g)
                elif signs[g] != want:
                    return None
    return tuple(signs)


@dataclass
class PseudomanifoldReport:
    ok: bool
    euler_characteristic: int
    bad_facets: list[tuple[tuple[int, ...], int]]
    connected: bool
    orientable: bool
    bad_links: list[int]
    messages: list[str]


def validate_closed_pseudomanifold(cx: SimplicialComplex) -> PseudomanifoldReport:
    messages = []
    if not cx.simplices:
        return PseudomanifoldReport(False, 0, [], False, False, [], ["empty complex"])
    inc = cx.facet_incidence()
    bad = [(facet, len(owners)) for facet, owners in sorted(inc.items()) if len(owners) != 2]
    if bad:
        messages.append(f"{len(bad)} facets not shared by exactly two simplices, first {bad[0]}")
    dual = cx.dual_graph()
    seen = {0}
    queue = deque([0])
    while queue:
        for g in dual[queue.popleft()]:
            if g not in seen:
                seen.add(g)
                queue.append(g)
    connected = len(seen) == len(cx.simplices)
    if not connected:
        messages.append("dual graph is disconnected")
    orientable = not bad and coherent_orientation(cx) is not None
    if not bad and not orientable:
        messages.append("no coherent orientation")
    bad_links = _bad_vertex_links(cx) if cx.dim == 2 and not bad else []
    if bad_links:
        messages.append(f"vertex links not single cycles at {bad_links[:10]}")
    ok = not bad and connected and orientable and not bad_links
    return PseudomanifoldReport(ok, cx.euler_characteristic(), bad, connected, orientable,
                                bad_links, messages)


def _bad_vertex_links(cx: SimplicialComplex) -> list[int]:
    link_edges: dict[int, list[tuple[int, int]]] = {}
    for s in cx.simplices:
        for v in s:
            a, b = (w for w in s if w != v)
            link_edges.setdefault(v, []).append((a, b))
    bad = []
    for v, edges in sorted(link_edges.items()):
        adj: dict[int, list[int]] = {}
        for a, b in edges:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        if any(len(nb) != 2 for nb in adj.values()):
            bad.append(v)
            continue
        start = next(iter(adj))
        prev, cur, steps = None, start, 0
        while True:
            nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
            prev, cur = cur, nxt
            steps += 1
            if cur == start:
                break
        if steps != len(adj):
            bad.append(v)
    return bad


# ---------------------------------------------------------------------------
# subdivision, even incidence, coloring
# ---------------------------------------------------------------------------

def barycentric_subdivision(cx: SimplicialComplex) -> SimplicialComplex:
    """First barycentric subdivision.

    New vertices are the barycenters of all faces, indexed by face dimension
    first, so every child tuple lists its vertices in flag order. Vertex labels
    record the dimension of the face a vertex subdivides. When the input is
    orientable the children carry the flag-parity chessboard coloring
    (color 0 where the flag order agrees with the coherent orientation).
    """
    n = cx.dim
    orient = coherent_orientation(cx)
    cells = cx.cells()
    new_index: dict[tuple[int, ...], int] = {}
    labels: list[int] = []
    for j in range(n + 1):
        for face in cx.faces(j):
            new_index[face] = len(labels)
            labels.append(j)
    coords = np.zeros((len(labels), cx.ambient_dim))
    have = np.zeros(len(labels), dtype=bool)

    children, child_cells, child_signs = [], [], []
    for f, s in enumerate(cx.simplices):
        cell = cells[f]
        for perm in itertools.permutations(range(n + 1)):
            child, pts = [], []
            for m in range(n + 1):
                idx = sorted(perm[:m + 1])
                face = tuple(s[i] for i in idx)
                v = new_index[face]
                child.append(v)
                pt = cell[idx].mean(axis=0)
                pts.append(pt)
                if not have[v]:
                    coords[v] = pt
                    have[v] = True
            children.append(tuple(child))
            child_cells.append(pts)
            sign = permutation_parity(perm) * (orient[f] if orient else 1)
            child_signs.append(sign)

    if cx.periods is not None:
        coords = wrap_periodic(coords, cx.periods)
    colors = tuple(0 if s > 0 else 1 for s in child_signs) if orient else None
    return SimplicialComplex(
        coords,
        tuple(children),
        cell_coords=np.asarray(child_cells) if cx.cell_coords is not None else None,
        orientation=tuple(child_signs) if orient else None,
        colors=colors,
        vertex_labels=tuple(labels),
        periods=cx.periods,
        meta=dict(cx.meta, subdivided=True),
    )


def wrap_periodic(points: np.ndarray, periods: Sequence[float | None]) -> np.ndarray:
    out = np.array(points, dtype=float, copy=True)
    for axis, period in enumerate(periods):
        if period:
            out[..., axis] = np.mod(out[..., axis], period)
    return out


@dataclass
class EvenIncidenceReport:
    ok: bool
    offending: list[tuple[tuple[int, ...], int]]


def check_even_incidence(cx: SimplicialComplex) -> EvenIncidenceReport:
    """Every (n-2)-face must lie in an even number of top simplices."""
    counts: dict[tuple[int, ...], int] = {}
    n = cx.dim
    for s in cx.simplices:
        for face in itertools.combinations(s, n - 1):
            counts[face] = counts.get(face, 0) + 1
    offending = [(face, c) for face, c in sorted(counts.items()) if c % 2]
    return EvenIncidenceReport(not offending, offending)


def chessboard_coloring(cx: SimplicialComplex) -> tuple[int, ...]:
    """Proper 2-coloring of top simplices across shared (n-1)-faces.

    If the complex already carries colors (flag parity after subdivision),
    they are verified against breadth-first propagation and returned.
    Raises ColoringError with an odd dual cycle otherwise.
    """
    dual = cx.dual_graph()
    colors = [-1] * len(dual)
    parent = [-1] * len(dual)
    depth = [0] * len(dual)
    for start in range(len(dual)):
        if colors[start] >= 0:
            continue
        colors[start] = 0 if cx.colors is None else cx.colors[start]
        queue = deque([start])
        while queue:
            a = queue.popleft()
            for b in dual[a]:
                if colors[b] < 0:
                    colors[b] = 1 - colors[a]
                    parent[b] = a
                    depth[b] = depth[a] + 1
                    queue.append(b)
                elif colors[b] == colors[a]:
                    raise ColoringError(_odd_cycle(a, b, parent, depth))
    if cx.colors is not None and tuple(colors) != cx.colors:
        raise AssertionError("flag-parity coloring disagrees with propagation")
    return tuple(colors)


def _odd_cycle(a: int, b: int, parent: list[int], depth: list[int]) -> list[int]:
    path_a, path_b = [a], [b]
    while depth[path_a[-1]] > depth[path_b[-1]]:
        path_a.append(parent[path_a[-1]])
    while depth[path_b[-1]] > depth[path_a[-1]]:
        path_b.append(parent[path_b[-1]])
    while path_a[-1] != path_b[-1]:
        path_a.append(parent[path_a[-1]])
        path_b.append(parent[path_b[-1]])
    return path_a + path_b[-2::-1]


def vertex_labeling(cx: SimplicialComplex) -> tuple[int, ...]:
    """Label vertices 0..n so that every top simplex sees all labels once.

    Uses existing labels when present; otherwise propagates across facets
    (a facet fixes n labels, so the opposite vertex takes the missing one).
    """
    if cx.vertex_labels is not None:
        return cx.vertex_labels
    n = cx.dim
    labels: dict[int, int] = {}
    full = set(range(n + 1))
    dual = cx.dual_graph()
    done = [False] * len(cx.simplices)
    for start in range(len(cx.simplices)):
        if done[start]:
            continue
        s = cx.simplices[start]
        if not any(v in labels for v in s):
            for i, v in enumerate(s):
                labels[v] = i
        queue = deque([start])
        while queue:
            f = queue.popleft()
            if done[f]:
                continue
            s = cx.simplices[f]
            known = {labels[v] for v in s if v in labels}
            unknown = [v for v in s if v not in labels]
            if len(unknown) == 1:
                missing = full - known
                if len(missing) != 1:
                    raise ColoringError([f])
                labels[unknown[0]] = missing.pop()
            elif unknown:
                continue
            if {labels[v] for v in s} != full:
                raise ColoringError([f])
            done[f] = True
            queue.extend(g for g in dual[f] if not done[g])
    out = [labels.get(v, -1) for v in range(len(cx.vertices))]
    if not all(done):
        raise ColoringError([f for f, d in enumerate(done) if not d][:1])
    return tuple(out)


# ---------------------------------------------------------------------------
# thickness reports and thickening
# ---------------------------------------------------------------------------

@dataclass
class ThicknessReport:
    phi: np.ndarray
    phi_min: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    offending: list[int]
    phi0: float | None = None

    def histogram_rows(self) -> list[tuple[float, float, int]]:
        return [(float(lo), float(hi), int(c)) for lo, hi, c in
                zip(self.hist_edges[:-1], self.hist_edges[1:], self.hist_counts)]

    def summary(self) -> dict:
        return {
            "phi_min": float(self.phi_min),
            "phi_mean": float(self.phi.mean()),
            "phi_max": float(self.phi.max()),
            "n_simplices": int(len(self.phi)),
            "phi0": self.phi0,
            "n_below_phi0": len(self.offending),
        }


def thickness_report(cx: SimplicialComplex, phi0: float | None = None,
                     bins: int = 20) -> ThicknessReport:
    if not cx.simplices:
        raise ValueError("thickness report of an empty complex")
    phi = thickness_batch(cx.cells())
    counts, edges = np.histogram(phi, bins=bins, range=(0.0, 1.0))
    offending = [] if phi0 is None else [int(i) for i in np.flatnonzero(phi < phi0)]
    return ThicknessReport(phi, float(phi.min()), edges, counts, offending, phi0)


@dataclass
class ThickenResult:
    complex: SimplicialComplex
    before: ThicknessReport
    after: ThicknessReport
    accepted: int
    proposals: int
    reached_target: bool
    history: list[float]


def _span_frames(cells: np.ndarray):
    """Orthonormal basis of each simplex's edge span and the orientation sign in it."""
    edges = np.swapaxes(cells[:, 1:, :] - cells[:, :1, :], 1, 2)  # (F, N, k)
    q, r = np.linalg.qr(edges)
    fix = np.sign(np.diagonal(r, axis1=1, axis2=2))
    fix[fix == 0] = 1
    q = q * fix[:, None, :]
    signs = np.sign(np.linalg.det(np.swapaxes(q, 1, 2) @ edges))
    return q, signs


def _signs_in_frames(cells: np.ndarray, frames: np.ndarray) -> np.ndarray:
    edges = np.swapaxes(cells[:, 1:, :] - cells[:, :1, :], 1, 2)
    return np.sign(np.linalg.det(np.swapaxes(frames, 1, 2) @ edges))


def thicken(cx: SimplicialComplex, budget: int, phi_target: float, *,
            max_move: float, seed: int = 0, step: float | None = None,
            project: Callable[[int, np.ndarray], np.ndarray] | None = None) -> ThickenResult:
    """Raise the minimum thickness by moving one vertex at a time.

    Each proposal displaces a single vertex by a random vector inside its
    trust radius; it is accepted only if the minimum thickness over the
    vertex's star strictly increases and no star simplex flips orientation.
    Rejections halve the radius. ``budget`` counts proposals, vertices never
    move farther than ``max_move`` from where they started, and ``project``
    (if given) maps a proposed position back onto a constraint surface.
    """
    before = thickness_report(cx)
    cells = cx.cells().astype(float, copy=True)
    n_cells = len(cells)
    history = [before.phi_min]
    if budget <= 0 or before.phi_min >= phi_target or n_cells == 0:
        return ThickenResult(cx, before, before, 0, 0, before.phi_min >= phi_target, history)

    rng = np.random.default_rng(seed)
    ambient = cells.shape[2]
    occurrences: dict[int, list[tuple[int, int]]] = {}
    for f, s in enumerate(cx.simplices):
        for slot, v in enumerate(s):
            occurrences.setdefault(v, []).append((f, slot))
    movable = sorted(occurrences)
    star = {v: np.array(sorted({f for f, _ in occ})) for v, occ in occurrences.items()}
    origin = {v: cells[occ[0][0], occ[0][1]].copy() for v, occ in occurrences.items()}
    disp = {v: np.zeros(ambient) for v in movable}
    frames, ref_signs = _span_frames(cells)

    edge_len = np.linalg.norm(cells[:, 1:, :] - cells[:, :1, :], axis=-1)
    base = step if step is not None else 0.1 * float(np.median(edge_len))
    base = min(base, max_move)
    radius = {v: base for v in movable}
    phi = thickness_batch(cells)
    floor = 1e-9 * base

    accepted = proposals = 0
    while proposals < budget:
        local = {v: float(phi[star[v]].min()) for v in movable}
        order = [v for v in sorted(movable, key=lambda v: (local[v], v))
                 if local[v] < phi_target and radius[v] > floor]
        if not order:
            break
        for v in order:
            if proposals >= budget:
                break
            proposals += 1
            direction = rng.normal(size=ambient)
            direction /= np.linalg.norm(direction)
            trial_disp = disp[v] + direction * radius[v] * rng.uniform(0.25, 1.0)
            norm = np.linalg.norm(trial_disp)
            if norm > max_move:
                trial_disp *= max_move / norm
            if project is not None:
                trial_disp = project(v, origin[v] + trial_disp) - origin[v]
                if np.linalg.norm(trial_disp) > max_move * (1 + 1e-12):
                    radius[v] *= 0.5
                    continue
            delta = trial_disp - disp[v]
            ids = star[v]
            trial = cells[ids].copy()
            for f, slot in occurrences[v]:
                trial[np.searchsorted(ids, f), slot] += delta
            new_phi = thickness_batch(trial)
            new_signs = _signs_in_frames(trial, frames[ids])
            flipped = (ref_signs[ids] != 0) & (new_signs != ref_signs[ids])
            if new_phi.min() > phi[ids].min() and not flipped.any():
                cells[ids] = trial
                phi[ids] = new_phi
                disp[v] = trial_disp
                accepted += 1
                radius[v] = min(radius[v] * 1.5, base)
                history.append(float(phi.min()))
            else:
                radius[v] *= 0.5
        if phi.min() >= phi_target:
            break

    vertices = cx.vertices.copy()
    for v in movable:
        if cx.cell_coords is None:
            vertices[v] = origin[v] + disp[v]
        else:
            vertices[v] = cx.vertices[v] + disp[v]
    if cx.periods is not None:
        vertices = wrap_periodic(vertices, cx.periods)
    out = cx.with_(vertices=vertices,
                   cell_coords=cells if cx.cell_coords is not None else None)
    after = thickness_report(out)
    return ThickenResult(out, before, after, accepted, proposals,
                         after.phi_min >= phi_target, history)
