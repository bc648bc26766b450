"""Charted surfaces: a rectangular parameter domain with a metric field.

Catalog surfaces are defined symbolically so that the metric, its first and
second partial derivatives, and the embedding are exact. Surfaces given only
by a metric callable fall back to central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

# order of the jet components returned by ``ChartedSurface.jet``
JET_NAMES = ("E", "F", "G", "Eu", "Ev", "Fu", "Fv", "Gu", "Gv", "Evv", "Fuv", "Guu")


class InvalidMetricError(ValueError):
    """The metric is not symmetric positive definite at ``location``."""

    def __init__(self, message: str, location=None):
        super().__init__(message if location is None else f"{message} at {location}")
        self.location = location


@dataclass(frozen=True, eq=False)
class ChartedSurface:
    tag: str
    params: dict
    domain: tuple[tuple[float, float], tuple[float, float]]
    periodic: tuple[bool, bool]
    compact: bool
    topology: str  # "sphere", "torus" or "plane"
    jet_fn: Callable | None = None
    metric_fn: Callable | None = None
    embed_fn: Callable | None = None
    polar: bool = False  # u = domain ends are coordinate poles (v must be periodic)
    fd_step: float = 1e-4
    embed_jac_fn: Callable | None = None
    inverse_fn: Callable | None = None  # embedded point -> chart coordinates
    alt: "ChartedSurface | None" = None  # second chart covering this chart's poles
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        (u0, u1), (v0, v1) = self.domain
        if not (u1 > u0 and v1 > v0):
            raise InvalidMetricError(f"degenerate parameter domain {self.domain}")
        if self.jet_fn is None and self.metric_fn is None:
            raise ValueError("surface needs a metric")
        if self.polar and not self.periodic[1]:
            raise ValueError("polar charts need a periodic second coordinate")

    # -- identification -------------------------------------------------------
    @property
    def surface_id(self) -> str:
        args = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.tag}({args})"

    @property
    def euler_characteristic(self) -> int | None:
        return {"sphere": 2, "torus": 0}.get(self.topology)

    @property
    def periods(self) -> tuple[float | None, float | None]:
        (u0, u1), (v0, v1) = self.domain
        return (u1 - u0 if self.periodic[0] else None,
                v1 - v0 if self.periodic[1] else None)

    @property
    def has_embedding(self) -> bool:
        return self.embed_fn is not None

    # -- evaluation -----------------------------------------------------------
    def jet(self, u, v) -> np.ndarray:
        """Metric components and derivatives, stacked along axis 0 in ``JET_NAMES`` order."""
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        if self.jet_fn is not None:
            vals = self.jet_fn(u, v)
            return np.stack([np.broadcast_to(np.asarray(x, float), u.shape) for x in vals])
        return _fd_jet(self.metric_fn, u, v, self.fd_step)

    def metric(self, u, v) -> np.ndarray:
        """Metric tensor with shape ``(..., 2, 2)``."""
        j = self.jet(u, v)
        E, F, G = j[0], j[1], j[2]
        return np.stack([np.stack([E, F], -1), np.stack([F, G], -1)], -2)

    def embed(self, u, v) -> np.ndarray:
        if self.embed_fn is None:
            raise ValueError(f"{self.surface_id} has no embedding")
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        vals = self.embed_fn(u, v)
        return np.stack([np.broadcast_to(np.asarray(x, float), u.shape) for x in vals], -1)

    def embed_jacobian(self, u, v) -> np.ndarray:
        """``d embed / d(u, v)`` with shape ``(3, 2)``."""
        return np.asarray(self.embed_jac_fn(float(u), float(v)), float)

    def chart_of(self, xyz) -> np.ndarray:
        return np.asarray(self.inverse_fn(*np.asarray(xyz, float)), float)

    def wrap(self, uv) -> np.ndarray:
        """Canonical chart coordinates: periodic reduction, reflection through poles."""
        uv = np.array(uv, dtype=float, copy=True)
        (u0, u1), (v0, v1) = self.domain
        if self.polar:
            span = u1 - u0
            t = np.mod(uv[..., 0] - u0, 2 * span)
            over = t > span
            uv[..., 0] = np.where(over, 2 * span - t, t) + u0
            uv[..., 1] = np.where(over, uv[..., 1] + (v1 - v0) / 2, uv[..., 1])
        for axis, (lo, hi) in enumerate(self.domain):
            if self.periodic[axis]:
                uv[..., axis] = np.mod(uv[..., axis] - lo, hi - lo) + lo
        return uv

    def translates(self, uv) -> np.ndarray:
        """``uv`` shifted by every lattice vector in {-1,0,1}^2 of the periodic axes."""
        uv = np.asarray(uv, float)
        shifts = []
        pu, pv = self.periods
        for a in (-1, 0, 1) if pu else (0,):
            for b in (-1, 0, 1) if pv else (0,):
                shifts.append([a * (pu or 0.0), b * (pv or 0.0)])
        return uv[None, :] + np.asarray(shifts)


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _fd_jet(metric_fn, u, v, h):
    def efg(a, b):
        g = np.asarray(metric_fn(a, b), float)
        return np.stack([g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]])

    c = efg(u, v)
    pu, mu = efg(u + h, v), efg(u - h, v)
    pv, mv = efg(u, v + h), efg(u, v - h)
    du = (pu - mu) / (2 * h)
    dv = (pv - mv) / (2 * h)
    E_vv = (pv[0] - 2 * c[0] + mv[0]) / h ** 2
    G_uu = (pu[2] - 2 * c[2] + mu[2]) / h ** 2
    F_uv = (efg(u + h, v + h)[1] - efg(u + h, v - h)[1]
            - efg(u - h, v + h)[1] + efg(u - h, v - h)[1]) / (4 * h * h)
    return np.stack([c[0], c[1], c[2], du[0], dv[0], du[1], dv[1], du[2], dv[2],
                     E_vv, F_uv, G_uu])


# ---------------------------------------------------------------------------
# symbolic construction
# ---------------------------------------------------------------------------

_u, _v = sp.symbols("u v", real=True)


def _symbolic_surface(tag, params, domain, periodic, compact, topology, E, F, G,
                      embedding=None, polar=False, inverse=None, alt=None) -> ChartedSurface:
    E, F, G = (sp.sympify(x) for x in (E, F, G))
    jet = [E, F, G,
           sp.diff(E, _u), sp.diff(E, _v), sp.diff(F, _u), sp.diff(F, _v),
           sp.diff(G, _u), sp.diff(G, _v),
           sp.diff(E, _v, 2), sp.diff(F, _u, _v), sp.diff(G, _u, 2)]
    jet_fn = sp.lambdify((_u, _v), jet, "numpy")
    embed_fn = jac_fn = None
    if embedding:
        embed_fn = sp.lambdify((_u, _v), list(embedding), "numpy")
        jac = sp.Matrix(embedding).jacobian([_u, _v])
        jac_fn = sp.lambdify((_u, _v), jac.tolist(), "math")
    return ChartedSurface(tag, params, domain, periodic, compact, topology,
                          jet_fn=jet_fn, embed_fn=embed_fn, polar=polar,
                          embed_jac_fn=jac_fn, inverse_fn=inverse, alt=alt)


def _pullback(embedding):
    xu = [sp.diff(c, _u) for c in embedding]
    xv = [sp.diff(c, _v) for c in embedding]
    E = sp.simplify(sum(a * a for a in xu))
    F = sp.simplify(sum(a * b for a, b in zip(xu, xv)))
    G = sp.simplify(sum(b * b for b in xv))
    return E, F, G


def _spheroid_charts(tag, params, a, b, c):
    """Polar chart with poles on the z-axis plus a helper chart with poles on the x-axis."""
    full = ((0.0, math.pi), (0.0, 2 * math.pi))

    def inverse(x, y, z):
        return (math.acos(min(1.0, max(-1.0, z / c))), math.atan2(y / b, x / a) % (2 * math.pi))

    def alt_inverse(x, y, z):
        return (math.acos(min(1.0, max(-1.0, x / a))), math.atan2(z / c, y / b) % (2 * math.pi))

    alt_emb = (a * sp.cos(_u), b * sp.sin(_u) * sp.cos(_v), c * sp.sin(_u) * sp.sin(_v))
    alt = _symbolic_surface(tag + "_alt", params, full, (False, True), True, "sphere",
                            *_pullback(alt_emb), alt_emb, polar=True, inverse=alt_inverse)
    emb = (a * sp.sin(_u) * sp.cos(_v), b * sp.sin(_u) * sp.sin(_v), c * sp.cos(_u))
    return emb, inverse, alt, full


def sphere(R: float = 1.0) -> ChartedSurface:
    """Round sphere in colatitude/longitude coordinates (u, v)."""
    R = float(R)
    emb, inverse, alt, full = _spheroid_charts("sphere", {"R": R}, R, R, R)
    return _symbolic_surface("sphere", {"R": R}, full, (False, True), True, "sphere",
                             R ** 2, 0, R ** 2 * sp.sin(_u) ** 2, emb, polar=True,
                             inverse=inverse, alt=alt)


def ellipsoid(a: float, b: float, c: float) -> ChartedSurface:
    a, b, c = float(a), float(b), float(c)
    params = {"a": a, "b": b, "c": c}
    emb, inverse, alt, full = _spheroid_charts("ellipsoid", params, a, b, c)
    return _symbolic_surface("ellipsoid", params, full, (False, True), True, "sphere",
                             *_pullback(emb), emb, polar=True, inverse=inverse, alt=alt)


def torus(R: float = 2.0, r: float = 1.0) -> ChartedSurface:
    """Torus of revolution; u runs around the tube, v around the axis."""
    R, r = float(R), float(r)
    if not R > r > 0:
        raise InvalidMetricError(f"torus needs R > r > 0, got R={R}, r={r}")
    ring = R + r * sp.cos(_u)
    emb = (ring * sp.cos(_v), ring * sp.sin(_v), r * sp.sin(_u))
    return _symbolic_surface("torus", {"R": R, "r": r}, ((0.0, 2 * math.pi), (0.0, 2 * math.pi)),
                             (True, True), True, "torus", r ** 2, 0, ring ** 2, emb)


def flat_torus(L1: float = 1.0, L2: float = 1.0) -> ChartedSurface:
    L1, L2 = float(L1), float(L2)
    return _symbolic_surface("flat_torus", {"L1": L1, "L2": L2}, ((0.0, L1), (0.0, L2)),
                             (True, True), True, "torus", 1, 0, 1)


def graph_surface(coeffs, domain=((-2.0, 2.0), (-2.0, 2.0))) -> ChartedSurface:
    """Graph ``z = f(x, y)`` of a polynomial given as ``[(i, j, c), ...]`` for ``c x^i y^j``."""
    terms = [(int(i), int(j), float(c)) for i, j, c in coeffs]
    f = sum((c * _u ** i * _v ** j for i, j, c in terms), sp.Integer(0))
    fx, fy = sp.diff(f, _u), sp.diff(f, _v)
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    return _symbolic_surface("graph", {"coeffs": tuple(terms), "domain": domain}, domain,
                             (False, False), False, "plane",
                             1 + fx ** 2, fx * fy, 1 + fy ** 2, (_u, _v, f))


def paraboloid(domain=((-2.0, 2.0), (-2.0, 2.0))) -> ChartedSurface:
    """``z = x^2 + y^2``."""
    return graph_surface([(2, 0, 1.0), (0, 2, 1.0)], domain)


def from_metric_function(metric_fn, domain, periodic=(False, False), *, compact=False,
                         topology="plane", tag="custom", fd_step=1e-4) -> ChartedSurface:
    """Surface given only by ``metric_fn(u, v) -> (..., 2, 2)``; derivatives by central differences."""
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    return ChartedSurface(tag, {}, domain, tuple(periodic), compact, topology,
                          metric_fn=metric_fn, fd_step=fd_step)


CATALOG = {
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "torus": torus,
    "flat_torus": flat_torus,
    "graph": graph_surface,
    "paraboloid": paraboloid,
}


def from_spec(spec: dict) -> ChartedSurface:
    """Build a catalog surface from a JSON-style dict such as ``{"type": "torus", "R": 2, "r": 1}``."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind not in CATALOG:
        raise ValueError(f"unknown surface type {kind!r}; expected one of {sorted(CATALOG)}")
    if "domain" in spec:
        spec["domain"] = tuple(tuple(x) for x in spec["domain"])
    try:
        return CATALOG[kind](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from exc
