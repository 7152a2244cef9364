"""Parametric immersions with exact Jacobians, charts, and point samplers.

The manifold is represented purely through charts plus a deterministic
sampler; every construction downstream is local, so no global topology
data is kept.  Chart ``eval``/``jacobian`` callables are vectorized over
leading axes: coords of shape (..., m) map to (..., n) and (..., n, m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, RankDeficient, UnknownEntry
from .geometry import Isometry, Subspace

RANK_TOL = 1e-8


@dataclass
class Chart:
    """One parameter patch: an axis-aligned box plus evaluation maps.

    ``inside`` optionally restricts the valid set to a subregion of the box
    (e.g. a disk); ``periodic`` axes identify coords modulo the box length.
    ``sample_lo``/``sample_hi`` bound the window the sampler draws from,
    kept away from non-periodic boundaries.
    """

    lo: np.ndarray
    hi: np.ndarray
    eval: callable
    jacobian: callable
    periodic: tuple = ()
    inside: callable = None
    sample_lo: np.ndarray = None
    sample_hi: np.ndarray = None

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        m = self.lo.shape[0]
        if not self.periodic:
            self.periodic = (False,) * m
        if self.sample_lo is None:
            self.sample_lo = self.lo.copy()
        if self.sample_hi is None:
            self.sample_hi = self.hi.copy()
        self.sample_lo = np.asarray(self.sample_lo, dtype=float)
        self.sample_hi = np.asarray(self.sample_hi, dtype=float)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def contains(self, coords) -> np.ndarray:
        """Vectorized membership in the valid set (box and mask, with wraps)."""
        c = np.asarray(coords, dtype=float)
        ok = np.ones(c.shape[:-1], dtype=bool)
        for d in range(self.dim):
            if not self.periodic[d]:
                ok &= (c[..., d] >= self.lo[d]) & (c[..., d] <= self.hi[d])
        if self.inside is not None:
            ok &= self.inside(c)
        return ok

    def wrap(self, coords) -> np.ndarray:
        """Fold periodic axes back into [lo, hi)."""
        c = np.array(coords, dtype=float)
        for d in range(self.dim):
            if self.periodic[d]:
                span = self.hi[d] - self.lo[d]
                c[..., d] = np.mod(c[..., d] - self.lo[d], span) + self.lo[d]
        return c


@dataclass(frozen=True)
class ParamPoint:
    """A point of the manifold: chart index plus chart coordinates."""

    chart: int
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "coords", np.asarray(self.coords, dtype=float).reshape(-1)
        )


@dataclass
class ParamImmersion:
    """Evaluable immersion f: M^m -> R^n given by charts and a sampler."""

    name: str
    params: dict
    m: int
    n: int
    charts: list
    sample_per_axis: int = 64
    locate: callable = None  # ambient point -> ParamPoint in another chart
    _sigma_cache: float = field(default=None, repr=False)
    _bbox_cache: float = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.n - self.m

    def point(self, chart: int, coords) -> ParamPoint:
        p = ParamPoint(chart, coords)
        if not (0 <= chart < len(self.charts)):
            raise InvalidParams(f"chart index {chart} out of range")
        if not bool(self.charts[chart].contains(p.coords)):
            raise InvalidParams(f"coords {p.coords} outside chart {chart}")
        return p

    def eval(self, p: ParamPoint) -> np.ndarray:
        return np.asarray(self.charts[p.chart].eval(p.coords), dtype=float)

    def jacobian(self, p: ParamPoint) -> np.ndarray:
        return np.asarray(self.charts[p.chart].jacobian(p.coords), dtype=float)

    def eval_chart(self, chart: int, coords) -> np.ndarray:
        return np.asarray(self.charts[chart].eval(coords), dtype=float)

    def jacobian_chart(self, chart: int, coords) -> np.ndarray:
        return np.asarray(self.charts[chart].jacobian(coords), dtype=float)

    def sample_points(self, per_axis: int = None) -> list:
        """Deterministic grid sample covering the represented portion of M."""
        per_axis = per_axis or self.sample_per_axis
        out = []
        for ci, chart in enumerate(self.charts):
            axes = []
            for d in range(chart.dim):
                lo, hi = chart.sample_lo[d], chart.sample_hi[d]
                if chart.periodic[d]:
                    axes.append(lo + (hi - lo) * np.arange(per_axis) / per_axis)
                else:
                    axes.append(np.linspace(lo, hi, per_axis))
            mesh = np.meshgrid(*axes, indexing="ij")
            coords = np.stack([g.ravel() for g in mesh], axis=-1)
            keep = chart.contains(coords)
            for c in coords[keep]:
                out.append(ParamPoint(ci, c))
        return out

    def sigma_bound(self) -> float:
        """Cached bound on the Jacobian's largest singular value over samples."""
        if self._sigma_cache is None:
            worst = 0.0
            for ci, chart in enumerate(self.charts):
                pts = [p for p in self.sample_points(per_axis=17) if p.chart == ci]
                if not pts:
                    continue
                coords = np.stack([p.coords for p in pts])
                jac = self.jacobian_chart(ci, coords)
                svals = np.linalg.svd(jac, compute_uv=False)
                worst = max(worst, float(svals[..., 0].max()))
            self._sigma_cache = worst * 1.25
        return self._sigma_cache

    def ambient_bbox_diag(self) -> float:
        """Cached bounding-box diagonal of the sampled image, for radius scales."""
        if self._bbox_cache is None:
            pts = self.sample_points(per_axis=17)
            amb = np.stack([self.eval(p) for p in pts])
            diag = float(np.linalg.norm(amb.max(axis=0) - amb.min(axis=0)))
            self._bbox_cache = diag if diag > 0 else 1.0
        return self._bbox_cache

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": {k: v for k, v in self.params.items() if np.isscalar(v)},
            "m": self.m,
            "n": self.n,
            "charts": len(self.charts),
            "sample_per_axis": self.sample_per_axis,
        }


def tangent_space(f: ParamImmersion, p: ParamPoint) -> Subspace:
    """Column span of the Jacobian at p, orthonormalized.

    Raises RankDeficient when the smallest singular value drops to the
    immersion tolerance: the map is not an immersion there.
    """
    jac = f.jacobian(p)
    svals = np.linalg.svd(jac, compute_uv=False)
    if svals.min() <= RANK_TOL:
        raise RankDeficient(
            f"Jacobian nearly rank-deficient at {p} (sigma_min={svals.min():.3e})"
        )
    return Subspace.from_span(jac)


@dataclass(frozen=True)
class ZooEntry:
    name: str
    defaults: dict
    builder: callable


def _require(cond: bool, message: str):
    if not cond:
        raise InvalidParams(message)


def _build_flat(params) -> ParamImmersion:
    m, k = int(params["m"]), int(params["k"])
    extent = float(params["extent"])
    _require(m >= 1 and k >= 1, "flat needs m >= 1 and k >= 1")
    _require(m <= 4, "flat supports m <= 4")
    _require(extent > 0, "flat extent must be positive")
    n = m + k

    def ev(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (n,))
        out[..., :m] = x
        return out

    jac_block = np.zeros((n, m))
    jac_block[:m, :m] = np.eye(m)

    def jac(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(jac_block, x.shape[:-1] + (n, m)).copy()

    chart = Chart(
        lo=-extent * np.ones(m),
        hi=extent * np.ones(m),
        eval=ev,
        jacobian=jac,
        sample_lo=-np.ones(m),
        sample_hi=np.ones(m),
    )
    return ParamImmersion("flat", dict(params), m, n, [chart])


def _build_circle(params) -> ParamImmersion:
    radius = float(params["R"])
    _require(radius > 0, "circle needs R > 0")

    def ev(x):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.stack([radius * np.cos(t), radius * np.sin(t)], axis=-1)

    def jac(x):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.stack([-radius * np.sin(t), radius * np.cos(t)], axis=-1)[..., None]

    chart = Chart(
        lo=np.array([-math.pi]),
        hi=np.array([math.pi]),
        eval=ev,
        jacobian=jac,
        periodic=(True,),
    )
    return ParamImmersion("circle", dict(params), 1, 2, [chart])


def _build_sphere2(params) -> ParamImmersion:
    radius = float(params["R"])
    _require(radius > 0, "sphere2 needs R > 0")
    cap = 0.9 * radius  # chart disk radius; any point has off-axis norm <= 0.817 R

    charts = []
    axes_signs = [(i, s) for i in range(3) for s in (+1.0, -1.0)]

    def make(axis, sign):
        j, l = (axis + 1) % 3, (axis + 2) % 3

        def ev(x):
            x = np.asarray(x, dtype=float)
            a, b = x[..., 0], x[..., 1]
            out = np.zeros(x.shape[:-1] + (3,))
            out[..., j] = a
            out[..., l] = b
            out[..., axis] = sign * np.sqrt(radius**2 - a * a - b * b)
            return out

        def jac(x):
            x = np.asarray(x, dtype=float)
            a, b = x[..., 0], x[..., 1]
            root = np.sqrt(radius**2 - a * a - b * b)
            out = np.zeros(x.shape[:-1] + (3, 2))
            out[..., j, 0] = 1.0
            out[..., l, 1] = 1.0
            out[..., axis, 0] = -sign * a / root
            out[..., axis, 1] = -sign * b / root
            return out

        def inside(x):
            x = np.asarray(x, dtype=float)
            return x[..., 0] ** 2 + x[..., 1] ** 2 < cap**2

        return Chart(
            lo=-cap * np.ones(2),
            hi=cap * np.ones(2),
            eval=ev,
            jacobian=jac,
            inside=inside,
        )

    for axis, sign in axes_signs:
        charts.append(make(axis, sign))

    def locate(ambient, exclude=None):
        p = np.asarray(ambient, dtype=float)
        order = np.argsort(-np.abs(p))
        for axis in order:
            for sign in (+1.0, -1.0):
                ci = 2 * axis + (0 if sign > 0 else 1)
                if ci == exclude:
                    continue
                if sign * p[axis] <= 0:
                    continue
                j, l = (axis + 1) % 3, (axis + 2) % 3
                coords = np.array([p[j], p[l]])
                if coords @ coords < (0.88 * radius) ** 2:
                    return ParamPoint(ci, coords)
        return None

    return ParamImmersion("sphere2", dict(params), 2, 3, charts, locate=locate)


def _build_torus(params) -> ParamImmersion:
    major, minor = float(params["R_maj"]), float(params["r_min"])
    _require(minor > 0 and major > minor, "torus needs R_maj > r_min > 0")

    def ev(x):
        x = np.asarray(x, dtype=float)
        th, ph = x[..., 0], x[..., 1]
        w = major + minor * np.cos(ph)
        return np.stack([w * np.cos(th), w * np.sin(th), minor * np.sin(ph)], axis=-1)

    def jac(x):
        x = np.asarray(x, dtype=float)
        th, ph = x[..., 0], x[..., 1]
        w = major + minor * np.cos(ph)
        out = np.zeros(x.shape[:-1] + (3, 2))
        out[..., 0, 0] = -w * np.sin(th)
        out[..., 1, 0] = w * np.cos(th)
        out[..., 0, 1] = -minor * np.sin(ph) * np.cos(th)
        out[..., 1, 1] = -minor * np.sin(ph) * np.sin(th)
        out[..., 2, 1] = minor * np.cos(ph)
        return out

    chart = Chart(
        lo=np.array([-math.pi, -math.pi]),
        hi=np.array([math.pi, math.pi]),
        eval=ev,
        jacobian=jac,
        periodic=(True, True),
    )
    return ParamImmersion("torus", dict(params), 2, 3, [chart])


def _build_helix(params) -> ParamImmersion:
    pitch = float(params["pitch"])
    window = float(params["window"])
    margin = float(params["margin"])
    _require(window > 0 and margin > 0, "helix needs window > 0 and margin > 0")

    def ev(x):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.stack([np.cos(t), np.sin(t), pitch * t], axis=-1)

    def jac(x):
        t = np.asarray(x, dtype=float)[..., 0]
        ones = np.ones_like(t)
        return np.stack([-np.sin(t), np.cos(t), pitch * ones], axis=-1)[..., None]

    half = window + margin
    chart = Chart(
        lo=np.array([-half]),
        hi=np.array([half]),
        eval=ev,
        jacobian=jac,
        sample_lo=np.array([-window]),
        sample_hi=np.array([window]),
    )
    return ParamImmersion("helix", dict(params), 1, 3, [chart])


def _build_graph_of(params) -> ParamImmersion:
    """Graph of a height function over a box in R^m (codimension one).

    By default the height is the paraboloid coeff * |x|^2 / 2; library users
    may instead pass callables ``height`` and ``height_grad``.
    """
    m = int(params["m"])
    extent = float(params["extent"])
    window = float(params["window"])
    _require(m >= 1, "graph_of needs m >= 1")
    _require(m <= 4, "graph_of supports m <= 4")
    _require(extent > window > 0, "graph_of needs extent > window > 0")
    height = params.get("height")
    grad = params.get("height_grad")
    if height is None:
        coeff = float(params["coeff"])

        def height(x):
            x = np.asarray(x, dtype=float)
            return 0.5 * coeff * (x * x).sum(axis=-1)

        def grad(x):
            return coeff * np.asarray(x, dtype=float)

    elif grad is None:
        raise InvalidParams("graph_of with a custom height needs height_grad")
    n = m + 1

    def ev(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (n,))
        out[..., :m] = x
        out[..., m] = height(x)
        return out

    def jac(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (n, m))
        out[..., :m, :] = np.eye(m)
        out[..., m, :] = grad(x)
        return out

    chart = Chart(
        lo=-extent * np.ones(m),
        hi=extent * np.ones(m),
        eval=ev,
        jacobian=jac,
        sample_lo=-window * np.ones(m),
        sample_hi=window * np.ones(m),
    )
    return ParamImmersion("graph_of", dict(params), m, n, [chart])


def _build_wiggle(params) -> ParamImmersion:
    """Plane curve t -> (t, eps * sin(2 pi t / delta)): a C0-small but
    arbitrarily steep height over the horizontal axis.

    The parameter interval keeps a wide margin beyond the sampling window
    so components never touch the boundary at the radii of interest.
    """
    eps = float(params["eps"])
    delta = float(params["delta"])
    window = float(params["window"])
    margin = float(params["margin"])
    _require(eps >= 0, "wiggle needs eps >= 0")
    _require(delta > 0, "wiggle needs delta > 0")
    _require(window > 0 and margin > 0, "wiggle needs window > 0 and margin > 0")
    omega = 2.0 * math.pi / delta

    def ev(x):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.stack([t, eps * np.sin(omega * t)], axis=-1)

    def jac(x):
        t = np.asarray(x, dtype=float)[..., 0]
        ones = np.ones_like(t)
        return np.stack([ones, eps * omega * np.cos(omega * t)], axis=-1)[..., None]

    half = window + margin
    chart = Chart(
        lo=np.array([-half]),
        hi=np.array([half]),
        eval=ev,
        jacobian=jac,
        sample_lo=np.array([-window]),
        sample_hi=np.array([window]),
    )
    return ParamImmersion("wiggle", dict(params), 1, 2, [chart])


ZOO = {
    "flat": ZooEntry("flat", {"m": 1, "k": 1, "extent": 2100.0}, _build_flat),
    "circle": ZooEntry("circle", {"R": 1.0}, _build_circle),
    "sphere2": ZooEntry("sphere2", {"R": 1.0}, _build_sphere2),
    "torus": ZooEntry("torus", {"R_maj": 2.0, "r_min": 0.5}, _build_torus),
    "helix": ZooEntry(
        "helix", {"pitch": 1.0, "window": 4.0 * math.pi, "margin": 10.0}, _build_helix
    ),
    "graph_of": ZooEntry(
        "graph_of", {"m": 2, "coeff": 1.0, "extent": 4.0, "window": 1.0},
        _build_graph_of,
    ),
    "wiggle": ZooEntry(
        "wiggle", {"eps": 1e-6, "delta": 1e-7, "window": 0.5, "margin": 5.0},
        _build_wiggle,
    ),
}


def zoo_build(name: str, params: dict = None) -> ParamImmersion:
    """Build a named zoo immersion, validating parameters."""
    if name not in ZOO:
        raise UnknownEntry(f"unknown zoo entry {name!r}; have {sorted(ZOO)}")
    entry = ZOO[name]
    merged = dict(entry.defaults)
    extra_ok = {"height", "height_grad", "sample_per_axis"}
    for key, value in (params or {}).items():
        if key not in entry.defaults and key not in extra_ok:
            raise InvalidParams(f"unknown parameter {key!r} for entry {name!r}")
        merged[key] = value
    immersion = entry.builder(merged)
    if "sample_per_axis" in merged:
        immersion.sample_per_axis = int(merged["sample_per_axis"])
    return immersion


def transform_immersion(f: ParamImmersion, iso: Isometry) -> ParamImmersion:
    """Compose the immersion with a rigid motion of the ambient space."""
    if iso.dim != f.n:
        raise InvalidParams("isometry dimension does not match the immersion")

    def wrap_chart(chart: Chart) -> Chart:
        def ev(x):
            return iso.apply(chart.eval(x))

        def jac(x):
            return np.einsum("ij,...jl->...il", iso.rotation, chart.jacobian(x))

        return Chart(
            lo=chart.lo,
            hi=chart.hi,
            eval=ev,
            jacobian=jac,
            periodic=chart.periodic,
            inside=chart.inside,
            sample_lo=chart.sample_lo,
            sample_hi=chart.sample_hi,
        )

    locate = None
    if f.locate is not None:
        inv = iso.inverse()

        def locate(ambient, exclude=None):
            return f.locate(inv.apply(ambient), exclude=exclude)

    out = ParamImmersion(
        f.name,
        dict(f.params, transformed=True),
        f.m,
        f.n,
        [wrap_chart(c) for c in f.charts],
        sample_per_axis=f.sample_per_axis,
        locate=locate,
    )
    return out


def scale_immersion(f: ParamImmersion, c: float) -> ParamImmersion:
    """The immersion c * f (same parameter domain, scaled image)."""
    if c <= 0:
        raise InvalidParams("scale factor must be positive")

    def wrap_chart(chart: Chart) -> Chart:
        def ev(x):
            return c * np.asarray(chart.eval(x), dtype=float)

        def jac(x):
            return c * np.asarray(chart.jacobian(x), dtype=float)

        return Chart(
            lo=chart.lo,
            hi=chart.hi,
            eval=ev,
            jacobian=jac,
            periodic=chart.periodic,
            inside=chart.inside,
            sample_lo=chart.sample_lo,
            sample_hi=chart.sample_hi,
        )

    locate = None
    if f.locate is not None:

        def locate(ambient, exclude=None):
            return f.locate(np.asarray(ambient, dtype=float) / c, exclude=exclude)

    return ParamImmersion(
        f.name,
        dict(f.params, scaled_by=c),
        f.m,
        f.n,
        [wrap_chart(ch) for ch in f.charts],
        sample_per_axis=f.sample_per_axis,
        locate=locate,
    )
