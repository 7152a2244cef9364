"""Numerical checks of the regularity statements and the counterexample.

The centerpiece: a small enough height bound on all local graphs forces a
small slope bound, with the explicit threshold 1e-5 / m^2.  This module
measures both maximal radii and compares them bracket-aware, checks the
radius-enlargement and component-inclusion statements, replays the
probe-point construction as a derivative-bound certifier, and analyzes
the steep-wiggle counterexample for graphs over freely chosen lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Inconclusive, InvalidParams, PreconditionViolated, ProbeHypothesisFailed
from .extractor import (
    FrameContext,
    _extract_on_region,
    _solve_batch,
    _SOLVE_OK,
    component,
    norms,
)
from .geometry import Subspace, graph_matrix_from_probes, subspace_graph_matrix
from .radius import (
    KIND_C0,
    KIND_C1,
    RadiusReport,
    default_grid,
    is_r_lambda,
    max_radius,
)
from .zoo import ParamImmersion, ParamPoint, tangent_space, zoo_build


def lambda_cap(m: int) -> float:
    """Height-bound threshold below which the regularity statement applies."""
    if m < 1:
        raise ValueError("intrinsic dimension must be at least 1")
    return 1e-5 / (m * m)


@dataclass
class TheoremVerdict:
    """Bracket-aware comparison of the two maximal radii."""

    lam: float
    cap: float
    r0: RadiusReport
    r1_scaled: RadiusReport
    margin: float
    holds: bool

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "cap": self.cap,
            "r0": self.r0.to_dict(),
            "r1_scaled": self.r1_scaled.to_dict(),
            "margin": self.margin,
            "holds": self.holds,
        }


def verify_main_theorem(f: ParamImmersion, lam: float, Q, tol: float = 1e-3,
                        N: int = None, threads: int = 1) -> TheoremVerdict:
    """Measure r0 at the height bound and r1 at the lifted slope bound.

    Holds when the scaled slope radius reaches the height radius up to the
    combined bracket widths.  Unbounded sentinels compare as infinite.
    """
    cap = lambda_cap(f.m)
    if lam > cap * (1 + 1e-12):
        raise PreconditionViolated(
            f"height bound {lam:.3e} exceeds the threshold {cap:.3e}"
        )
    r0 = max_radius(f, lam, KIND_C0, Q, tol=tol, N=N, threads=threads)
    r1 = max_radius(f, lam / cap, KIND_C1, Q, tol=tol, N=N, threads=threads)
    if r1.unbounded:
        margin = float("inf")
        holds = True
    elif r0.unbounded:
        margin = float("-inf")
        holds = False
    else:
        margin = r1.r_lo - r0.r_hi
        holds = margin >= -(r0.width() + r1.width())
    return TheoremVerdict(lam, cap, r0, r1, margin, holds)


def check_enlargement(f: ParamImmersion, r: float, lam: float, Q,
                      N: int = None, threads: int = 1) -> bool:
    """Graph property at (r, lam) lifts to (7r/4, 8 sqrt(m) lam).

    Requires lam <= 1 / (8 sqrt(m)) and the base property to hold; both
    are verified and a failure raises PreconditionViolated.
    """
    bound = 1.0 / (8.0 * math.sqrt(f.m))
    if lam > bound * (1 + 1e-12):
        raise PreconditionViolated(
            f"slope bound {lam:.6g} exceeds 1/(8 sqrt(m)) = {bound:.6g}"
        )
    base = is_r_lambda(f, r, lam, Q, N=N, threads=threads)
    if base.inconclusive:
        raise Inconclusive(base.reason)
    if not base.holds:
        raise PreconditionViolated(
            f"hypothesis fails: no ({r:.6g}, {lam:.6g}) graph property "
            f"({base.reason})"
        )
    lifted = is_r_lambda(f, 1.75 * r, 8.0 * math.sqrt(f.m) * lam, Q, N=N,
                         threads=threads)
    if lifted.inconclusive:
        raise Inconclusive(lifted.reason)
    return lifted.holds


def _verify_c0_at(f, q, r, lam, N) -> FrameContext:
    """Check the continuous-graph property at one base point; return its ctx."""
    ctx = FrameContext.at(f, q, r)
    region = component(ctx, refine_check=False)
    sample = _extract_on_region(ctx, region, N)
    counts = sample.status_counts()
    if counts["multi_sheet"] or counts["uncovered"]:
        raise PreconditionViolated(
            f"no continuous graph at the base point: {counts}"
        )
    est = norms(sample)
    if est.c0 > r * lam:
        raise PreconditionViolated(
            f"height bound fails at the base point: {est.c0:.6g} > {r * lam:.6g}"
        )
    return ctx


def _subsample(items: list, count: int) -> list:
    if len(items) <= count:
        return items
    step = len(items) / count
    return [items[int(i * step)] for i in range(count)]


def check_distance_bound(f: ParamImmersion, q: ParamPoint, rho: float,
                         r: float, lam: float, num_pairs: int = 64,
                         N: int = None) -> bool:
    """Points of the rho-component stay within rho + r*lam of the base image.

    Grid slack of one cell (in ambient units) is allowed on top of the
    stated bound, since sampled points are cell centers.
    """
    if not 0 < rho <= r:
        raise ValueError("need 0 < rho <= r")
    N = N or default_grid(f.m)
    _verify_c0_at(f, q, r, lam, N)
    ctx_rho = FrameContext.at(f, q, rho)
    region = component(ctx_rho, refine_check=False)
    fq = f.eval(q)
    bound = rho + r * lam
    slack = region.h * region.sigma_max
    for chart, block in region.blocks.items():
        centers = _subsample(list(block.center), max(2, num_pairs // max(1, len(region.blocks))))
        amb = f.eval_chart(chart, np.stack(centers))
        dist = np.linalg.norm(amb - fq, axis=1)
        if (dist >= bound + slack).any():
            return False
    return True


def check_inclusion(f: ParamImmersion, q: ParamPoint, r: float, lam: float,
                    num_points: int = 12, N: int = None) -> bool:
    """The (2r/5)-component of q sits inside the r-component of each of its
    points, compared cell-by-cell on a shared parameter grid.

    Requires lam <= 1/10.  Membership tolerates a one-cell halo: sampled
    cells are compared through their centers.
    """
    if lam > 0.1 * (1 + 1e-12):
        raise PreconditionViolated(f"slope bound {lam:.6g} exceeds 1/10")
    ctx_q = FrameContext.at(f, q, 0.4 * r)
    region_q = component(ctx_q, refine_check=False)
    h_shared = region_q.h
    seeds = []
    for chart, block in region_q.blocks.items():
        seeds.extend(ParamPoint(chart, c) for c in block.center)
    for p in _subsample(seeds, num_points):
        ctx_p = FrameContext.at(f, p, r)
        region_p = component(ctx_p, h=h_shared, refine_check=False)
        for chart, block in region_q.blocks.items():
            inside = region_p.contains(chart, block.center, halo=1)
            if not inside.all():
                return False
    return True


@dataclass
class CertifiedDuBound:
    """Per-node certified slope bounds from the probe-point construction."""

    rho: float
    per_node: list  # (x, certified_bound, actual_lip)
    global_bound: float

    def max_actual(self) -> float:
        return max(a for _, _, a in self.per_node)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "global_bound": self.global_bound,
            "nodes": len(self.per_node),
            "max_certified": max(c for _, c, _ in self.per_node),
            "max_actual": self.max_actual(),
        }

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            m = len(self.per_node[0][0])
            writer.writerow([f"x{i + 1}" for i in range(m)]
                            + ["certified_bound", "actual_lip"])
            for x, cert, act in self.per_node:
                writer.writerow([f"{v:.17g}" for v in x]
                                + [f"{cert:.17g}", f"{act:.17g}"])


def certify_du_bound(f: ParamImmersion, q: ParamPoint, r: float, lam: float,
                     nodes_per_rho: int = 4, N: int = None) -> CertifiedDuBound:
    """Certify the slope bound on the fifth-radius ball via probe points.

    For each grid point x of the inner ball, the parameters under x and
    under the axis-shifted points x + rho e_j are located, the shifted
    images are projected orthogonally onto the affine tangent plane at the
    point under x, and the normalized projections feed the probe-point
    slope certificate with L = 8^-3 m^-1.5 lam / cap.  All computations
    happen in the base-point frame.  The certificate must succeed at every
    node when lam is below the threshold; a failed probe hypothesis is
    reported with its node and axis.
    """
    m, k = f.m, f.k
    cap = lambda_cap(m)
    if lam > cap * (1 + 1e-12):
        raise PreconditionViolated(
            f"height bound {lam:.3e} exceeds the threshold {cap:.3e}"
        )
    N = N or default_grid(m)
    ctx = _verify_c0_at(f, q, r, lam, N)

    rho = r / 5.0
    s = int(nodes_per_rho)
    if s < 2:
        raise ValueError("need at least 2 nodes per rho")
    delta = rho / s
    rho_eff = s * delta
    bound_l = (8.0 ** -3) * m ** -1.5 * lam / cap

    # Integer node lattice: base nodes inside B_rho plus their axis shifts.
    ranges = [np.arange(-(s - 1), s) for _ in range(m)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    base_idx = np.stack([g.ravel() for g in mesh], axis=-1)
    base_idx = base_idx[np.linalg.norm(base_idx * delta, axis=1) < rho]
    shifts = (s * np.eye(m, dtype=int))[None, :, :]
    probe_idx = (base_idx[:, None, :] + shifts).reshape(-1, m)
    all_idx = np.unique(np.concatenate([base_idx, probe_idx]), axis=0)

    ctx2 = FrameContext(f, q, ctx.iso, 2.2 * rho)
    region = component(ctx2, refine_check=False)
    solve_order = np.argsort(np.abs(all_idx).max(axis=1), kind="stable")
    solved = {}
    params = {}
    for row in solve_order:
        idx = all_idx[row]
        x = idx * delta
        if not solved:
            seed_chart, seed_coords = q.chart, q.coords
        else:
            best = min(solved, key=lambda t: np.abs(np.array(t) - idx).sum())
            seed_chart, seed_coords = params[best]
        st, cc, px, hh = _solve_batch(
            ctx2, region, x[None, :], np.array([seed_chart]),
            np.asarray(seed_coords, dtype=float)[None, :],
        )
        if st[0] != _SOLVE_OK:
            raise PreconditionViolated(
                f"could not locate the parameter under node {x}"
            )
        key = tuple(int(v) for v in idx)
        solved[key] = True
        params[key] = (int(cc[0]), px[0])

    def frame_point(key):
        chart, coords = params[key]
        return ctx.iso.inverse_apply(f.eval_chart(chart, coords))

    per_node = []
    for idx in base_idx:
        key = tuple(int(v) for v in idx)
        x = idx * delta
        chart, coords = params[key]
        plane = tangent_space(f, ParamPoint(chart, coords))
        framed = Subspace(ctx.iso.rotation.T @ plane.basis)
        fp = frame_point(key)
        probes = []
        for j in range(m):
            pkey = tuple(int(v) for v in (idx + s * np.eye(m, dtype=int)[j]))
            w = frame_point(pkey) - fp
            proj = framed.basis @ (framed.basis.T @ w)
            probes.append(proj / rho_eff)
        try:
            cert = graph_matrix_from_probes(framed, probes, bound_l)
        except PreconditionViolated as exc:
            raise ProbeHypothesisFailed(
                node=x, probe_index=exc.index,
                message=f"probe hypothesis failed at x={x}: {exc}",
            ) from exc
        direct = subspace_graph_matrix(framed)
        actual = direct.norm if direct is not None else float("inf")
        per_node.append((x, cert.norm, actual))

    return CertifiedDuBound(rho=rho_eff, per_node=per_node,
                            global_bound=bound_l)


def iteration_constant_check() -> bool:
    """Arithmetic of the three-step radius enlargement pipeline.

    Three enlargements scale the radius by (7/4)^3 > 5 and the slope by
    (8 sqrt(m))^3, which exactly cancels the certified starting slope
    8^-3 m^-1.5, so a fifth-radius certificate lifts to the full radius.
    """
    ratio = (7.0 / 4.0) ** 3
    ok = ratio == 5.359375 and ratio > 5.0
    ok = ok and ratio / 5.0 >= 1.0
    for m in (1, 2, 3, 10):
        root = math.sqrt(m)
        lift = (8.0 * root) ** 3 * 8.0 ** -3 * m ** -1.5
        ok = ok and abs(lift - 1.0) <= 1e-12
        start = 8.0 ** -3 * m ** -1.5  # slope certificate at the threshold
        for step in range(3):
            slope = start * (8.0 * root) ** step
            ok = ok and slope <= 1.0 / (8.0 * root) * (1 + 1e-12)
    return bool(ok)


@dataclass
class CounterexampleReport:
    """Outcome of the free-line graph analysis of the steep wiggle curve."""

    epsilon: float
    delta: float
    r: float
    lambda_gen: float
    min_over_angles_max_slope: float
    verdict: bool
    angle_count: int

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "r": self.r,
            "lambda_gen": self.lambda_gen,
            "min_over_angles_max_slope": self.min_over_angles_max_slope,
            "verdict": self.verdict,
            "angle_count": self.angle_count,
        }


def analyze_counterexample(eps: float, delta: float, r: float,
                           angle_grid: int = 4096) -> CounterexampleReport:
    """Height-small wiggle curve: graphs over freely chosen lines stay steep.

    Over the horizontal line through any sampled point, the curve is a
    graph with heights at most 2 eps, so the generalized height constant
    is about 2 eps / r.  Sweeping all line angles, every angle admitting a
    graph at all forces a maximal slope of at least the horizontal value
    2 pi eps / delta.  The counterexample is demonstrated when the height
    constant is below the threshold while no line achieves a slope within
    the lifted budget.

    Slope and fold structure are periodic in the parameter, so one finely
    sampled period decides each angle (the window spans many periods).
    """
    if eps < 0 or delta <= 0 or r <= 0:
        raise InvalidParams("need eps >= 0, delta > 0, r > 0")
    if delta > r / 100.0:
        raise InvalidParams("the oscillation period must be well below r")
    if angle_grid < 8:
        raise InvalidParams("angle grid too coarse")

    crest = delta / 4.0
    omega = 2.0 * math.pi / delta
    steep = eps * omega

    wig = zoo_build(
        "wiggle",
        {"eps": eps, "delta": delta,
         "window": max(1.5 * r, 100.0 * delta), "margin": max(1.0, 10.0 * r)},
    )

    def height(t):
        return wig.eval_chart(0, np.asarray(t, dtype=float)[:, None])[:, 1]

    # Generalized height constant over horizontal lines, sampled q's in one
    # period around the crest, offsets sampled over one period (r >> delta).
    qs = crest + delta * np.linspace(-0.5, 0.5, 65)
    offs = delta * np.arange(256) / 256.0
    hq = height(qs)
    lambda_gen = 0.0
    for tq, h0 in zip(qs, hq):
        sup_u = np.abs(height(tq + offs) - h0).max()
        lambda_gen = max(lambda_gen, float(sup_u / r))

    # Angle sweep; always include the horizontal line itself.
    base_angles = np.linspace(-math.pi / 2, math.pi / 2, angle_grid + 2)[1:-1]
    angles = np.union1d(base_angles, [0.0])
    phases = crest + delta * np.arange(2048) / 2048.0
    hp = steep * np.cos(omega * phases) if eps > 0 else np.zeros_like(phases)

    min_max_slope = float("inf")
    chunk = 512
    for start in range(0, len(angles), chunk):
        tan = np.tan(angles[start:start + chunk])[:, None]
        denom = 1.0 + tan * hp[None, :]
        graph_ok = (denom > 0).all(axis=1)
        if not graph_ok.any():
            continue
        numer = np.abs(hp[None, :] - tan[graph_ok])
        max_slope = (numer / denom[graph_ok]).max(axis=1)
        min_max_slope = min(min_max_slope, float(max_slope.min()))

    cap = lambda_cap(1)
    verdict = bool(
        lambda_gen <= cap * (1 + 1e-9)
        and min_max_slope > lambda_gen / cap
    )
    return CounterexampleReport(
        epsilon=eps,
        delta=delta,
        r=r,
        lambda_gen=lambda_gen,
        min_over_angles_max_slope=min_max_slope,
        verdict=verdict,
        angle_count=len(angles),
    )
