import math

import numpy as np
import pytest

import tangentgraph as tg


@pytest.fixture(scope="session")
def circle():
    return tg.zoo_build("circle", {"R": 1.0})


@pytest.fixture(scope="session")
def sphere():
    return tg.zoo_build("sphere2", {"R": 1.0})


@pytest.fixture(scope="session")
def torus():
    return tg.zoo_build("torus", {"R_maj": 2.0, "r_min": 0.5})


@pytest.fixture(scope="session")
def radius_cache():
    """Shared store for radius reports reused across test modules."""
    return {}


def cached_max_radius(cache, f, lam, kind, Q, tol=1e-3, N=None, key=None):
    key = key or (f.name, str(sorted(f.params.items())), lam, kind, tol, N,
                  len(Q))
    if key not in cache:
        cache[key] = tg.max_radius(f, lam, kind, Q, tol=tol, N=N)
    return cache[key]


def circle_r1(lam):
    """Slope-bound radius of the unit circle: lam / sqrt(1 + lam^2)."""
    return lam / math.sqrt(1.0 + lam * lam)


def circle_r0(lam):
    """Height-bound radius of the unit circle: 2 lam / (1 + lam^2)."""
    return 2.0 * lam / (1.0 + lam * lam)


def torus_inner_outer(torus):
    return [torus.point(0, [0.0, math.pi]), torus.point(0, [0.0, 0.0])]


def sphere_q_pair(sphere):
    return [sphere.point(4, [0.0, 0.0]), sphere.point(0, [0.1, -0.2])]
