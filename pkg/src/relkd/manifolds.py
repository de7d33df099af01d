"""Constant-curvature relation functions.

Three relation kinds between embedding vectors:

* ``euclidean``: straight-line distance ||x - y||,
* ``cosine``: <x, y> / (||x|| ||y||) — a similarity, larger means closer;
  kept in that orientation because the losses only ever compare teacher and
  student values of the same functional,
* ``hyperbolic``: geodesic distance on the Poincare ball of curvature -c^2,
  (2/sqrt(c)) * artanh(sqrt(c) ||(-p) (+) q||) with (+) the Mobius addition.

Boundary safeguards: points are kept strictly inside the ball by radial
projection (margin EPS_BALL), the artanh argument is capped at 1 - ATANH_EPS
because artanh diverges at 1, and norms below EPS_NORM are treated as zero.
"""

from __future__ import annotations

import numpy as np

from .numeric import as_vector

EPS_NORM = 1e-12
EPS_BALL = 1e-5
ATANH_EPS = 1e-7

EUCLIDEAN = "euclidean"
COSINE = "cosine"
HYPERBOLIC = "hyperbolic"
DISTANCE_KINDS = (EUCLIDEAN, COSINE, HYPERBOLIC)

#: Short aliases accepted wherever a distance kind is named (CLI flags etc).
KIND_ALIASES = {
    "euc": EUCLIDEAN,
    "cos": COSINE,
    "hyp": HYPERBOLIC,
    EUCLIDEAN: EUCLIDEAN,
    COSINE: COSINE,
    HYPERBOLIC: HYPERBOLIC,
}


def normalize_kind(kind: str) -> str:
    k = str(kind).lower()
    if k not in KIND_ALIASES:
        raise ValueError(f"unknown distance kind {kind!r}; expected one of {DISTANCE_KINDS}")
    return KIND_ALIASES[k]


def check_curvature(c: float) -> float:
    c = float(c)
    if not np.isfinite(c) or c <= 0:
        raise ValueError(f"curvature must be a finite positive real, got {c}")
    return c


def check_in_ball(p, c: float, name: str = "point") -> np.ndarray:
    """Validate that p lies strictly inside the ball c*||p||^2 < 1."""
    v = as_vector(p, name)
    c = check_curvature(c)
    if c * float(np.dot(v, v)) >= 1.0:
        raise ValueError(f"{name} lies on or outside the ball boundary (c*||p||^2 >= 1)")
    return v


def _check_same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")


def euclidean_distance(x, y) -> float:
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    _check_same_dim(xv, yv)
    d = xv - yv
    return float(np.sqrt(np.dot(d, d)))


def cosine_relation(x, y) -> float:
    """Cosine similarity <x,y>/(||x|| ||y||); rejects near-zero-norm inputs."""
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    _check_same_dim(xv, yv)
    nx = float(np.sqrt(np.dot(xv, xv)))
    ny = float(np.sqrt(np.dot(yv, yv)))
    if nx <= EPS_NORM:
        raise ValueError("cosine relation undefined: first argument has near-zero norm")
    if ny <= EPS_NORM:
        raise ValueError("cosine relation undefined: second argument has near-zero norm")
    return float(np.dot(xv, yv)) / (nx * ny)


def conformal_factor(p, c: float) -> float:
    """Local metric scaling 2 / (1 - c*||p||^2) of the ball at p."""
    v = check_in_ball(p, c, "p")
    return 2.0 / (1.0 - float(c) * float(np.dot(v, v)))


def project_to_ball(x, c: float) -> np.ndarray:
    """Radially pull x inside the ball if round-off pushed it to the boundary.

    Interior points (c*||x||^2 < (1 - EPS_BALL)^2) are returned unchanged;
    anything else is rescaled to norm (1 - EPS_BALL)/sqrt(c).
    """
    v = as_vector(x, "x")
    c = check_curvature(c)
    sq = float(np.dot(v, v))
    limit = (1.0 - EPS_BALL) / np.sqrt(c)
    if c * sq < (1.0 - EPS_BALL) ** 2:
        return v
    n = np.sqrt(sq)
    if n <= EPS_NORM:
        return v
    return v * (limit / n)


def mobius_add(p, q, c: float) -> np.ndarray:
    """Mobius addition p (+)_c q, re-projected into the ball.

    ((1 + 2c<p,q> + c||q||^2) p + (1 - c||p||^2) q)
    / (1 + 2c<p,q> + c^2 ||p||^2 ||q||^2)
    """
    pv = check_in_ball(p, c, "p")
    qv = check_in_ball(q, c, "q")
    _check_same_dim(pv, qv)
    c = float(c)
    pq = float(np.dot(pv, qv))
    pp = float(np.dot(pv, pv))
    qq = float(np.dot(qv, qv))
    num = (1.0 + 2.0 * c * pq + c * qq) * pv + (1.0 - c * pp) * qv
    den = 1.0 + 2.0 * c * pq + c * c * pp * qq
    return project_to_ball(num / den, c)


def _exp_tangent(v: np.ndarray, scale: float, c: float) -> np.ndarray:
    """tanh(scale*||v||) * v / (sqrt(c)*||v||), the origin-bound part of the
    exponential map; zero vector for ||v|| <= EPS_NORM (the limit value)."""
    n = float(np.sqrt(np.dot(v, v)))
    if n <= EPS_NORM:
        return np.zeros_like(v)
    return np.tanh(scale * n) * v / (np.sqrt(c) * n)


def exp_map_origin(v, c: float) -> np.ndarray:
    """Exponential map based at the origin: tanh(sqrt(c)||v||) v/(sqrt(c)||v||)."""
    vv = as_vector(v, "v")
    c = check_curvature(c)
    return project_to_ball(_exp_tangent(vv, np.sqrt(c), c), c)


def exp_map(z, v, c: float) -> np.ndarray:
    """Exponential map based at z: z (+)_c tanh(sqrt(c) lam_z ||v||/2) v/(sqrt(c)||v||).

    Returns z itself for ||v|| <= EPS_NORM (the 0/0 limit).
    """
    zv = check_in_ball(z, c, "z")
    vv = as_vector(v, "v")
    _check_same_dim(zv, vv)
    c = check_curvature(c)
    n = float(np.sqrt(np.dot(vv, vv)))
    if n <= EPS_NORM:
        return zv.copy()
    lam = conformal_factor(zv, c)
    tangent = project_to_ball(_exp_tangent(vv, np.sqrt(c) * lam / 2.0, c), c)
    return mobius_add(zv, tangent, c)


def hyperbolic_distance(p, q, c: float) -> float:
    """Geodesic distance (2/sqrt(c)) artanh(sqrt(c) ||(-p) (+)_c q||)."""
    pv = check_in_ball(p, c, "p")
    qv = check_in_ball(q, c, "q")
    _check_same_dim(pv, qv)
    c = float(c)
    m = mobius_add(-pv, qv, c)
    arg = np.sqrt(c) * float(np.sqrt(np.dot(m, m)))
    arg = min(arg, 1.0 - ATANH_EPS)
    return (2.0 / np.sqrt(c)) * float(np.arctanh(arg))
