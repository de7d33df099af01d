"""Relational knowledge-distillation losses and their gradients.

A batch of teacher rows T and student rows S (both N x C) yields pairwise
relation matrices R[i][j] = r(a_i, b_j) for a chosen relation kind and agent
pair (teacher-teacher, student-student, or teacher-student). A scheme picks
which two relation matrices the elementwise Huber penalty compares:

* ``tt_ss``: r(t_i, t_j) vs r(s_i, s_j)  (self-agent relations)
* ``ts_ss``: r(t_i, s_j) vs r(s_i, s_j)  (cross-agent vs self-agent)
* ``tt_ts``: r(t_i, t_j) vs r(t_i, s_j)
* ``direct``: elementwise Huber on the raw coordinates t_ik vs s_ik

The self-agent loss sums ``tt_ss`` over the configured relation kinds, the
cross-agent loss sums ``ts_ss``, and the total objective adds them to a task
loss with weights lambda_s / lambda_c.

Every loss returns its exact gradient with respect to the student batch
(teachers are constants); gradients are produced by the reverse-mode tape in
``autodiff`` and are validated against central finite differences in the test
suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .manifolds import (
    ATANH_EPS,
    COSINE,
    DISTANCE_KINDS,
    EPS_BALL,
    EPS_NORM,
    EUCLIDEAN,
    HYPERBOLIC,
    check_curvature,
    normalize_kind,
)

SCHEME_TT_SS = "tt_ss"
SCHEME_TS_SS = "ts_ss"
SCHEME_TT_TS = "tt_ts"
SCHEME_DIRECT = "direct"
RELATIONAL_SCHEMES = (SCHEME_TT_SS, SCHEME_TS_SS, SCHEME_TT_TS)
SCHEMES = RELATIONAL_SCHEMES + (SCHEME_DIRECT,)

REDUCTION_MEAN = "mean"
REDUCTION_SUM = "sum"

VARIANT_NONE = "none"
VARIANT_S = "s"
VARIANT_C = "c"
VARIANT_SC = "sc"
VARIANTS = (VARIANT_NONE, VARIANT_S, VARIANT_C, VARIANT_SC)

#: Relation-matrix normalization refuses off-diagonal means below this.
MIN_NORMALIZE_MEAN = 1e-12


@dataclass(frozen=True)
class DistillConfig:
    """All loss hyperparameters.

    Defaults: lambda_s = lambda_c = 1, curvature 1, Huber delta 1, mean
    reduction, diagonal terms included, no relation-matrix normalization,
    hyperbolic pre-scale 1, all three relation kinds active. The source
    equations leave all of these open; they are knobs, not fixed constants.
    """

    lambda_s: float = 1.0
    lambda_c: float = 1.0
    curvature: float = 1.0
    huber_delta: float = 1.0
    reduction: str = REDUCTION_MEAN
    include_diagonal: bool = True
    rkd_normalize: bool = False
    hyp_prescale: float = 1.0
    manifolds: tuple[str, ...] = DISTANCE_KINDS

    def __post_init__(self):
        for name in ("lambda_s", "lambda_c"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "curvature", check_curvature(self.curvature))
        if not (np.isfinite(self.huber_delta) and self.huber_delta > 0):
            raise ValueError(f"huber_delta must be finite and > 0, got {self.huber_delta}")
        object.__setattr__(self, "huber_delta", float(self.huber_delta))
        if self.reduction not in (REDUCTION_MEAN, REDUCTION_SUM):
            raise ValueError(f"reduction must be 'mean' or 'sum', got {self.reduction!r}")
        if not (np.isfinite(self.hyp_prescale) and self.hyp_prescale > 0):
            raise ValueError(f"hyp_prescale must be finite and > 0, got {self.hyp_prescale}")
        object.__setattr__(self, "hyp_prescale", float(self.hyp_prescale))
        kinds = tuple(normalize_kind(k) for k in self.manifolds)
        canon = tuple(k for k in DISTANCE_KINDS if k in kinds)
        if not canon:
            raise ValueError("manifolds must name at least one relation kind")
        object.__setattr__(self, "manifolds", canon)


def as_batch(x, name: str = "batch") -> np.ndarray:
    """Coerce to an N x C float64 embedding batch with N >= 2, all finite."""
    b = np.asarray(x, dtype=np.float64)
    if b.ndim != 2:
        raise ValueError(f"{name} must be 2-D (N x C), got shape {b.shape}")
    if b.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 rows, got {b.shape[0]}")
    if b.shape[1] < 1:
        raise ValueError(f"{name} needs at least 1 column")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"{name} contains non-finite entries")
    return b


def _check_pairable(t: np.ndarray, s: np.ndarray) -> None:
    if t.shape[0] != s.shape[0]:
        raise ValueError(f"batch-size mismatch: teacher N={t.shape[0]}, student N={s.shape[0]}")
    if t.shape[1] != s.shape[1]:
        raise ValueError(
            f"channel mismatch: teacher C={t.shape[1]}, student C={s.shape[1]}"
            " (interpose an adaptor for cross-dimension batches)"
        )


def huber(a: float, b: float, delta: float = 1.0) -> float:
    """Huber penalty of a - b: 0.5 r^2 inside |r| <= delta, linear outside."""
    if not (delta > 0):
        raise ValueError(f"delta must be positive, got {delta}")
    r = abs(float(a) - float(b))
    if r <= delta:
        return 0.5 * r * r
    return delta * (r - 0.5 * delta)


def _check_cosine_rows(batch: np.ndarray, name: str) -> None:
    sq = np.einsum("ij,ij->i", batch, batch)
    bad = np.nonzero(np.sqrt(sq) <= EPS_NORM)[0]
    if bad.size:
        raise ValueError(f"cosine relation undefined: {name} row {int(bad[0])} has near-zero norm")


def _gram(a: ad.Node, b: ad.Node):
    """Row-square-norms (N x 1, 1 x M) and inner-product matrix (N x M)."""
    aa = ad.sum_(ad.mul(a, a), axis=1, keepdims=True)
    bb = ad.transpose(ad.sum_(ad.mul(b, b), axis=1, keepdims=True))
    g = ad.matmul(a, ad.transpose(b))
    return aa, bb, g


def _euclidean_graph(a: ad.Node, b: ad.Node, self_pair: bool) -> ad.Node:
    aa, bb, g = _gram(a, b)
    sq = ad.sub(ad.add(aa, bb), ad.mul(g, 2.0))
    r = ad.sqrt0(sq)
    return ad.fill_diag(r, 0.0) if self_pair else r


def _cosine_graph(a: ad.Node, b: ad.Node, self_pair: bool) -> ad.Node:
    aa, bb, g = _gram(a, b)
    r = ad.div(g, ad.mul(ad.sqrt0(aa), ad.sqrt0(bb)))
    return ad.fill_diag(r, 1.0) if self_pair else r


def _ball_embed_graph(x: ad.Node, c: float, prescale: float) -> ad.Node:
    """Pre-scale rows, map through the origin exponential map, and radially
    project safely inside the ball (tape version of the scalar pipeline)."""
    sqrt_c = float(np.sqrt(c))
    u = ad.mul(x, float(prescale))
    rn = ad.floor_at(ad.sqrt0(ad.sum_(ad.mul(u, u), axis=1, keepdims=True)), EPS_NORM)
    factor = ad.div(ad.tanh(ad.mul(rn, sqrt_c)), ad.mul(rn, sqrt_c))
    p = ad.mul(u, factor)
    pn = ad.floor_at(ad.sqrt0(ad.sum_(ad.mul(p, p), axis=1, keepdims=True)), EPS_NORM)
    scale = ad.cap(ad.div((1.0 - EPS_BALL) / sqrt_c, pn), 1.0)
    return ad.mul(p, scale)


def _hyperbolic_graph(p: ad.Node, q: ad.Node, c: float, self_pair: bool) -> ad.Node:
    """Pairwise geodesic distances between ball points p_i and q_j.

    With m = (-p_i) (+)_c q_j, the squared norm expands in terms of the Gram
    quantities, so the whole matrix needs one matmul:
    ||m||^2 = (A^2 ||p||^2 - 2AB <p,q> + B^2 ||q||^2) / D^2 where
    A = 1 - 2c<p,q> + c||q||^2, B = 1 - c||p||^2, D = 1 - 2c<p,q> + c^2 ||p||^2 ||q||^2.
    """
    sqrt_c = float(np.sqrt(c))
    pp, qq, g = _gram(p, q)
    two_c_g = ad.mul(g, 2.0 * c)
    alpha = ad.add(ad.sub(1.0, two_c_g), ad.mul(qq, c))
    beta = ad.sub(1.0, ad.mul(pp, c))
    den = ad.add(ad.sub(1.0, two_c_g), ad.mul(ad.mul(pp, qq), c * c))
    num = ad.sub(
        ad.add(ad.mul(ad.mul(alpha, alpha), pp), ad.mul(ad.mul(beta, beta), qq)),
        ad.mul(ad.mul(ad.mul(alpha, beta), g), 2.0),
    )
    msq = ad.div(num, ad.mul(den, den))
    arg = ad.cap(ad.mul(ad.sqrt0(msq), sqrt_c), 1.0 - ATANH_EPS)
    r = ad.mul(ad.artanh(arg), 2.0 / sqrt_c)
    return ad.fill_diag(r, 0.0) if self_pair else r


def _relation_graph(a: ad.Node, b: ad.Node, kind: str, self_pair: bool, c: float) -> ad.Node:
    if kind == EUCLIDEAN:
        return _euclidean_graph(a, b, self_pair)
    if kind == COSINE:
        return _cosine_graph(a, b, self_pair)
    return _hyperbolic_graph(a, b, c, self_pair)


def _normalized(r: ad.Node, label: str) -> ad.Node:
    n = r.shape[0]
    off = 1.0 - np.eye(n)
    mean = ad.div(ad.sum_(ad.mask(r, off)), float(n * n - n))
    if float(mean.value) < MIN_NORMALIZE_MEAN:
        raise ValueError(
            f"cannot normalize {label} relation matrix: off-diagonal mean "
            f"{float(mean.value):.3e} < {MIN_NORMALIZE_MEAN:.0e}"
        )
    return ad.div(r, mean)


def _check_finite_matrix(r: ad.Node, label: str) -> None:
    bad = np.argwhere(~np.isfinite(r.value))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise FloatingPointError(f"non-finite {label} relation value at entry ({i}, {j})")


def _scheme_graph(
    t: ad.Node, s: ad.Node, scheme: str, kind: str | None, cfg: DistillConfig
) -> ad.Node:
    n = t.shape[0]
    if scheme == SCHEME_DIRECT:
        terms = ad.huber(t, s, cfg.huber_delta)
        count = n * t.shape[1]
        total = ad.sum_(terms)
        return ad.div(total, float(count)) if cfg.reduction == REDUCTION_MEAN else total

    kind = normalize_kind(kind)
    if kind == COSINE:
        _check_cosine_rows(t.value, "teacher")
        _check_cosine_rows(s.value, "student")
    if kind == HYPERBOLIC:
        t = _ball_embed_graph(t, cfg.curvature, cfg.hyp_prescale)
        s = _ball_embed_graph(s, cfg.curvature, cfg.hyp_prescale)

    c = cfg.curvature
    if scheme == SCHEME_TT_SS:
        left = _relation_graph(t, t, kind, True, c)
        right = _relation_graph(s, s, kind, True, c)
    elif scheme == SCHEME_TS_SS:
        left = _relation_graph(t, s, kind, False, c)
        right = _relation_graph(s, s, kind, True, c)
    elif scheme == SCHEME_TT_TS:
        left = _relation_graph(t, t, kind, True, c)
        right = _relation_graph(t, s, kind, False, c)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")

    if cfg.rkd_normalize:
        left = _normalized(left, f"{scheme}/{kind} left")
        right = _normalized(right, f"{scheme}/{kind} right")
    _check_finite_matrix(left, f"{scheme}/{kind} left")
    _check_finite_matrix(right, f"{scheme}/{kind} right")

    terms = ad.huber(left, right, cfg.huber_delta)
    if cfg.include_diagonal:
        count = n * n
    else:
        terms = ad.mask(terms, 1.0 - np.eye(n))
        count = n * n - n
    total = ad.sum_(terms)
    return ad.div(total, float(count)) if cfg.reduction == REDUCTION_MEAN else total


def relation_matrix(a, b, kind: str, cfg: DistillConfig | None = None) -> np.ndarray:
    """Pairwise relation matrix R[i][j] = r(a_i, b_j) for one relation kind.

    When the two batches are elementwise identical the exact self-relation
    diagonal is installed (0 for distances, 1 for cosine). Hyperbolic rows go
    through pre-scale -> origin exponential map -> ball projection first.
    With cfg.rkd_normalize the matrix is divided by its off-diagonal mean.
    """
    cfg = cfg or DistillConfig()
    kind = normalize_kind(kind)
    av = as_batch(a, "A")
    bv = as_batch(b, "B")
    _check_pairable(av, bv)
    if kind == COSINE:
        _check_cosine_rows(av, "A")
        _check_cosine_rows(bv, "B")
    self_pair = bool(np.array_equal(av, bv))
    an: ad.Node = ad.constant(av)
    bn: ad.Node = an if self_pair else ad.constant(bv)
    if kind == HYPERBOLIC:
        an = _ball_embed_graph(an, cfg.curvature, cfg.hyp_prescale)
        bn = an if self_pair else _ball_embed_graph(bn, cfg.curvature, cfg.hyp_prescale)
    r = _relation_graph(an, bn, kind, self_pair, cfg.curvature)
    if cfg.rkd_normalize:
        r = _normalized(r, kind)
    _check_finite_matrix(r, kind)
    return r.value.copy()


def scheme_loss(
    teacher, student, scheme: str, kind: str | None = None, cfg: DistillConfig | None = None
) -> tuple[float, np.ndarray]:
    """One scheme x relation-kind loss and its gradient w.r.t. the student.

    The teacher batch is a constant. ``direct`` ignores ``kind`` (it compares
    raw coordinates). Reduction is the mean over included terms (diagonal
    optional) or the plain sum, per cfg.
    """
    cfg = cfg or DistillConfig()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    t = as_batch(teacher, "teacher")
    s = as_batch(student, "student")
    _check_pairable(t, s)
    s_leaf = ad.leaf(s)
    loss = _scheme_graph(ad.constant(t), s_leaf, scheme, kind, cfg)
    loss.backward()
    return loss.item(), s_leaf.grad


def _summed_schemes(teacher, student, scheme: str, cfg: DistillConfig) -> tuple[float, np.ndarray]:
    total = 0.0
    grad: np.ndarray | None = None
    for kind in cfg.manifolds:
        value, g = scheme_loss(teacher, student, scheme, kind, cfg)
        total += value
        grad = g if grad is None else grad + g
    return total, grad


def kd_s_loss(teacher, student, cfg: DistillConfig | None = None) -> tuple[float, np.ndarray]:
    """Self-agent distillation loss: tt_ss summed over the active relation kinds."""
    return _summed_schemes(teacher, student, SCHEME_TT_SS, cfg or DistillConfig())


def kd_c_loss(teacher, student, cfg: DistillConfig | None = None) -> tuple[float, np.ndarray]:
    """Cross-agent distillation loss: ts_ss summed over the active relation kinds."""
    return _summed_schemes(teacher, student, SCHEME_TS_SS, cfg or DistillConfig())


@dataclass(frozen=True)
class TotalLoss:
    """Combined objective value, its student gradient, and the parts."""

    value: float
    grad: np.ndarray
    task_value: float
    kd_s: float
    kd_c: float


def total_loss(
    task_value: float,
    task_grad,
    teacher,
    student,
    cfg: DistillConfig | None = None,
    variant: str = VARIANT_SC,
) -> TotalLoss:
    """task + lambda_s * KD_self and/or + lambda_c * KD_cross, per variant.

    A distillation side is evaluated only when the variant includes it and its
    weight is nonzero, so zero-weight runs reproduce the plain task objective
    bit-exactly.
    """
    cfg = cfg or DistillConfig()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    s = as_batch(student, "student")
    g_task = np.asarray(task_grad, dtype=np.float64)
    if g_task.shape != s.shape:
        raise ValueError(f"task gradient shape {g_task.shape} != student shape {s.shape}")
    value = float(task_value)
    grad = g_task.copy()
    kd_s = kd_c = 0.0
    if variant in (VARIANT_S, VARIANT_SC) and cfg.lambda_s != 0.0:
        kd_s, g = kd_s_loss(teacher, s, cfg)
        value += cfg.lambda_s * kd_s
        grad += cfg.lambda_s * g
    if variant in (VARIANT_C, VARIANT_SC) and cfg.lambda_c != 0.0:
        kd_c, g = kd_c_loss(teacher, s, cfg)
        value += cfg.lambda_c * kd_c
        grad += cfg.lambda_c * g
    return TotalLoss(value=value, grad=grad, task_value=float(task_value), kd_s=kd_s, kd_c=kd_c)
