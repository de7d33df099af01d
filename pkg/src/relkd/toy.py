"""Desk-scale end-to-end distillation experiment on synthetic scenes.

A scene is a set of places in a low-dimensional latent space; each sample is
a noisy view of its place through two fixed random smooth nonlinear maps (the
two "modalities"). The frozen teacher descriptor is a fixed random linear
projection of the concatenated noise-free modality features, so it is a
stronger oracle than either noisy single modality. The student is a small
one-hidden-layer tanh perceptron reading modality A only, trained by
full-batch gradient descent on triplet task loss plus the configured
distillation terms, then scored with the retrieval protocol on the held-out
query/database split.

Everything is a deterministic function of (scene seed, training seed,
config): all randomness flows through SplitMix64 streams with a documented
draw order, and the optimizer is plain gradient descent (no state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import DistillConfig, TotalLoss, VARIANTS, total_loss
from .numeric import SplitMix64
from .vpr import RecallReport, TripletConfig, recall_report, triplet_loss

PLACE_SPREAD = 2.0
WITHIN_PLACE_JITTER = 0.3
BIAS_SCALE = 0.3
# Keeps teacher rows at O(1) norm so the ball embedding stays un-saturated
# and the distillation terms sit in the Huber quadratic region.
TEACHER_GAIN = 0.4

#: Sample s of a place goes to: train, database, query, train, train, ... (mod 4).
_SPLIT_PATTERN = ("train", "database", "query", "train")


@dataclass(frozen=True)
class SceneConfig:
    num_places: int = 32
    samples_per_place: int = 8
    latent_dim: int = 2
    dim_a: int = 16
    dim_b: int = 16
    teacher_dim: int = 16
    noise_sigma: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.num_places < 4:
            raise ValueError(f"num_places must be >= 4, got {self.num_places}")
        if self.samples_per_place < 2:
            raise ValueError(f"samples_per_place must be >= 2, got {self.samples_per_place}")
        for name in ("latent_dim", "dim_a", "dim_b", "teacher_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValueError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class SyntheticScene:
    latents: np.ndarray
    desc_a: np.ndarray
    desc_b: np.ndarray
    teacher: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    db_idx: np.ndarray
    query_idx: np.ndarray


def gen_scene(cfg: SceneConfig) -> SyntheticScene:
    """Deterministic synthetic scene for a config.

    Draw order from SplitMix64(seed): place centers, per-sample latent
    jitter, modality-A map (weights then bias), modality-B map, teacher
    projection, modality-A noise, modality-B noise. Noise arrays are drawn
    even for sigma = 0, so scenes differing only in sigma share geometry.
    """
    rng = SplitMix64(cfg.seed)
    n_places, per_place = cfg.num_places, cfg.samples_per_place
    n = n_places * per_place

    centers = rng.normals((n_places, cfg.latent_dim)) * PLACE_SPREAD
    labels = np.repeat(np.arange(n_places), per_place)
    latents = centers[labels] + rng.normals((n, cfg.latent_dim)) * WITHIN_PLACE_JITTER

    def random_map(out_dim: int):
        w = rng.normals((cfg.latent_dim, out_dim)) / np.sqrt(cfg.latent_dim)
        b = rng.normals((out_dim,)) * BIAS_SCALE
        return w, b

    w_a, b_a = random_map(cfg.dim_a)
    w_b, b_b = random_map(cfg.dim_b)
    w_t = rng.normals((cfg.dim_a + cfg.dim_b, cfg.teacher_dim)) * (
        TEACHER_GAIN / np.sqrt(cfg.dim_a + cfg.dim_b)
    )

    clean_a = np.tanh(latents @ w_a + b_a)
    clean_b = np.tanh(latents @ w_b + b_b)
    teacher = np.concatenate([clean_a, clean_b], axis=1) @ w_t
    desc_a = clean_a + cfg.noise_sigma * rng.normals((n, cfg.dim_a))
    desc_b = clean_b + cfg.noise_sigma * rng.normals((n, cfg.dim_b))

    roles = np.array([_SPLIT_PATTERN[i % 4] for i in range(per_place)])
    role_per_sample = np.tile(roles, n_places)
    train_idx = np.nonzero(role_per_sample == "train")[0]
    db_idx = np.nonzero(role_per_sample == "database")[0]
    query_idx = np.nonzero(role_per_sample == "query")[0]
    if db_idx.size == 0 or query_idx.size == 0:
        raise ValueError(
            "degenerate scene: need samples_per_place >= 3 for nonempty database and query splits"
        )
    return SyntheticScene(
        latents=latents,
        desc_a=desc_a,
        desc_b=desc_b,
        teacher=teacher,
        labels=labels,
        train_idx=train_idx,
        db_idx=db_idx,
        query_idx=query_idx,
    )


@dataclass
class StudentModel:
    """One-hidden-layer perceptron: tanh(x W1 + b1) W2 + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


def init_student(in_dim: int, hidden: int, out_dim: int, rng: SplitMix64) -> StudentModel:
    """Gaussian fan-in init for weights, zero biases. Draw order: W1, W2."""
    w1 = rng.normals((in_dim, hidden)) / np.sqrt(in_dim)
    w2 = rng.normals((hidden, out_dim)) / np.sqrt(hidden)
    return StudentModel(w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(out_dim))


def student_forward(model: StudentModel, x: np.ndarray):
    """Returns (output batch, cache for backward)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.w1.shape[0]:
        raise ValueError(f"input shape {x.shape} incompatible with W1 {model.w1.shape}")
    h = np.tanh(x @ model.w1 + model.b1)
    out = h @ model.w2 + model.b2
    return out, (x, h)


def student_backward(model: StudentModel, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Exact parameter gradients given d(loss)/d(output)."""
    x, h = cache
    g = np.asarray(grad_out, dtype=np.float64)
    gw2 = h.T @ g
    gb2 = g.sum(axis=0)
    gh = (g @ model.w2.T) * (1.0 - h * h)
    gw1 = x.T @ gh
    gb1 = gh.sum(axis=0)
    return {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


@dataclass
class Adaptor:
    """Affine channel adaptor: x @ weight + bias."""

    weight: np.ndarray
    bias: np.ndarray


def init_adaptor(in_dim: int, out_dim: int, rng: SplitMix64) -> Adaptor:
    return Adaptor(weight=rng.normals((in_dim, out_dim)) / np.sqrt(in_dim), bias=np.zeros(out_dim))


def apply_adaptor(adaptor: Adaptor, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != adaptor.weight.shape[0]:
        raise ValueError(f"input shape {x.shape} incompatible with adaptor {adaptor.weight.shape}")
    return x @ adaptor.weight + adaptor.bias


def fit_adaptor(source: np.ndarray, target: np.ndarray) -> Adaptor:
    """Least-squares affine map source -> target (used to pre-fit a frozen
    teacher-side adaptor against the student's initial output geometry)."""
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    aug = np.concatenate([src, np.ones((src.shape[0], 1))], axis=1)
    coef, *_ = np.linalg.lstsq(aug, tgt, rcond=None)
    return Adaptor(weight=coef[:-1].copy(), bias=coef[-1].copy())


@dataclass(frozen=True)
class EpochRecord:
    variant: str
    seed: int
    epoch: int
    task_loss: float
    kd_s: float
    kd_c: float
    total: float


@dataclass(frozen=True)
class RunResult:
    variant: str
    seed: int
    records: tuple[EpochRecord, ...]
    recall: RecallReport
    final_params: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class VariantSummary:
    variant: str
    mean_ar1: float
    std_ar1: float
    mean_ar1pct: float
    std_ar1pct: float


@dataclass(frozen=True)
class ExperimentReport:
    runs: tuple[RunResult, ...]
    summaries: tuple[VariantSummary, ...]
    seeds: tuple[int, ...]


def _check_finite(name: str, value: float, epoch: int) -> None:
    if not np.isfinite(value):
        raise RuntimeError(f"training diverged: non-finite {name} at epoch {epoch}")


def run_experiment(
    scene_cfg: SceneConfig,
    distill_cfg: DistillConfig | None = None,
    variants=("none", "s", "c", "sc"),
    epochs: int = 80,
    lr: float = 0.02,
    seeds=(0, 1, 2, 3, 4),
    hidden: int = 32,
    triplet_cfg: TripletConfig | None = None,
    student_out_dim: int | None = None,
    adaptor_side: str = "teacher",
    k_max: int | None = None,
) -> ExperimentReport:
    """Train and evaluate one student per (variant, seed).

    The teacher is precomputed by gen_scene and never touched. Per run, a
    fresh SplitMix64(training seed) initializes the student (and adaptor when
    teacher/student dims differ), so all variants of one seed share their
    initialization. Epoch rows hold losses at the parameters entering that
    epoch; the row at index ``epochs`` holds the final losses and is followed
    by retrieval evaluation of the trained student.
    """
    cfg = distill_cfg or DistillConfig()
    tcfg = triplet_cfg or TripletConfig()
    variants = tuple(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if not (np.isfinite(lr) and lr > 0):
        raise ValueError(f"learning rate must be finite and positive, got {lr}")
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one training seed")
    if adaptor_side not in ("teacher", "student"):
        raise ValueError(f"adaptor_side must be 'teacher' or 'student', got {adaptor_side!r}")

    scene = gen_scene(scene_cfg)
    out_dim = scene_cfg.teacher_dim if student_out_dim is None else int(student_out_dim)
    needs_adaptor = out_dim != scene_cfg.teacher_dim
    train_x = scene.desc_a[scene.train_idx]
    train_labels = scene.labels[scene.train_idx]
    teacher_train = scene.teacher[scene.train_idx]

    runs: list[RunResult] = []
    for seed in seeds:
        for variant in variants:
            rng = SplitMix64(seed)
            model = init_student(scene_cfg.dim_a, hidden, out_dim, rng)
            adaptor = None
            if needs_adaptor:
                if adaptor_side == "student":
                    adaptor = init_adaptor(out_dim, scene_cfg.teacher_dim, rng)
                else:
                    out0, _ = student_forward(model, train_x)
                    adaptor = fit_adaptor(teacher_train, out0)
            records: list[EpochRecord] = []

            def evaluate_losses(epoch: int):
                out, cache = student_forward(model, train_x)
                if not np.all(np.isfinite(out)):
                    raise RuntimeError(
                        f"training diverged: non-finite student output at epoch {epoch}"
                    )
                task, g_task = triplet_loss(out, train_labels, tcfg)
                if needs_adaptor and adaptor_side == "student":
                    adapted = apply_adaptor(adaptor, out)
                    tl = total_loss(
                        0.0, np.zeros_like(adapted), teacher_train, adapted, cfg, variant
                    )
                    combined = TotalLoss(
                        value=task + tl.value,
                        grad=g_task + tl.grad @ adaptor.weight.T,
                        task_value=task,
                        kd_s=tl.kd_s,
                        kd_c=tl.kd_c,
                    )
                    extra = (out, tl.grad)
                else:
                    ref = apply_adaptor(adaptor, teacher_train) if needs_adaptor else teacher_train
                    combined = total_loss(task, g_task, ref, out, cfg, variant)
                    extra = None
                _check_finite("loss", combined.value, epoch)
                records.append(
                    EpochRecord(
                        variant=variant,
                        seed=seed,
                        epoch=epoch,
                        task_loss=combined.task_value,
                        kd_s=combined.kd_s,
                        kd_c=combined.kd_c,
                        total=combined.value,
                    )
                )
                return out, cache, combined, extra

            for epoch in range(epochs):
                out, cache, combined, extra = evaluate_losses(epoch)
                grads = student_backward(model, cache, combined.grad)
                model.w1 -= lr * grads["w1"]
                model.b1 -= lr * grads["b1"]
                model.w2 -= lr * grads["w2"]
                model.b2 -= lr * grads["b2"]
                if extra is not None:
                    out_pre, g_kd = extra
                    adaptor.weight -= lr * (out_pre.T @ g_kd)
                    adaptor.bias -= lr * g_kd.sum(axis=0)
            evaluate_losses(epochs)

            q_out, _ = student_forward(model, scene.desc_a[scene.query_idx])
            db_out, _ = student_forward(model, scene.desc_a[scene.db_idx])
            db_labels = scene.labels[scene.db_idx]
            truth = [
                set(np.nonzero(db_labels == scene.labels[q])[0].tolist())
                for q in scene.query_idx
            ]
            recall = recall_report(q_out, db_out, truth, k_max=k_max)
            runs.append(
                RunResult(
                    variant=variant,
                    seed=seed,
                    records=tuple(records),
                    recall=recall,
                    final_params=(
                        model.w1.copy(),
                        model.b1.copy(),
                        model.w2.copy(),
                        model.b2.copy(),
                    ),
                )
            )

    summaries = []
    for variant in variants:
        ar1 = np.array([r.recall.ar_at_1 for r in runs if r.variant == variant])
        ar1p = np.array([r.recall.ar_at_1pct for r in runs if r.variant == variant])
        summaries.append(
            VariantSummary(
                variant=variant,
                mean_ar1=float(ar1.mean()),
                std_ar1=float(ar1.std()),
                mean_ar1pct=float(ar1p.mean()),
                std_ar1pct=float(ar1p.std()),
            )
        )
    return ExperimentReport(runs=tuple(runs), summaries=tuple(summaries), seeds=seeds)
