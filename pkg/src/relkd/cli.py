"""Command-line interface.

Subcommands: ``loss`` (distillation losses between two embedding files),
``gradcheck`` (analytic vs finite-difference gradients), ``eval`` (retrieval
recall), ``toy`` (synthetic end-to-end experiment), ``manifold`` (single
relation/geometry evaluations, the surface the language bindings call), and
``version``.

Exit codes: 0 success, 1 check/assertion failure, 2 input error. All outputs
are deterministic for fixed seeds; floats print as shortest round-trip
decimals.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from . import manifolds as mf
from .fileio import (
    FileFormatError,
    format_float,
    read_embeddings,
    read_truth,
    write_csv,
    write_embeddings,
)
from .losses import (
    DistillConfig,
    RELATIONAL_SCHEMES,
    SCHEME_DIRECT,
    kd_c_loss,
    kd_s_loss,
    scheme_loss,
    total_loss,
)
from .numeric import SplitMix64, finite_diff_grad_array, grad_relative_error
from .toy import SceneConfig, run_experiment
from .vpr import TripletConfig, recall_report

_KIND_SHORT = {"euclidean": "euc", "cosine": "cos", "hyperbolic": "hyp"}


def _bool_flag(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _csv_floats(text: str) -> np.ndarray:
    try:
        vals = [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one value")
    return np.asarray(vals, dtype=np.float64)


def _add_distill_flags(p: argparse.ArgumentParser) -> None:
    d = DistillConfig()
    p.add_argument("--lambda-s", type=float, default=d.lambda_s, help="self-agent loss weight")
    p.add_argument("--lambda-c", type=float, default=d.lambda_c, help="cross-agent loss weight")
    p.add_argument("--curvature", type=float, default=d.curvature, help="ball curvature parameter c")
    p.add_argument("--delta", type=float, default=d.huber_delta, help="Huber transition point")
    p.add_argument("--reduction", choices=["mean", "sum"], default=d.reduction)
    p.add_argument("--include-diagonal", type=_bool_flag, default=d.include_diagonal,
                   metavar="{true,false}")
    p.add_argument("--rkd-normalize", action="store_true",
                   help="divide relation matrices by their off-diagonal mean")
    p.add_argument("--hyp-prescale", type=float, default=d.hyp_prescale,
                   help="row pre-scale before the origin exponential map")
    p.add_argument("--manifolds", default="euc,cos,hyp",
                   help="comma subset of euc,cos,hyp")


def _distill_config(args) -> DistillConfig:
    return DistillConfig(
        lambda_s=args.lambda_s,
        lambda_c=args.lambda_c,
        curvature=args.curvature,
        huber_delta=args.delta,
        reduction=args.reduction,
        include_diagonal=args.include_diagonal,
        rkd_normalize=args.rkd_normalize,
        hyp_prescale=args.hyp_prescale,
        manifolds=tuple(t for t in args.manifolds.split(",") if t.strip()),
    )


def cmd_loss(args) -> int:
    teacher = read_embeddings(args.teacher)
    student = read_embeddings(args.student)
    cfg = _distill_config(args)
    print(f"n={teacher.shape[0]}")
    print(f"c={teacher.shape[1]}")
    for scheme in RELATIONAL_SCHEMES:
        for kind in cfg.manifolds:
            value, _ = scheme_loss(teacher, student, scheme, kind, cfg)
            print(f"{scheme}_{_KIND_SHORT[kind]}={format_float(value)}")
    direct, _ = scheme_loss(teacher, student, SCHEME_DIRECT, None, cfg)
    print(f"direct={format_float(direct)}")
    kd_s, _ = kd_s_loss(teacher, student, cfg)
    kd_c, _ = kd_c_loss(teacher, student, cfg)
    print(f"kd_s={format_float(kd_s)}")
    print(f"kd_c={format_float(kd_c)}")
    # totals take the task loss as 0 (no labels are supplied to this command)
    zeros = np.zeros_like(student)
    for variant in ("s", "c", "sc"):
        tl = total_loss(0.0, zeros, teacher, student, cfg, variant)
        print(f"total_{variant}={format_float(tl.value)}")
    if args.grad_out:
        tl = total_loss(0.0, zeros, teacher, student, cfg, args.variant)
        write_embeddings(args.grad_out, tl.grad)
        print(f"grad_out={args.grad_out}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _distill_config(args)
    rng = SplitMix64(args.seed)
    cases = [(s, k) for s in RELATIONAL_SCHEMES for k in cfg.manifolds]
    cases.append((SCHEME_DIRECT, None))
    worst = 0.0
    for scheme, kind in cases:
        teacher = rng.normals((args.n, args.c))
        student = rng.normals((args.n, args.c))
        _, grad = scheme_loss(teacher, student, scheme, kind, cfg)
        fd = finite_diff_grad_array(
            lambda s: scheme_loss(teacher, s, scheme, kind, cfg)[0], student
        )
        err = grad_relative_error(grad, fd)
        worst = max(worst, err)
        label = scheme if kind is None else f"{scheme}/{_KIND_SHORT[kind]}"
        print(f"case={label} rel_err={format_float(err)}")
    print(f"max_rel_err={format_float(worst)}")
    print(f"tolerance={format_float(args.tolerance)}")
    if worst <= args.tolerance:
        print("gradcheck=pass")
        return 0
    print("gradcheck=fail")
    return 1


def cmd_eval(args) -> int:
    queries = read_embeddings(args.queries)
    database = read_embeddings(args.database)
    truth = read_truth(args.truth, queries.shape[0])
    for q, pos in enumerate(truth):
        for i in pos:
            if not (0 <= i < database.shape[0]):
                raise FileFormatError(
                    f"{args.truth}: query {q} names database index {i} out of range"
                )
    report = recall_report(queries, database, truth, k_max=args.k_max)
    print(f"num_queries={queries.shape[0]}")
    print(f"num_evaluated={report.num_queries_evaluated}")
    print(f"num_skipped={report.num_queries_skipped}")
    print(f"ar_at_1={format_float(report.ar_at_1)}")
    print(f"ar_at_1pct={format_float(report.ar_at_1pct)}")
    if args.curve:
        write_csv(
            args.curve,
            ["k", "recall"],
            [[k + 1, float(v)] for k, v in enumerate(report.curve)],
        )
        print(f"curve={args.curve}")
    return 0


def cmd_toy(args) -> int:
    scene = SceneConfig(
        num_places=args.num_places,
        samples_per_place=args.samples_per_place,
        latent_dim=args.latent_dim,
        dim_a=args.dim_a,
        dim_b=args.dim_b,
        teacher_dim=args.teacher_dim,
        noise_sigma=args.noise_sigma,
        seed=args.scene_seed,
    )
    cfg = _distill_config(args)
    variants = tuple(t for t in args.variants.split(",") if t.strip())
    report = run_experiment(
        scene,
        cfg,
        variants=variants,
        epochs=args.epochs,
        lr=args.lr,
        seeds=args.seeds,
        hidden=args.hidden,
        triplet_cfg=TripletConfig(margin=args.margin),
        student_out_dim=args.student_out_dim,
        adaptor_side=args.adaptor_side,
    )
    rows = []
    for run in report.runs:
        final = run.records[-1]
        for rec in run.records:
            last = rec.epoch == final.epoch
            rows.append(
                [
                    rec.variant,
                    rec.seed,
                    rec.epoch,
                    rec.task_loss,
                    rec.kd_s,
                    rec.kd_c,
                    run.recall.ar_at_1 if last else None,
                    run.recall.ar_at_1pct if last else None,
                ]
            )
    if args.out:
        write_csv(
            args.out,
            ["variant", "seed", "epoch", "task_loss", "kd_s", "kd_c", "ar1", "ar1pct"],
            rows,
        )
        print(f"out={args.out}")
    for s in report.summaries:
        print(
            f"variant={s.variant} mean_ar1={format_float(s.mean_ar1)} "
            f"std_ar1={format_float(s.std_ar1)} mean_ar1pct={format_float(s.mean_ar1pct)} "
            f"std_ar1pct={format_float(s.std_ar1pct)}"
        )
    return 0


def cmd_manifold(args) -> int:
    c = args.curvature
    name = args.name
    if name == "euclidean":
        print(f"value={format_float(mf.euclidean_distance(args.x, _require_y(args)))}")
    elif name == "cosine":
        print(f"value={format_float(mf.cosine_relation(args.x, _require_y(args)))}")
    elif name == "hyperbolic":
        print(f"value={format_float(mf.hyperbolic_distance(args.x, _require_y(args), c))}")
    elif name == "mobius_add":
        out = mf.mobius_add(args.x, _require_y(args), c)
        print("result=" + ",".join(format_float(v) for v in out))
    elif name == "exp0":
        out = mf.exp_map_origin(args.x, c)
        print("result=" + ",".join(format_float(v) for v in out))
    else:  # pragma: no cover - argparse choices guard this
        raise ValueError(f"unknown manifold op {name!r}")
    return 0


def _require_y(args) -> np.ndarray:
    if args.y is None:
        raise ValueError(f"manifold op {args.name!r} needs --y")
    return args.y


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relkd",
        description="Relational distillation losses, gradients, and retrieval evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loss", help="evaluate distillation losses between two embedding files")
    p.add_argument("teacher", help="teacher embedding file (# N C header)")
    p.add_argument("student", help="student embedding file")
    _add_distill_flags(p)
    p.add_argument("--variant", choices=["s", "c", "sc"], default="sc",
                   help="objective whose gradient --grad-out writes")
    p.add_argument("--grad-out", default=None,
                   help="write d(total)/d(student) to this embedding file")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    p.add_argument("--n", type=int, default=4, help="batch size")
    p.add_argument("--c", type=int, default=8, help="channels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    _add_distill_flags(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", help="recall evaluation of query/database embedding files")
    p.add_argument("queries")
    p.add_argument("database")
    p.add_argument("truth", help="per-query positives, lines 'q: i j k'")
    p.add_argument("--k-max", type=int, default=None, help="curve length (default min(25, DB))")
    p.add_argument("--curve", default=None, help="write the Recall@K curve CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("toy", help="synthetic end-to-end distillation experiment")
    scene = SceneConfig()
    p.add_argument("--num-places", type=int, default=scene.num_places)
    p.add_argument("--samples-per-place", type=int, default=scene.samples_per_place)
    p.add_argument("--latent-dim", type=int, default=scene.latent_dim)
    p.add_argument("--dim-a", type=int, default=scene.dim_a)
    p.add_argument("--dim-b", type=int, default=scene.dim_b)
    p.add_argument("--teacher-dim", type=int, default=scene.teacher_dim)
    p.add_argument("--noise-sigma", type=float, default=scene.noise_sigma)
    p.add_argument("--scene-seed", type=int, default=scene.seed)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--margin", type=float, default=TripletConfig().margin)
    p.add_argument("--variants", default="none,s,c,sc")
    p.add_argument("--seeds", type=_csv_ints, default=(0, 1, 2, 3, 4))
    p.add_argument("--student-out-dim", type=int, default=None,
                   help="student output channels (default teacher dim; else adaptor kicks in)")
    p.add_argument("--adaptor-side", choices=["teacher", "student"], default="teacher")
    p.add_argument("--out", default=None, help="write the per-epoch CSV report here")
    _add_distill_flags(p)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("manifold", help="evaluate one relation/geometry operation")
    p.add_argument("name", choices=["euclidean", "cosine", "hyperbolic", "mobius_add", "exp0"])
    p.add_argument("--x", type=_csv_floats, required=True, help="comma-separated vector")
    p.add_argument("--y", type=_csv_floats, default=None)
    p.add_argument("--curvature", type=float, default=1.0)
    p.set_defaults(func=cmd_manifold)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=lambda args: (print(__version__), 0)[1])

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileFormatError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
