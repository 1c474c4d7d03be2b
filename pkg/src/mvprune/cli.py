"""Command-line interface.

Exit codes are fixed for CI scripting: 0 success, 2 usage error, 3 malformed
input, 4 internal error; `bench` additionally exits 1 when an acceptance
check fails. With --json the canonical document is the only thing written to
stdout; human-readable notes go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__, bench as bench_mod, io as mvio
from .allocator import (
    ObjectiveConfig,
    OptimizerMethod,
    SearchSpace,
    evolutionary_optimize,
    grid_search,
    tpe_optimize,
)
from .core import (
    DistanceMeasure,
    RATIO_LOWER_DEFAULT,
    RATIO_UPPER_DEFAULT,
    validate_ratios,
)
from .efficiency import DEFAULT_PROFILE, ModelProfile, SequenceProfile, calibrate_text_len, efficiency_report
from .errors import FormatError, MvpruneError, ValidationError
from .oracle import SceneConfig, generate_scene, mean_coverage_oracle
from .tfps import SelectionStrategy, select_multiview

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4


class UsageError(Exception):
    pass


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(doc_text: str, args) -> None:
    if args.output:
        Path(args.output).write_text(doc_text, encoding="utf-8")
        _note(f"wrote {args.output}")
    if args.json or not args.output:
        sys.stdout.write(doc_text)


def _parse_ratios(args, n_views: int) -> tuple[float, ...]:
    given = [
        name
        for name, value in (
            ("--ratio", args.ratio),
            ("--ratios", args.ratios),
            ("--prune-fraction", args.prune_fraction),
        )
        if value is not None
    ]
    if len(given) != 1:
        raise UsageError("exactly one of --ratio, --ratios, --prune-fraction is required")
    if args.ratio is not None:
        values = [args.ratio] * n_views
    elif args.prune_fraction is not None:
        values = [1.0 - args.prune_fraction] * n_views
    else:
        try:
            values = [float(x) for x in args.ratios.split(",")]
        except ValueError as exc:
            raise UsageError(f"--ratios must be comma-separated reals: {exc}") from exc
        if len(values) != n_views:
            raise UsageError(f"--ratios has {len(values)} entries for {n_views} views")
    try:
        return validate_ratios(values, n_views, RATIO_LOWER_DEFAULT, RATIO_UPPER_DEFAULT)
    except ValidationError as exc:
        raise UsageError(str(exc)) from exc


def cmd_prune(args) -> int:
    vs = mvio.load_mvtk(args.input)
    ratios = _parse_ratios(args, vs.n_views)
    sel = select_multiview(
        vs,
        ratios,
        DistanceMeasure(args.metric),
        SelectionStrategy(args.strategy),
        args.seed,
    )
    _emit(mvio.write_selection_json(sel), args)
    _note(
        f"kept {sel.total_kept} of {sum(tm.n_tokens for _, tm in vs.views)} tokens "
        f"across {vs.n_views} views"
    )
    return EXIT_OK


def cmd_allocate(args) -> int:
    if (args.scene is None) == (not args.gen_scene):
        raise UsageError("exactly one of --scene or --gen-scene is required")
    if args.scene is not None:
        cfg, scene_seed = mvio.read_scene_json(Path(args.scene).read_text(encoding="utf-8"))
    else:
        cfg, scene_seed = SceneConfig(), args.seed
    _vs, _truth, reward = mean_coverage_oracle(cfg, scene_seed)
    objective = ObjectiveConfig(
        oracle=reward,
        reward_scale=args.reward_scale,
        penalty_scale=args.penalty_scale,
    )
    space = SearchSpace(n_views=cfg.n_views, resolution=1.0 / cfg.tokens_per_view)
    method = OptimizerMethod(args.method)
    optimize = {
        OptimizerMethod.TPE: tpe_optimize,
        OptimizerMethod.EVOLUTIONARY: evolutionary_optimize,
        OptimizerMethod.GRID: grid_search,
    }[method]
    run = optimize(space, objective, budget=args.budget, seed=args.seed)
    _emit(mvio.write_run_json(run), args)
    _note(
        f"{method.value}: best score {run.best.score:.6f} at "
        f"ratios {[round(r, 4) for r in run.best.ratios]} ({len(run.trials)} trials)"
    )
    return EXIT_OK


def cmd_gen_scene(args) -> int:
    clusters = (
        tuple(int(x) for x in args.clusters.split(","))
        if args.clusters
        else SceneConfig.__dataclass_fields__["clusters_per_view"].default
    )
    weights = (
        tuple(float(x) for x in args.weights.split(","))
        if args.weights
        else SceneConfig.__dataclass_fields__["view_weights"].default
    )
    cfg = SceneConfig(
        n_views=args.views,
        tokens_per_view=args.tokens_per_view,
        dim=args.dim,
        clusters_per_view=clusters,
        cluster_std=args.cluster_std,
        background_std=args.background_std,
        view_weights=weights,
        cover_radius=args.cover_radius,
    )
    vs, truth = generate_scene(cfg, args.seed)
    out = Path(args.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "scene.json").write_text(mvio.write_scene_json(cfg, args.seed), encoding="utf-8")
    mvio.save_mvtk(vs, out / "tokens.mvtk")
    (out / "truth.json").write_text(mvio.write_truth_json(truth), encoding="utf-8")
    _note(f"wrote scene.json, tokens.mvtk, truth.json under {out}")
    return EXIT_OK


def cmd_efficiency(args) -> int:
    profile = ModelProfile(
        n_layers=args.layers,
        d_model=args.d_model,
        n_heads=args.heads,
        n_kv_heads=args.kv_heads,
        d_ff=args.d_ff,
        bytes_per_element=args.bytes_per_element,
        vocab_size=args.vocab_size,
        include_vocab_head=args.include_vocab_head,
    )
    n_text = args.text
    if args.target_fraction is not None:
        n_text = calibrate_text_len(
            profile,
            SequenceProfile(args.visual_before, args.visual_after, 0),
            args.target_fraction,
        )
        _note(f"calibrated n_text={n_text} for FLOPs fraction {args.target_fraction}")
    rep = efficiency_report(
        profile, SequenceProfile(args.visual_before, args.visual_after, n_text)
    )
    _emit(mvio.write_report_json(rep), args)
    _note(
        f"flops fraction {rep.flops_fraction:.4f}, kv fraction (visual) "
        f"{rep.kv_fraction_visual:.5f}, token fraction {rep.token_fraction:.5f}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    results = bench_mod.run_all(
        progress=lambda r: _note(
            f"{'PASS' if r.passed else 'FAIL'}  {r.criterion}  {r.detail} [{r.seconds:.1f}s]"
        )
    )
    doc = {
        "schema_version": mvio.SCHEMA_VERSION,
        "kind": "bench_results",
        "all_passed": all(r.passed for r in results),
        "checks": [
            {
                "criterion": r.criterion,
                "passed": r.passed,
                "detail": r.detail,
                "seconds": round(r.seconds, 3),
            }
            for r in results
        ],
    }
    _emit(mvio.dumps_canonical(doc), args)
    width = max(len(r.criterion) for r in results)
    _note("-" * (width + 24))
    for r in results:
        _note(f"{'PASS' if r.passed else 'FAIL'}  {r.criterion:<{width}}  {r.seconds:7.1f}s")
    return EXIT_OK if doc["all_passed"] else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvprune",
        description="Multi-view visual token pruning: diverse selection, "
        "ratio optimization, cost accounting.",
    )
    parser.add_argument("--version", action="version", version=f"mvprune {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="base seed (default 42)")
    common.add_argument("--output", help="output path")
    common.add_argument(
        "--json", action="store_true", help="write the canonical JSON document to stdout"
    )

    p = sub.add_parser("prune", parents=[common], help="select tokens from an MVTK dump")
    p.add_argument("--input", required=True, help="input .mvtk file")
    p.add_argument("--ratio", type=float, help="uniform retention fraction")
    p.add_argument("--ratios", help="comma-separated per-view retention fractions")
    p.add_argument(
        "--prune-fraction",
        type=float,
        help="uniform fraction to remove (converted to retention 1 - x)",
    )
    p.add_argument("--metric", choices=[m.value for m in DistanceMeasure], default="cosine")
    p.add_argument(
        "--strategy", choices=[s.value for s in SelectionStrategy], default="tfps"
    )
    p.set_defaults(func=cmd_prune)

    a = sub.add_parser("allocate", parents=[common], help="optimize per-view ratios")
    a.add_argument("--scene", help="scene JSON produced by gen-scene")
    a.add_argument(
        "--gen-scene",
        action="store_true",
        help="use the default synthetic scene (seeded by --seed)",
    )
    a.add_argument("--method", choices=[m.value for m in OptimizerMethod], default="tpe")
    a.add_argument("--budget", type=int, default=100, help="objective evaluations (default 100)")
    a.add_argument("--reward-scale", type=float, default=0.5)
    a.add_argument("--penalty-scale", type=float, default=-0.05)
    a.set_defaults(func=cmd_allocate)

    g = sub.add_parser("gen-scene", parents=[common], help="generate a synthetic scene")
    g.add_argument("--views", type=int, default=6)
    g.add_argument("--tokens-per-view", type=int, default=SceneConfig().tokens_per_view)
    g.add_argument("--dim", type=int, default=SceneConfig().dim)
    g.add_argument("--clusters", help="comma-separated clusters per view")
    g.add_argument("--cluster-std", type=float, default=SceneConfig().cluster_std)
    g.add_argument("--background-std", type=float, default=SceneConfig().background_std)
    g.add_argument("--weights", help="comma-separated view weights summing to 1")
    g.add_argument("--cover-radius", type=float, default=SceneConfig().cover_radius)
    g.set_defaults(func=cmd_gen_scene)

    e = sub.add_parser("efficiency", parents=[common], help="inference cost report")
    e.add_argument("--visual-before", type=int, required=True)
    e.add_argument("--visual-after", type=int, required=True)
    e.add_argument("--text", type=int, default=0, help="text token count (default 0)")
    e.add_argument(
        "--target-fraction",
        type=float,
        help="solve for the text length hitting this FLOPs fraction",
    )
    e.add_argument("--layers", type=int, default=DEFAULT_PROFILE.n_layers)
    e.add_argument("--d-model", type=int, default=DEFAULT_PROFILE.d_model)
    e.add_argument("--heads", type=int, default=DEFAULT_PROFILE.n_heads)
    e.add_argument("--kv-heads", type=int, default=DEFAULT_PROFILE.n_kv_heads)
    e.add_argument("--d-ff", type=int, default=DEFAULT_PROFILE.d_ff)
    e.add_argument("--bytes-per-element", type=int, default=DEFAULT_PROFILE.bytes_per_element)
    e.add_argument("--vocab-size", type=int, default=DEFAULT_PROFILE.vocab_size)
    e.add_argument("--include-vocab-head", action="store_true")
    e.set_defaults(func=cmd_efficiency)

    b = sub.add_parser("bench", parents=[common], help="run the acceptance battery")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if "MVPRUNE_THREADS" in os.environ:
        raw = os.environ["MVPRUNE_THREADS"]
        if not raw.isdigit() or int(raw) < 1:
            _note(f"MVPRUNE_THREADS={raw!r} is not a positive integer")
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _note(f"usage error: {exc}")
        return EXIT_USAGE
    except FormatError as exc:
        _note(f"input error [{exc.code}]: {exc}")
        return EXIT_INPUT
    except ValidationError as exc:
        _note(f"input error [{exc.code}]: {exc}")
        return EXIT_INPUT
    except OSError as exc:
        _note(f"input error [IO_ERROR]: {exc}")
        return EXIT_INPUT
    except MvpruneError as exc:
        _note(f"internal error [{exc.code}]: {exc}")
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit 4
        _note(f"internal error: {exc!r}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
