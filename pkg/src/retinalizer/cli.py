"""Command-line entry point driving the full pipeline.

Every subcommand writes an ``effective_config.json`` snapshot next to its
outputs so any run can be reproduced from that file alone. Progress goes to
stderr; machine-readable outputs go to files. Exit codes: 2 configuration
error, 3 data error, 4 numeric error, 5 storage/I-O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import (
    ExperimentConfig,
    apply_overrides,
    load_config,
    write_effective_config,
)
from .errors import ConfigurationError, RetinalizerError

log = logging.getLogger("retinalizer")


def _out_root(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("RETINALIZER_OUT", "runs"))


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "override", None):
        cfg = apply_overrides(cfg, args.override)
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
        cfg.eval.seed = args.seed
    cfg.validate()
    return cfg


def _snapshot(cfg: ExperimentConfig, out_dir: Path, command: str, extra: dict) -> None:
    write_effective_config(cfg, out_dir, extra={"command": command, **extra})


def _pool(corpus_dir):
    from .corpus import DatasetPool, load_corpus

    return DatasetPool(load_corpus(corpus_dir))


def cmd_synth_data(args) -> int:
    from .corpus import build_phantom_corpus

    cfg = _load_cfg(args)
    out = _out_root(args) / "corpus" if not args.out else Path(args.out)
    seed = args.seed if args.seed is not None else 0
    log.info("building phantom corpus (seed=%d) under %s", seed, out)
    manifests = build_phantom_corpus(cfg.corpus, seed=seed, out_dir=out)
    _snapshot(cfg, out, "synth-data", {"seed": seed, "out": str(out)})
    log.info("wrote %d dataset manifests", len(manifests))
    return 0


def cmd_build_tasks(args) -> int:
    from .taskgen import enumerate_tasks, precompute_task_pairs

    cfg = _load_cfg(args)
    pool = _pool(args.corpus)
    out = Path(args.out) if args.out else _out_root(args) / "tasks"
    tasks = enumerate_tasks(pool, cfg.tasks, include_unseen=args.include_unseen)
    seed = args.seed if args.seed is not None else 0
    manifest = precompute_task_pairs(pool, tasks, cfg.tasks, out, seed=seed, split=args.split)
    _snapshot(cfg, out, "build-tasks", {"seed": seed, "split": args.split})
    log.info("task manifest at %s", manifest)
    return 0


def cmd_train(args) -> int:
    from .taskgen import seen_tasks
    from .training import train

    cfg = _load_cfg(args)
    if args.recolor:
        cfg.train.recolor_enabled = True
    pool = _pool(args.corpus)
    out = _out_root(args)
    tasks = seen_tasks(pool, cfg.tasks)
    result = train(pool, tasks, cfg.model, cfg.train, cfg.tasks, out, run_name=args.run_name)
    _snapshot(cfg, result.run_dir, "train", {"run_name": args.run_name})
    log.info(
        "trained %d steps; last=%s best=%s",
        result.steps, result.last_checkpoint, result.best_checkpoint,
    )
    return 0


def cmd_train_single(args) -> int:
    from .taskgen import enumerate_tasks
    from .training import train_single_task

    cfg = _load_cfg(args)
    pool = _pool(args.corpus)
    tasks = {t.id: t for t in enumerate_tasks(pool, cfg.tasks)}
    if args.task not in tasks:
        raise ConfigurationError(
            f"unknown task {args.task!r}; choose one of {sorted(tasks)}"
        )
    out = _out_root(args)
    result = train_single_task(
        pool, tasks[args.task], cfg.model, cfg.train, cfg.tasks, out, run_name=args.run_name
    )
    _snapshot(cfg, result.run_dir, "train-single", {"task": args.task})
    log.info("single-task run done; last=%s", result.last_checkpoint)
    return 0


def cmd_eval(args) -> int:
    from .evaluation import ModelPredictor, evaluate
    from .taskgen import enumerate_tasks

    cfg = _load_cfg(args)
    pool = _pool(args.corpus)
    out = _out_root(args)
    out.mkdir(parents=True, exist_ok=True)
    predictor = ModelPredictor.from_checkpoint(args.checkpoint, args.predictor_name)
    tasks = {t.id: t for t in enumerate_tasks(pool, cfg.tasks)}
    wanted = args.task or [t for t in tasks if not tasks[t].seen]
    rows = []
    for task_id in wanted:
        if task_id not in tasks:
            raise ConfigurationError(f"unknown task {task_id!r}")
        rep = evaluate(
            predictor, pool, tasks[task_id], cfg.tasks, cfg.eval,
            split=args.split, predictor_name=args.predictor_name,
            dump_dir=(out / "predictions") if cfg.eval.dump_predictions else None,
        )
        rows.append(rep)
        log.info("%s: %s = %.3f ± %.3f (n=%d)", task_id, rep.metric, rep.mean, rep.std, rep.count)
    report_path = out / "eval_report.csv"
    with open(report_path, "w") as fh:
        fh.write("task,predictor,metric,mean,std,count\n")
        for rep in rows:
            fh.write(
                f"{rep.task_id},{rep.predictor},{rep.metric},"
                f"{rep.mean:.6f},{rep.std:.6f},{rep.count}\n"
            )
    _snapshot(cfg, out, "eval", {"checkpoint": str(args.checkpoint), "split": args.split})
    log.info("report at %s", report_path)
    return 0


def cmd_domain_gen(args) -> int:
    from .corpus import load_corpus
    from .evaluation import run_domain_generalization

    cfg = _load_cfg(args)
    out = _out_root(args)
    manifests = load_corpus(args.corpus)
    results = run_domain_generalization(manifests, cfg, out)
    for res in results:
        table_path = out / f"table2_holdout_{res.vendor}.txt"
        table_path.write_text(res.table.render() + "\n")
        res.table.to_csv(out / f"table2_holdout_{res.vendor}.csv")
        print(res.table.render(), file=sys.stderr)
        log.info("holdout %s: audit leaked=%d, table at %s",
                 res.vendor, len(res.leaked_ids), table_path)
    _snapshot(cfg, out, "domain-gen", {})
    return 0


def cmd_report(args) -> int:
    from .evaluation import run_unseen_suite

    cfg = _load_cfg(args)
    pool = _pool(args.corpus)
    out = _out_root(args)
    out.mkdir(parents=True, exist_ok=True)
    checkpoints = {}
    for name, path in (
        ("Retinalizer", args.retinalizer),
        ("Retinalizer Rec.", args.recolored),
        ("Single-task", args.single_task),
    ):
        checkpoints[name] = path
    table = run_unseen_suite(checkpoints, pool, cfg.tasks, cfg.eval)
    (out / "table1_unseen.txt").write_text(table.render() + "\n")
    table.to_csv(out / "table1_unseen.csv")
    table.scores_csv(out / "table1_scores.csv")
    print(table.render(), file=sys.stderr)
    _snapshot(cfg, out, "report", {})
    log.info("unseen-suite table written under %s", out)
    return 0


def cmd_infer(args) -> int:
    from .imaging import load_image_png, save_image_png, save_labelmap_png, to_uint8
    from .network import load_checkpoint, predict
    from .palette import decode_to_classes, extract_context_colors

    model = load_checkpoint(args.checkpoint)
    query = load_image_png(args.query)
    pairs = []
    for spec in args.pair:
        try:
            inp_path, out_path = spec.split(":", 1)
        except ValueError:
            raise ConfigurationError(
                f"--pair expects INPUT.png:OUTPUT.png, got {spec!r}"
            ) from None
        pairs.append((load_image_png(inp_path), load_image_png(out_path)))
    if not pairs:
        raise ConfigurationError("at least one --pair is required")
    pred = predict(model, pairs, query)
    out = Path(args.out)
    save_image_png(pred, out)
    log.info("prediction written to %s", out)
    if args.decode:
        pal = extract_context_colors(pairs)
        decoded = decode_to_classes(pred, pal)
        label_path = out.with_suffix(".labels.png")
        save_labelmap_png(decoded.labels, label_path, to_uint8(pal.colors))
        palette_path = out.with_suffix(".palette.json")
        palette_path.write_text(json.dumps({"palette": pal.to_jsonable()}, indent=2))
        log.info("decoded labels at %s (palette: %s)", label_path, palette_path)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_cfg(args)
    app = create_app(
        checkpoint=args.checkpoint,
        corpus_dir=args.corpus,
        frontend_dir=args.frontend,
        task_params=cfg.tasks,
    )
    log.info("serving on %s:%d", args.host, args.port)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retinalizer",
        description="Visual in-context learning testbed for retinal OCT phantoms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=None):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.FIELD=VALUE",
                       help="config override, e.g. train.epochs=1 (repeatable)")
        p.add_argument("--out", help="output directory (default: $RETINALIZER_OUT or ./runs)")
        p.add_argument("--seed", type=int, default=seed_default)

    p = sub.add_parser("synth-data", help="generate the phantom corpus")
    common(p, seed_default=0)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("build-tasks", help="precompute task pairs as paired PNGs")
    common(p, seed_default=0)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="train", choices=("train", "val", "test"))
    p.add_argument("--include-unseen", action="store_true")
    p.set_defaults(fn=cmd_build_tasks)

    p = sub.add_parser("train", help="train the in-context model on all seen tasks")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--run-name", default="retinalizer")
    p.add_argument("--recolor", action="store_true",
                   help="enable the random recoloring augmentation")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("train-single", help="train the single-task baseline")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True, help="task id, e.g. semantic:segmentation:dme")
    p.add_argument("--run-name", default=None)
    p.set_defaults(fn=cmd_train_single)

    p = sub.add_parser("eval", help="evaluate a checkpoint on tasks")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", action="append", help="task id (repeatable; default: all unseen)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--predictor-name", default="Retinalizer")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("domain-gen", help="leave-one-vendor-out protocol")
    common(p)
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=cmd_domain_gen)

    p = sub.add_parser("report", help="unseen-task report table over checkpoints")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--retinalizer", help="checkpoint for the plain model column")
    p.add_argument("--recolored", help="checkpoint for the recolor-augmented column")
    p.add_argument("--single-task", help="checkpoint for the single-task column")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("infer", help="one-shot inference from PNG files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--pair", action="append", default=[],
                   metavar="INPUT.png:OUTPUT.png", help="context pair (repeatable)")
    p.add_argument("--out", required=True, help="prediction PNG path")
    p.add_argument("--decode", action="store_true", help="also write decoded labels")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("serve", help="run the inference HTTP service")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--checkpoint")
    p.add_argument("--frontend", help="directory with the built UI bundle")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except RetinalizerError as exc:
        log.error("%s", exc)
        return getattr(exc, "exit_code", 1)
    except OSError as exc:
        log.error("%s", exc)
        return 5


if __name__ == "__main__":
    sys.exit(main())
