"""Command-line driver: one subcommand per pipeline stage plus ``pipeline``.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as config_mod
from . import pipeline
from .dataset import ManifestError
from .imagery import NetpbmError
from .student.checkpoint import CheckpointError
from .student.net import ConfigurationError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _split_overrides(argv: list[str]) -> tuple[list[str], dict[str, str]]:
    """Pull ``--section.key value`` (or ``--section.key=value``) pairs out of argv."""
    rest, overrides = [], {}
    i = 0
    while i < len(argv):
        arg = argv[i]
        name = arg[2:].split("=", 1)[0] if arg.startswith("--") else ""
        if "." in name:
            if "=" in arg:
                overrides[name] = arg.split("=", 1)[1]
            else:
                if i + 1 >= len(argv):
                    raise UsageError(f"{arg} needs a value")
                overrides[name] = argv[i + 1]
                i += 1
        else:
            rest.append(arg)
        i += 1
    return rest, overrides


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="unsupfg", description="Unsupervised foreground discovery: teacher, selection, student.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, workers=False):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int)
        if workers:
            sp.add_argument("--workers", type=int)
        return sp

    s = common(sub.add_parser("synth", help="generate the synthetic corpus"), workers=True)
    s.add_argument("--out", required=True)

    s = common(sub.add_parser("teach", help="teacher soft masks for every video of a manifest"), workers=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)

    s = common(sub.add_parser("select", help="score masks and keep the top fraction"))
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="output manifest path")
    s.add_argument("--keep-fraction", type=float)

    s = common(sub.add_parser("augment", help="scale-and-crop training examples"), workers=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n-random", type=int)

    s = common(sub.add_parser("train", help="train the student"))
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)

    s = common(sub.add_parser("infer", help="student soft masks for every image"), workers=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)

    s = common(sub.add_parser("boxes", help="boxes from soft masks"))
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="output manifest path")
    s.add_argument("--theta-rel", type=float)
    s.add_argument("--min-area-frac", type=float)

    s = common(sub.add_parser("eval", help="evaluation reports"), workers=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--metric", choices=pipeline.METRICS, default="maxf")
    s.add_argument("--out", help="report JSON path")

    s = common(sub.add_parser("pipeline", help="run every stage"), workers=True)
    s.add_argument("--out", help="working directory (overrides run.workdir)")
    return p


def _load_config(args, overrides: dict[str, str]) -> config_mod.RunConfig:
    flags = dict(overrides)
    if args.seed is not None:
        flags["run.seed"] = str(args.seed)
    if getattr(args, "workers", None) is not None:
        flags["run.workers"] = str(args.workers)
    for attr, key in (
        ("keep_fraction", "select.keep_fraction"),
        ("n_random", "augment.n_random"),
        ("theta_rel", "boxes.theta_rel"),
        ("min_area_frac", "boxes.min_area_frac"),
    ):
        if getattr(args, attr, None) is not None:
            flags[key] = str(getattr(args, attr))
    if args.command == "pipeline" and args.out:
        flags["run.workdir"] = args.out
    return config_mod.load(args.config, flags)


def _dispatch(args, cfg: config_mod.RunConfig) -> None:
    w = cfg.run.workers
    cmd = args.command
    if cmd == "synth":
        paths = pipeline.synth_stage(cfg.synth, args.out, w)
        for split, path in sorted(paths.items()):
            print(f"{split}: {path}")
    elif cmd == "teach":
        print(pipeline.teach_stage(args.manifest, args.out, cfg.teacher, w))
    elif cmd == "select":
        print(pipeline.select_stage(args.manifest, args.out, cfg.select))
    elif cmd == "augment":
        print(pipeline.augment_stage(args.manifest, args.out, cfg.augment, cfg.run.seed, w))
    elif cmd == "train":
        print(pipeline.train_stage(args.manifest, args.out, cfg.train))
    elif cmd == "infer":
        print(pipeline.infer_stage(args.checkpoint, args.manifest, args.out, w))
    elif cmd == "boxes":
        print(pipeline.boxes_stage(args.manifest, args.out, cfg.boxes))
    elif cmd == "eval":
        for r in pipeline.eval_stage(args.manifest, args.metric, args.out, cfg.boxes.theta_rel, w):
            print(r.table())
    elif cmd == "pipeline":
        reports = pipeline.run_pipeline(cfg)
        for name in sorted(reports):
            r = reports[name]
            print(f"{name:<24} {r.mean:.4f}  ({r.frames} frames)")


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        rest, overrides = _split_overrides(argv)
        args = build_parser().parse_args(rest)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args, overrides)
        _dispatch(args, cfg)
    except (config_mod.ConfigError, ConfigurationError, ManifestError, NetpbmError, CheckpointError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        logging.getLogger(__name__).debug("stage failed", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())
