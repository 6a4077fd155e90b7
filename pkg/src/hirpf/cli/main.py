"""Argument parsing, config layering and exit codes for the ``hirpf`` command."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import config as C
from .commands import PREPARE, RuntimeFailure, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (JSON-parsed); repeatable, later wins")
    p.add_argument("--seed", type=int, help="overrides seed")
    p.add_argument("--run-dir", help="overrides paths.run_dir")
    p.add_argument("--error-json", action="store_true", help="report failures as one JSON object on stderr")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hirpf", description="identity-routed adapter toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="fine-tune adapters and routers; writes checkpoints and metrics")
    _common(p)
    p.add_argument("--dataset", help="overrides paths.dataset")
    p.add_argument("--fixture", action="store_true", help="train on the built-in 32-dialogue fixture")
    p.add_argument("--max-steps", type=int, help="overrides train.max_steps")
    p.add_argument("--log-every", type=int, default=0)

    p = sub.add_parser("chat", help="talk to a checkpoint under a chosen identity set")
    _common(p)
    p.add_argument("--checkpoint", help="overrides paths.checkpoint")
    p.add_argument("--activate", default="", help="comma-separated identity names")
    p.add_argument("--script", help="read input lines from this file instead of stdin")
    p.add_argument("--transcript", help="save the conversation here as dialogue JSONL on exit")
    p.add_argument("--max-new", type=int, default=64)
    p.add_argument("--temperature", type=float, help="sample at this temperature (default greedy)")

    p = sub.add_parser("datagen", help="generate the dialogue dataset (mock backend by default)")
    _common(p)

    for name, what in (("eval-scale", "questionnaire-style scale test"),
                       ("eval-situation", "open situation test"),
                       ("simulate", "questionnaire or debate over a population")):
        p = sub.add_parser(name, help=what)
        _common(p)
        p.add_argument("--checkpoint", help="overrides paths.checkpoint")

    p = sub.add_parser("gradcheck", help="finite-difference check of the toy model's gradients")
    _common(p)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--identities", help="check only what this activation reaches (default: dense, everything)")
    p.add_argument("--output", help="also write gradcheck.json and a manifest here")

    p = sub.add_parser("stats", help="dataset statistics")
    _common(p)
    p.add_argument("--dataset", help="overrides paths.dataset")
    p.add_argument("--json", action="store_true", help="print metric definitions and values as JSON")
    p.add_argument("--output", help="also write stats.json and a manifest here")
    return parser


def flag_overrides(args) -> list[tuple[list[str], object]]:
    out: list[tuple[list[str], object]] = [C.parse_override(s) for s in args.overrides]
    if args.seed is not None:
        out.append((["seed"], args.seed))
    if args.run_dir:
        out.append((["paths", "run_dir"], args.run_dir))
    for flag, path in (("dataset", ["paths", "dataset"]), ("checkpoint", ["paths", "checkpoint"]),
                       ("max_steps", ["train", "max_steps"])):
        value = getattr(args, flag, None)
        if value is not None:
            out.append((path, value))
    return out


def _fail(args, code: int, exc: BaseException) -> int:
    kind = "validation" if code == EXIT_VALIDATION else "runtime"
    if getattr(args, "error_json", False):
        sys.stderr.write(json.dumps({"error": {"kind": kind, "exit_code": code, "type": type(exc).__name__,
                                               "message": str(exc)}}, sort_keys=True) + "\n")
    else:
        sys.stderr.write(f"hirpf: {kind} error: {exc}\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = C.resolve(args.config, flag_overrides(args))
        job = PREPARE[args.command](cfg, args)
    except (ValidationError, ValueError, KeyError, FileNotFoundError) as exc:
        return _fail(args, EXIT_VALIDATION, exc)
    except Exception as exc:  # loading failures other than bad input
        return _fail(args, EXIT_RUNTIME, exc)
    try:
        return job()
    except ValidationError as exc:
        return _fail(args, EXIT_VALIDATION, exc)
    except (RuntimeFailure, Exception) as exc:
        return _fail(args, EXIT_RUNTIME, exc)
    except KeyboardInterrupt:
        return _fail(args, EXIT_RUNTIME, RuntimeFailure("interrupted"))
