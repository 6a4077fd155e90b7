"""Command-line entry point: ``hirpf <command> [--config FILE] [flags]``."""

from .main import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, build_parser, main

__all__ = ["EXIT_OK", "EXIT_RUNTIME", "EXIT_VALIDATION", "build_parser", "main"]
