"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Set ``HIRPF_KERNELS=python`` to force the fallback.
"""

import os
from types import ModuleType

from . import _pykernels


def _load_compiled() -> ModuleType | None:
    if os.environ.get("HIRPF_KERNELS", "").lower() == "python":
        return None
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
_active: ModuleType = _compiled if _compiled is not None else _pykernels


def compiled_available() -> bool:
    return _compiled is not None


def use(backend: str) -> None:
    """Switch the process-wide kernel backend (``"cython"`` or ``"python"``)."""
    global _active, BACKEND
    if backend == "python":
        _active = _pykernels
    elif backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _compiled
    else:
        raise ValueError(f"unknown kernel backend {backend!r}")
    BACKEND = backend


def get(name: str):
    return getattr(_active, name)


def module(backend: str) -> ModuleType:
    if backend == "python":
        return _pykernels
    if _compiled is None:
        raise RuntimeError("compiled kernels are not built")
    return _compiled


__all__ = ["BACKEND", "compiled_available", "use", "get", "module"]
