"""Kernel backend selection.

The compiled module is used when it imports; setting HIRING_PURE_PYTHON=1
forces the pure-Python kernels.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load_compiled() -> ModuleType | None:
    try:
        from . import _ckernels  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()

if os.environ.get("HIRING_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    kernels: ModuleType = _kernels_py
else:
    kernels = _compiled

BACKEND = kernels.NAME


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])
