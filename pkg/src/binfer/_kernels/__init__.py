"""Kernel backend selection.

The hot loops (XNOR-popcount rows, window gathering, OR-pooling) exist twice:
a compiled Cython core (``binfer._kernels._core``) and a numpy fallback
(``binfer._kernels.pykernels``). The compiled core is preferred and the
choice is made once, at import time. Set ``BINFER_KERNELS=python`` or
``=cython`` to force a backend; forcing ``cython`` raises if the extension
was not built.
"""
from __future__ import annotations

import os

from . import pykernels


def get_backend(name: str):
    """Return a specific backend module by name ('python' or 'cython')."""
    if name == "python":
        return pykernels
    if name == "cython":
        from . import _core  # type: ignore[attr-defined]

        return _core
    raise ValueError(f"unknown kernel backend: {name!r}")


def _select():
    forced = os.environ.get("BINFER_KERNELS", "")
    if forced:
        return get_backend(forced)
    try:
        return get_backend("cython")
    except ImportError:
        return pykernels


kernels = _select()


def active_backend() -> str:
    return kernels.NAME


def available_backends() -> list[str]:
    names = ["python"]
    try:
        get_backend("cython")
        names.append("cython")
    except ImportError:
        pass
    return names
