"""Kernel backend selection.

The compiled Cython kernel is preferred when importable; the pure numpy
fallback is always available. Selection happens once at import and can be
forced with RANKMATCH_BACKEND=cython|python (a forced backend that cannot be
loaded is an error rather than a silent substitution).
"""

from __future__ import annotations

import logging
import os

from .errors import ConfigError

log = logging.getLogger(__name__)

_ENV_VAR = "RANKMATCH_BACKEND"


def _load(name: str):
    if name == "python":
        from . import _kernel_py

        return _kernel_py
    if name == "cython":
        from . import _kernel  # type: ignore[attr-defined]

        return _kernel
    raise ConfigError(f"unknown backend {name!r} (choose 'cython' or 'python')")


def available_backends() -> list[str]:
    names = []
    try:
        _load("cython")
        names.append("cython")
    except ImportError:
        pass
    names.append("python")
    return names


def _select_initial():
    forced = os.environ.get(_ENV_VAR)
    if forced:
        try:
            return _load(forced)
        except ImportError as exc:
            raise ConfigError(
                f"{_ENV_VAR}={forced!r} requested but that backend failed to load: {exc}"
            ) from exc
    try:
        return _load("cython")
    except ImportError:
        log.info("compiled kernel unavailable; using the pure Python backend")
        return _load("python")


ACTIVE = _select_initial()


def kernel():
    """The currently active kernel module."""
    return ACTIVE


def backend_name() -> str:
    return ACTIVE.BACKEND_NAME


def activate(name: str):
    """Switch backends at runtime (tests and benchmarks). Returns the module."""
    global ACTIVE
    ACTIVE = _load(name)
    return ACTIVE
