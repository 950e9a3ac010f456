"""Backend selection for the hot kernels.

The compiled extension (``kgdg._core``) is preferred when importable; the
numpy/scipy implementation (``kgdg._kernels_py``) is the fallback.  Set the
environment variable ``KGDG_BACKEND=python`` (or ``compiled``) before import
to force a choice, or call :func:`set_backend` at runtime (used by the
benchmark and the parity tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}
try:
    from . import _core

    _BACKENDS["compiled"] = _core
except ImportError:
    _core = None

_env = os.environ.get("KGDG_BACKEND")
if _env is not None and _env not in _BACKENDS:
    raise ImportError(
        f"KGDG_BACKEND={_env!r} not available; choices: {sorted(_BACKENDS)}"
    )
_active = _BACKENDS[_env] if _env else _BACKENDS.get("compiled", _kernels_py)


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def active_backend() -> str:
    return _active.NAME


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choices: {sorted(_BACKENDS)}")
    _active = _BACKENDS[name]


def nl_gradient(a, b, p, eps):
    return _active.nl_gradient(a, b, p, eps)


def nl_gradient_deriv(a, b, p, eps):
    return _active.nl_gradient_deriv(a, b, p, eps)


def solve_wide_cyclic(d, w, rhs):
    return _active.solve_wide_cyclic(d, w, rhs)
