"""Selects the compiled kernel backend, falling back to pure NumPy.

The compiled extension is optional: source installs without a C toolchain
still work, just slower.  Selection happens once at import; the env var
``SMNARX_BACKEND`` forces a choice:

    auto      compiled if available, else python (default)
    c         require the compiled extension, raise if missing
    python    force the NumPy fallback
"""

from __future__ import annotations

import os

from . import _kernels_py

__all__ = ["kernels", "BACKEND", "available_backends", "get_kernels"]

_COMPILED = None
_COMPILED_ERROR: str | None = None
try:
    from . import _kernels_c as _COMPILED  # type: ignore[no-redef]
except ImportError as exc:  # pragma: no cover - depends on build environment
    _COMPILED_ERROR = str(exc)


def available_backends() -> tuple[str, ...]:
    return ("c", "python") if _COMPILED is not None else ("python",)


def get_kernels(name: str):
    """Kernel module for an explicit backend name ('c' or 'python')."""
    if name in ("python", "py"):
        return _kernels_py
    if name in ("c", "compiled"):
        if _COMPILED is None:
            raise ImportError(
                f"compiled kernels unavailable ({_COMPILED_ERROR}); "
                "reinstall with a C toolchain or set SMNARX_BACKEND=python"
            )
        return _COMPILED
    raise ValueError(f"unknown backend {name!r}; expected 'auto', 'c' or 'python'")


def _select():
    choice = os.environ.get("SMNARX_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return (_COMPILED, "c") if _COMPILED is not None else (_kernels_py, "python")
    mod = get_kernels(choice)
    return mod, ("python" if mod is _kernels_py else "c")


kernels, BACKEND = _select()
