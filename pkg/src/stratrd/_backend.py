"""Kernel backend selection.

The compiled extension (``stratrd._speedups``) is preferred when it imported
cleanly; otherwise the pure-Python twin is used.  ``STRATRD_BACKEND`` forces
the choice: ``compiled``/``c`` or ``python``/``py``.
"""

from __future__ import annotations

import os

_requested = os.environ.get("STRATRD_BACKEND", "auto").strip().lower()

if _requested in ("python", "py", "pure"):
    from . import _kernels as kernels

    BACKEND = "python"
elif _requested in ("compiled", "c", "cython"):
    from . import _speedups as kernels  # type: ignore[no-redef]

    BACKEND = "compiled"
elif _requested in ("auto", ""):
    try:
        from . import _speedups as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels as kernels

        BACKEND = "python"
else:
    raise ImportError(
        f"unknown STRATRD_BACKEND value {_requested!r}; "
        "use 'auto', 'compiled', or 'python'"
    )


def backend_name() -> str:
    return BACKEND


def available_backends():
    """Names of importable kernel backends (used by tests and benchmarks)."""
    names = ["python"]
    try:
        from . import _speedups  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names


def get_kernels(name: str):
    if name == "python":
        from . import _kernels

        return _kernels
    if name == "compiled":
        from . import _speedups

        return _speedups
    raise ValueError(f"unknown backend {name!r}")
