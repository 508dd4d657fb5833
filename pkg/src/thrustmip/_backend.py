"""Kernel backend selection.

The compiled extension ``thrustmip._kernels`` is used when it imports; the
pure-Python ``thrustmip._kernels_py`` is the fallback.  Setting
``THRUSTMIP_BACKEND=python`` forces the fallback.
"""

import os

from thrustmip import _kernels_py

kernels = _kernels_py
if os.environ.get("THRUSTMIP_BACKEND", "").lower() != "python":
    try:
        from thrustmip import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.NAME


def available():
    """Names of the importable backends."""
    names = ["python"]
    try:
        from thrustmip import _kernels  # noqa: F401
    except ImportError:
        return names
    return ["compiled"] + names


def get(name):
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from thrustmip import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
