"""Selects the compiled sampling kernel when available, else the Python one.

Set ``CONSYM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernel

python_kernel = _pykernel
compiled_kernel = None

if os.environ.get("CONSYM_PURE_PYTHON") != "1":
    try:
        from . import _ckernel as compiled_kernel
    except ImportError:  # extension not built
        compiled_kernel = None

default_kernel = compiled_kernel if compiled_kernel is not None else python_kernel
IMPLEMENTATION = default_kernel.IMPLEMENTATION


def get_kernel(name: str | None = None):
    """``None`` -> default, ``"python"`` or ``"cython"``."""
    if name is None:
        return default_kernel
    if name == "python":
        return python_kernel
    if name == "cython":
        if compiled_kernel is None:
            raise ImportError("compiled kernel is not built (pip install -e . --no-build-isolation)")
        return compiled_kernel
    raise ValueError(f"unknown kernel {name!r}")
