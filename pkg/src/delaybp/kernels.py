"""Kernel selection: the compiled slot loop when built, else the Python one.

Set ``DELAYBP_KERNEL=python`` to force the fallback.
"""
import os

from . import _pykernel

python_run_chunk = _pykernel.run_chunk

try:
    from ._ckernel import run_chunk as compiled_run_chunk
except ImportError:  # extension not built
    compiled_run_chunk = None

if compiled_run_chunk is not None and os.environ.get("DELAYBP_KERNEL", "").lower() != "python":
    run_chunk = compiled_run_chunk
    BACKEND = "cython"
else:
    run_chunk = python_run_chunk
    BACKEND = "python"


def get_kernel(name: str | None = None):
    """Return ``(name, run_chunk)``; ``name`` is ``"cython"``, ``"python"`` or None for the default."""
    if name is None:
        return BACKEND, run_chunk
    if name == "python":
        return "python", python_run_chunk
    if name == "cython":
        if compiled_run_chunk is None:
            raise ImportError("compiled kernel is not built")
        return "cython", compiled_run_chunk
    raise ValueError(f"unknown kernel {name!r}")
