"""Backend selection for the hot assembly kernel.

The compiled extension is used when it was built and ``MONOFLOW_PURE_PYTHON``
is unset; otherwise the numpy implementation is used. Both expose
``assemble_edge`` with the same signature.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("MONOFLOW_PURE_PYTHON"):
    backend = _compiled
    BACKEND = "cython"
else:
    backend = _kernels_py
    BACKEND = "python"

assemble_edge = backend.assemble_edge


def get_backend(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); the active one by default."""
    if name is None:
        return backend
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None
