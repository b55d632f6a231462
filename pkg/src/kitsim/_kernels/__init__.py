"""Backend selection for the numerical kernels.

The compiled extension is used when it imports; otherwise the numpy twin.
Set ``KITSIM_BACKEND=python`` to force the fallback.
"""

import os

from kitsim._kernels import _pykernels

python_backend = _pykernels

try:
    if os.environ.get("KITSIM_BACKEND", "").lower() == "python":
        raise ImportError("python backend requested")
    from kitsim._kernels import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

device_abcd = backend.device_abcd
cme_integrate = backend.cme_integrate

__all__ = [
    "BACKEND",
    "backend",
    "compiled_backend",
    "python_backend",
    "device_abcd",
    "cme_integrate",
]
