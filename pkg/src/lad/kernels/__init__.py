"""Hot numerical kernels.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy fallback in ``_pykernels`` is loaded. Set ``LAD_KERNELS=python`` to force
the fallback (used by the benchmark and the backend-equivalence tests).
"""

from __future__ import annotations

import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("LAD_KERNELS", "").lower() != "python":
    backend = compiled_backend
    BACKEND_NAME = "cython"
else:
    backend = python_backend
    BACKEND_NAME = "python"

layer_norm_fwd = backend.layer_norm_fwd
layer_norm_bwd = backend.layer_norm_bwd
softmax_fwd = backend.softmax_fwd
softmax_bwd = backend.softmax_bwd
gather_weighted_fwd = backend.gather_weighted_fwd
gather_weighted_bwd = backend.gather_weighted_bwd
dijkstra_csr = backend.dijkstra_csr
nearest_centroid = backend.nearest_centroid

__all__ = [
    "BACKEND_NAME",
    "backend",
    "compiled_backend",
    "python_backend",
    "layer_norm_fwd",
    "layer_norm_bwd",
    "softmax_fwd",
    "softmax_bwd",
    "gather_weighted_fwd",
    "gather_weighted_bwd",
    "dijkstra_csr",
    "nearest_centroid",
]
