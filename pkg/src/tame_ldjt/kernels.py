"""Backend selection for the flat-table kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is loaded.  Setting ``TAME_LDJT_PURE_PYTHON=1`` forces the
numpy path.
"""

import os

if os.environ.get("TAME_LDJT_PURE_PYTHON", "") not in ("", "0"):
    from tame_ldjt import _kernels_py as _backend
else:
    try:
        from tame_ldjt import _kernels_c as _backend
    except ImportError:  # extension not built
        from tame_ldjt import _kernels_py as _backend

BACKEND = _backend.BACKEND
product = _backend.product
sum_out = _backend.sum_out
take = _backend.take
rsim = _backend.rsim
rsim_matrix = _backend.rsim_matrix
weighted_mean = _backend.weighted_mean

__all__ = ["BACKEND", "product", "sum_out", "take", "rsim", "rsim_matrix", "weighted_mean"]
