"""Kernel selection.

The compiled ``_ckernels`` extension is used when it was built and imports;
otherwise the numpy implementations in ``_pykernels`` are used.  Setting
``NASEVAL_PURE_PYTHON=1`` forces the fallback.  ``BACKEND`` names the choice.
"""

import os

from . import _pykernels

if os.environ.get("NASEVAL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "compiled" if _impl is not _pykernels else "numpy"

count_pairs = _impl.count_pairs
cell_loss_grad = _impl.cell_loss_grad
