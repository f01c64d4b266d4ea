"""Kernel backend selection.

The compiled extension is preferred; set ``NLB_PURE_PYTHON=1`` to force the
fallback (useful for equivalence tests and benchmarks).
"""

import os

from . import _pycore

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("NLB_PURE_PYTHON", "") in ("", "0"):
    kernels = _compiled
else:
    kernels = _pycore

python_kernels = _pycore
compiled_kernels = _compiled
BACKEND = kernels.NAME
