"""Select the compiled kernel module when it is importable.

Set ``FEATCOMP_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _fallback

if os.environ.get("FEATCOMP_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        kernels = _fallback
        BACKEND = "python"

marginal_table = kernels.marginal_table
marginal_entropy = kernels.marginal_entropy
