"""Pick the compiled kernels when available, else the numpy fallback.

Set ``KNOCKOUT_DAE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("KNOCKOUT_DAE_PURE_PYTHON") == "1":
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _fallback
        BACKEND = "python"
    else:
        BACKEND = "cython"

fallback = _fallback
