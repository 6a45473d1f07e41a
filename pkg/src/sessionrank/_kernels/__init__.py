"""Hot-kernel import seam: compiled extension when built, numpy otherwise.

Set SESSIONRANK_NO_EXT=1 to force the fallback (used by the benchmark and
the parity tests).
"""

import os

if os.environ.get("SESSIONRANK_NO_EXT"):
    from sessionrank._kernels.fallback import lambda_core

    USING_COMPILED = False
else:
    try:
        from sessionrank._kernels._lambda_core import lambda_core

        USING_COMPILED = True
    except ImportError:
        from sessionrank._kernels.fallback import lambda_core

        USING_COMPILED = False

__all__ = ["lambda_core", "USING_COMPILED"]
