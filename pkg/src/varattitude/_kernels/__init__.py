"""Backend selection for the estimator and truth loops.

The compiled Cython extension is used when it imports; otherwise the
pure-Python loop takes over. Set ``VARATTITUDE_PURE_PYTHON=1`` to force
the fallback.
"""

import os

from . import _lgvi_py

python_run_lgvi = _lgvi_py.run_lgvi

compiled_run_lgvi = None
compiled_run_truth = None
if not os.environ.get("VARATTITUDE_PURE_PYTHON"):
    try:
        from ._lgvi import run_lgvi as compiled_run_lgvi
        from ._lgvi import run_truth as compiled_run_truth
    except ImportError:  # extension not built
        compiled_run_lgvi = compiled_run_truth = None

HAVE_COMPILED = compiled_run_lgvi is not None
BACKEND = "cython" if HAVE_COMPILED else "python"
