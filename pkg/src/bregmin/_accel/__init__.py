"""Backend selection for the hot numerical kernels.

The inner PDHG loop and the scalar cubic root solve dominate runtime, so
they are compiled (Cython) when the extension built; otherwise the numpy
implementation in :mod:`bregmin._accel.pure` is used.  Set the environment
variable ``BREGMIN_PURE_PYTHON=1`` to force the fallback (used by the
backend parity tests and the benchmark).
"""

import os

from . import pure

if os.environ.get("BREGMIN_PURE_PYTHON"):
    backend = pure
    COMPILED = False
else:
    try:
        from . import _core as backend  # type: ignore[no-redef]

        COMPILED = True
    except ImportError:
        backend = pure
        COMPILED = False


def backend_name() -> str:
    return "compiled" if COMPILED else "pure-python"
