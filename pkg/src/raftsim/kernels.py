"""Kernel backend selection.

Imports the compiled extension when present, otherwise the numpy fallback.
RAFTSIM_PURE_PYTHON=1 forces the fallback (useful for the backend benchmark
and for debugging).
"""

import os

if os.environ.get("RAFTSIM_PURE_PYTHON", "0") == "1":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

csr_matvec = _impl.csr_matvec
block_gs_sweep = _impl.block_gs_sweep
ilu0_factor = _impl.ilu0_factor
ilu0_solve = _impl.ilu0_solve
p1_element_matrices = _impl.p1_element_matrices
