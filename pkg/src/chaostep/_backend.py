"""Selects the compiled stepping kernels, falling back to numpy.

Importing the package never requires the extension; the fallback is
arithmetic-identical, only slower on large path counts.
"""

from __future__ import annotations

try:
    from . import _kernels as _impl

    HAVE_EXTENSION = True
except ImportError:  # extension not built on this install
    from . import _kernels_py as _impl

    HAVE_EXTENSION = False

from . import _kernels_py as reference

affine_step = _impl.affine_step
advance_paths_affine = _impl.advance_paths_affine


def backend_name() -> str:
    return "cython" if HAVE_EXTENSION else "numpy"
