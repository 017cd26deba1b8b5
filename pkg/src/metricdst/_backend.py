"""Select the compiled kernels when available, else the numpy fallback.

Set ``METRICDST_BACKEND=python`` to force the fallback, or ``compiled`` to
fail loudly when the extension is missing.
"""
import os

from . import _kernels_py

_choice = os.environ.get("METRICDST_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "compiled"):
    raise ImportError(f"unknown METRICDST_BACKEND {_choice!r}")

kernels = _kernels_py
BACKEND = "python"
if _choice != "python":
    try:
        from . import _kernels as kernels  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise


def get_kernels(name=None):
    """Kernel module by name (``"python"`` / ``"compiled"``) or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def compiled_available():
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
