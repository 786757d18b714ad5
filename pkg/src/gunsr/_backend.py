"""Kernel backend selection.

The compiled Cython module is used when it imports cleanly; otherwise the
numpy fallback is used. ``GUN_BACKEND=python`` forces the fallback and
``GUN_BACKEND=compiled`` makes a missing extension an import error.
"""
import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_FUNCS = ("im2col", "col2im", "resample_last", "resample_last_adjoint",
          "resample_mid", "resample_mid_adjoint")

NAME = None


def available():
    """Names of the backends that can be selected in this process."""
    return ["compiled", "python"] if _compiled is not None else ["python"]


def use(name):
    """Rebind the module-level kernel functions to backend ``name``."""
    global NAME
    if name == "compiled":
        if _compiled is None:
            raise ImportError("gunsr._kernels is not built; reinstall the package "
                              "or set GUN_BACKEND=python")
        mod = _compiled
    elif name == "python":
        mod = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    g = globals()
    for fn in _FUNCS:
        g[fn] = getattr(mod, fn)
    NAME = name


_requested = os.environ.get("GUN_BACKEND", "auto").strip().lower()
if _requested in ("", "auto"):
    use("compiled" if _compiled is not None else "python")
else:
    use(_requested)
