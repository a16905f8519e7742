"""RK4 integrator kernels with a compiled core and a numpy fallback.

The compiled extension (_rk4_c, built from Cython) and the numpy module
(_rk4_py) implement the same two kernels with the same operation order:

    harmonic_segment : force = g(t) - k(t) z, tables sampled on half steps
    gauss_segment    : force from two Gaussian electrodes at sampled voltages,
                       with out-of-region samples frozen and flagged

Selection happens at import: the compiled core when importable, else numpy.
Set BEAMFORGE_KERNEL=cython|numpy|auto to force a choice.
"""

import os

_choice = os.environ.get("BEAMFORGE_KERNEL", "auto").lower()
if _choice not in ("auto", "cython", "numpy"):
    raise RuntimeError(f"BEAMFORGE_KERNEL must be auto, cython or numpy, got {_choice!r}")

_impl = None
if _choice in ("auto", "cython"):
    try:
        from . import _rk4_c as _impl
        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        _impl = None
if _impl is None:
    from . import _rk4_py as _impl
    BACKEND = "numpy"

harmonic_segment = _impl.harmonic_segment
gauss_segment = _impl.gauss_segment


def available_backends() -> dict:
    """Importable kernel modules by name, for tests and benchmarks."""
    from . import _rk4_py
    out = {"numpy": _rk4_py}
    try:
        from . import _rk4_c
        out["cython"] = _rk4_c
    except ImportError:
        pass
    return out
