"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback is used.  :func:`use_backend` switches explicitly (tests and the
benchmark run both).
"""
from importlib import import_module

from . import _pykernels

try:
    _ckernels = import_module("gsavqe._ckernels")
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

active = _ckernels if _ckernels is not None else _pykernels
name = "cython" if _ckernels is not None else "python"


def use_backend(which):
    """Select ``"cython"`` or ``"python"``; return the previous backend name."""
    global active, name
    if which not in BACKENDS:
        raise ValueError(f"kernel backend {which!r} is not available")
    prev = name
    active, name = BACKENDS[which], which
    return prev


def available():
    return sorted(BACKENDS)
