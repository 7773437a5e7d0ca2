"""Fused batch LSTM kernels with a compiled core and a NumPy fallback.

The Cython extension ``_ckernel`` is used when it was built; otherwise the
pure NumPy ``_pykernel`` is.  Both expose ``forward(tokens, arrays,
nonlinear, literal)`` and ``forward_backward(tokens, labels, arrays,
nonlinear, literal)``.
"""

from __future__ import annotations

from types import ModuleType

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not compiled
    _ckernel = None

BACKENDS: dict[str, ModuleType] = {"python": _pykernel}
if _ckernel is not None:
    BACKENDS["cython"] = _ckernel

_active: ModuleType = _ckernel if _ckernel is not None else _pykernel


def backend_name() -> str:
    return _active.NAME


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        return _active
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def set_backend(name: str) -> None:
    global _active
    _active = get_backend(name)


def forward(tokens, arrays, nonlinear=False, literal=False):
    return _active.forward(tokens, arrays, nonlinear, literal)


def forward_backward(tokens, labels, arrays, nonlinear=False, literal=False):
    return _active.forward_backward(tokens, labels, arrays, nonlinear, literal)
