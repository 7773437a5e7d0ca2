"""Per-matrix Lp penalties on the eight recurrent weight matrices.

The penalty is ``sum_k a_k * ||M_k||_{p_k}`` where the norm is entrywise over
the flattened matrix and smoothed as ``(sum (m**2 + eps) ** (p/2)) ** (1/p)``
so it stays differentiable at zero for ``p <= 1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .lstm import BASE_MATRICES

__all__ = [
    "MATRIX_IDS",
    "RegTerm",
    "RegSpec",
    "lp_norm",
    "lp_norm_grad",
    "lp_norm_node",
    "reg_cost",
    "reg_cost_and_grad",
    "reg_cost_node",
    "sweep_spec",
    "DEFAULT_A_GRID",
    "DEFAULT_P_GRID",
]

MATRIX_IDS = ("W_i", "W_f", "W_o", "W_g", "U_i", "U_f", "U_o", "U_g")
assert set(MATRIX_IDS) == set(BASE_MATRICES)

DEFAULT_EPS = 1e-8
DEFAULT_A_GRID = (1e-4, 1e-3, 1e-2)
DEFAULT_P_GRID = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class RegTerm:
    a: float
    p: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"coefficient a must be >= 0, got {self.a}")
        if self.p <= 0:
            raise ValueError(f"exponent p must be > 0, got {self.p}")


@dataclass(frozen=True)
class RegSpec:
    terms: Mapping[str, RegTerm]
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        missing = [m for m in MATRIX_IDS if m not in self.terms]
        unknown = [m for m in self.terms if m not in MATRIX_IDS]
        if missing:
            raise ValueError(f"RegSpec missing matrices: {', '.join(missing)}")
        if unknown:
            raise ValueError(f"RegSpec has unknown matrices: {', '.join(unknown)}")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        object.__setattr__(
            self, "terms", {m: _as_term(self.terms[m]) for m in MATRIX_IDS}
        )

    @classmethod
    def tied(cls, a: float, p: float, eps: float = DEFAULT_EPS) -> "RegSpec":
        return cls({m: RegTerm(a, p) for m in MATRIX_IDS}, eps)

    @property
    def is_zero(self) -> bool:
        return all(t.a == 0 for t in self.terms.values())

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "terms": {m: {"a": t.a, "p": t.p} for m, t in self.terms.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RegSpec":
        data = dict(data)
        eps = float(data.pop("eps", DEFAULT_EPS))
        if "terms" in data:
            terms = data.pop("terms")
            if data:
                raise ValueError(f"unknown reg keys: {', '.join(sorted(data))}")
            return cls({m: RegTerm(float(v["a"]), float(v["p"])) for m, v in terms.items()}, eps)
        if set(data) != {"a", "p"}:
            raise ValueError("reg needs either 'terms' or both 'a' and 'p'")
        return cls.tied(float(data["a"]), float(data["p"]), eps)


def _as_term(t) -> RegTerm:
    if isinstance(t, RegTerm):
        return t
    a, p = t
    return RegTerm(float(a), float(p))


def _check_p(p: float) -> None:
    if p <= 0:
        raise ValueError(f"exponent p must be > 0, got {p}")


def lp_norm(m: np.ndarray, p: float, eps: float = 0.0) -> float:
    _check_p(p)
    m = np.asarray(m, dtype=np.float64)
    return float(np.sum((m * m + eps) ** (p / 2.0)) ** (1.0 / p))


def lp_norm_grad(m: np.ndarray, p: float, eps: float = 0.0) -> np.ndarray:
    """Closed-form gradient of :func:`lp_norm` with respect to ``m``.

    ``d/dm = m * (m**2 + eps) ** (p/2 - 1) * S ** (1/p - 1)`` with ``S`` the
    inner sum; exact zeros (``eps == 0``) get the subgradient 0.
    """
    _check_p(p)
    m = np.asarray(m, dtype=np.float64)
    sq = m * m + eps
    s = np.sum(sq ** (p / 2.0))
    if s == 0.0:
        return np.zeros_like(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        local = m * sq ** (p / 2.0 - 1.0)
    local = np.where(sq == 0.0, 0.0, local)
    return local * s ** (1.0 / p - 1.0)


def lp_norm_node(m: ad.Node, p: float, eps: float = 0.0) -> ad.Node:
    return ad.power(ad.abs_pow_sum(m, p, eps), 1.0 / p)


def reg_cost(params, spec: RegSpec) -> float:
    arrays = params.arrays() if hasattr(params, "arrays") else params
    total = 0.0
    for name, term in spec.terms.items():
        if term.a != 0:
            total += term.a * lp_norm(arrays[name], term.p, spec.eps)
    return total


def reg_cost_and_grad(params, spec: RegSpec) -> tuple[float, dict[str, np.ndarray]]:
    """Penalty value and its gradient for every matrix with ``a != 0``."""
    arrays = params.arrays() if hasattr(params, "arrays") else params
    total = 0.0
    grads = {}
    for name, term in spec.terms.items():
        if term.a == 0:
            continue
        total += term.a * lp_norm(arrays[name], term.p, spec.eps)
        grads[name] = term.a * lp_norm_grad(arrays[name], term.p, spec.eps)
    return total, grads


def reg_cost_node(p: Mapping[str, ad.Node], spec: RegSpec) -> ad.Node | None:
    """Penalty as a tape node, or ``None`` when every coefficient is zero."""
    out = None
    for name, term in spec.terms.items():
        if term.a == 0:
            continue
        piece = ad.scale(lp_norm_node(p[name], term.p, spec.eps), term.a)
        out = piece if out is None else ad.add(out, piece)
    return out


def sweep_spec(
    a_grid: Sequence[float] = DEFAULT_A_GRID,
    p_grid: Sequence[float] = DEFAULT_P_GRID,
    *,
    tied: bool = True,
    eps: float = DEFAULT_EPS,
    matrices: Iterable[str] = MATRIX_IDS,
) -> list[RegSpec]:
    """Enumerate penalty settings over ``a_grid x p_grid``.

    Tied sweeps share one ``(a, p)`` across all eight matrices.  Untied sweeps
    give each matrix in ``matrices`` its own choice (the rest get ``a = 0``),
    so the count is ``(len(a_grid) * len(p_grid)) ** len(matrices)``.
    Order is deterministic: ``a`` outer, ``p`` inner, matrices in
    ``MATRIX_IDS`` order.
    """
    if not a_grid or not p_grid:
        raise ValueError("sweep grids must be non-empty")
    pairs = [RegTerm(float(a), float(p)) for a, p in itertools.product(a_grid, p_grid)]
    if tied:
        return [RegSpec({m: t for m in MATRIX_IDS}, eps) for t in pairs]
    chosen = [m for m in MATRIX_IDS if m in set(matrices)]
    if not chosen:
        raise ValueError("untied sweep needs at least one matrix")
    off = RegTerm(0.0, 1.0)
    specs = []
    for combo in itertools.product(pairs, repeat=len(chosen)):
        terms = {m: off for m in MATRIX_IDS}
        terms.update(zip(chosen, combo))
        specs.append(RegSpec(terms, eps))
    return specs
