"""Hierarchical binary-tree input orderings.

Token positions are emitted by repeatedly splitting index intervals at their
floor midpoint, breadth first.  The order fed to the network is the reverse
of that walk, so the widely spread early-level positions arrive last and sit
closest to the loss in the unrolled graph.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence, TypeVar

T = TypeVar("T")

__all__ = [
    "tree_order",
    "reorder_indices",
    "ngram_reorder_indices",
    "apply_permutation",
    "invert_permutation",
    "is_permutation",
]


def _check_len(total_len: int) -> None:
    if not isinstance(total_len, int) or isinstance(total_len, bool):
        raise TypeError(f"total_len must be an int, got {type(total_len).__name__}")
    if total_len < 1:
        raise ValueError(f"total_len must be >= 1, got {total_len}")


def tree_order(total_len: int) -> list[int]:
    """Breadth-first center expansion of ``range(total_len)``, before reversal.

    A FIFO queue holds ``(center, start, end)`` triples seeded with
    ``(N // 2, 0, N)``.  A triple whose two half-gaps are both at least one
    enqueues its children and emits the right child's center, then the left
    child's.  The first triple that cannot split flushes every position not
    yet emitted in descending order; at that point the walk is complete.
    """
    _check_len(total_len)
    n = total_len
    order = [n // 2]
    queue = deque([(n // 2, 0, n)])
    while queue:
        center, start, end = queue.popleft()
        left_gap = (center - start) // 2
        right_gap = (end - center) // 2
        if left_gap >= 1 and right_gap >= 1:
            left = start + left_gap
            right = center + right_gap
            queue.append((left, start, center))
            queue.append((right, center, end))
            order.append(right)
            order.append(left)
        else:
            seen = set(order)
            order.extend(k for k in range(n - 1, -1, -1) if k not in seen)
            # every position is out; later triples could only repeat centers
            break
    return order


def reorder_indices(total_len: int) -> list[int]:
    """Feed order for a length-``total_len`` sequence (reversed tree walk)."""
    return tree_order(total_len)[::-1]


def ngram_reorder_indices(total_len: int, n: int = 2) -> list[int]:
    """Feed order that moves contiguous ``n``-token groups as units.

    The tree walk runs over ``total_len // n`` groups; group ``k`` expands to
    positions ``n*k .. n*k + n - 1``.  Positions past the last full group are
    appended, then the whole list is reversed, so leftovers are fed first and
    each group appears in descending position order.
    """
    _check_len(total_len)
    if n < 1 or n > total_len:
        raise ValueError(f"ngram size must satisfy 1 <= n <= {total_len}, got {n}")
    groups = total_len // n
    flat: list[int] = []
    for k in tree_order(groups):
        flat.extend(range(n * k, n * k + n))
    flat.extend(range(n * groups, total_len))
    flat.reverse()
    return flat


def is_permutation(perm: Sequence[int], length: int | None = None) -> bool:
    size = len(perm) if length is None else length
    return len(perm) == size and sorted(perm) == list(range(size))


def apply_permutation(tokens: Sequence[T], perm: Sequence[int]) -> list[T]:
    """Return ``[tokens[perm[0]], tokens[perm[1]], ...]``."""
    if len(tokens) != len(perm):
        raise ValueError(
            f"permutation length {len(perm)} does not match sequence length {len(tokens)}"
        )
    return [tokens[i] for i in perm]


def invert_permutation(perm: Sequence[int]) -> list[int]:
    if not is_permutation(perm):
        raise ValueError("not a permutation of 0..N-1")
    inverse = [0] * len(perm)
    for slot, src in enumerate(perm):
        inverse[src] = slot
    return inverse
