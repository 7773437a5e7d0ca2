"""Named sub-streams fanned out from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def sub_seed(root: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root), zlib.crc32(name.encode("utf-8"))])


def sub_rng(root: int, name: str) -> np.random.Generator:
    """Generator for stream ``name``; the same (root, name) always replays."""
    return np.random.default_rng(sub_seed(root, name))
