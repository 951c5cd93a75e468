from __future__ import annotations

import os

import numpy as np

TEST_FILE_PATH = os.path.join(os.path.dirname(__file__), "test_files")


def curve_path(name: str) -> str:
    return os.path.join(TEST_FILE_PATH, name)


def proportional(a, b, rtol: float = 1e-8) -> bool:
    """
    True when two coefficient vectors agree up to one complex scalar.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    k = int(np.argmax(np.abs(b)))
    if not b[k]:
        return not np.any(a)
    scale = a[k] / b[k]
    return bool(np.allclose(a, scale * b, rtol=rtol, atol=rtol * np.abs(a).max()))


def within(estimate, expected: float, k: float = 4.0, floor: float = 0.0) -> bool:
    return abs(estimate.value - expected) <= max(floor, k * estimate.stderr)
