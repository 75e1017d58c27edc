"""Shared fixtures; benchmark-building helpers live in tinybench.py."""

from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)
