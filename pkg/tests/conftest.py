from __future__ import annotations

import pytest

from weldlab import tree


@pytest.fixture(scope="session")
def bbt2() -> tree.BlackBoxTree:
    return tree.make_blackbox(2, 7)


@pytest.fixture(scope="session")
def bbt3() -> tree.BlackBoxTree:
    return tree.make_blackbox(3, 7)
