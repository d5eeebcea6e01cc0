import os
from pathlib import Path

import pytest

from pvrkit import visualgen

MNIST_DIR = Path(os.environ.get("PVR_MNIST_DIR", "/root/mnist"))
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def mnist_paths(split):
    img, lab = MNIST_FILES[split]
    paths = MNIST_DIR / img, MNIST_DIR / lab
    if not all(p.exists() for p in paths):
        pytest.skip(f"MNIST IDX files not found under {MNIST_DIR}")
    return paths


@pytest.fixture(scope="session")
def mnist_train():
    return visualgen.read_idx(*mnist_paths("train"))


@pytest.fixture(scope="session")
def mnist_test():
    return visualgen.read_idx(*mnist_paths("test"))


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
