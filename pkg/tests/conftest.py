from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"
MNIST_IMAGES = DATA / "mnist56-images-idx3-ubyte.gz"
MNIST_LABELS = DATA / "mnist56-labels-idx1-ubyte.gz"


@pytest.fixture(scope="session")
def mnist_arrays():
    from advactive.datasets import load_mnist

    return load_mnist(MNIST_IMAGES, MNIST_LABELS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
