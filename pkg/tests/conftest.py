import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).parent / "fixtures"


def mnist_dir():
    for d in (os.environ.get("LDMLAB_DATA"), ROOT / "data" / "mnist"):
        if not d:
            continue
        d = Path(d)
        if any((d / f"train-images-idx3-ubyte{ext}").exists() for ext in ("", ".gz")):
            return d
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixtures():
    return FIXTURES


@pytest.fixture(scope="session")
def mnist():
    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST IDX files not found; set LDMLAB_DATA or place them in data/mnist")
    from ldmlab.dataio import load_mnist

    return load_mnist(d, "train"), load_mnist(d, "test")


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
