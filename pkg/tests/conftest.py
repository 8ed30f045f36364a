import gzip

import numpy as np
import pytest

from qdiff.data import load_digits, write_idx

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def digits():
    return load_digits()


@pytest.fixture(scope="session")
def data_root(tmp_path_factory):
    """A data directory holding an MNIST IDX pair built from mlxtend's bundled subset."""
    mlxtend_data = pytest.importorskip("mlxtend.data")
    x, y = mlxtend_data.mnist_data()
    root = tmp_path_factory.mktemp("data")
    mnist = root / "mnist"
    mnist.mkdir()
    images = np.clip(np.rint(x), 0, 255).astype(np.uint8).reshape(-1, 28, 28)
    (mnist / "train-images-idx3-ubyte.gz").write_bytes(gzip.compress(write_idx(images)))
    (mnist / "train-labels-idx1-ubyte").write_bytes(write_idx(y.astype(np.uint8)))
    return root


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
