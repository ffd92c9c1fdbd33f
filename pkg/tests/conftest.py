import numpy as np
import pytest

from plifnet.datasets import build_digits_idx


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def digits_paths(tmp_path_factory):
    """Desk-scale handwritten-digit IDX files (1000 train / 797 test)."""
    return build_digits_idx(tmp_path_factory.mktemp("digits"), n_train=1000, seed=0)


def central_diff(f, params, eps=1e-4):
    """Central finite differences of a scalar function over flat arrays."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            fp = f()
            p[idx] = orig - eps
            fm = f()
            p[idx] = orig
            g[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def max_rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
