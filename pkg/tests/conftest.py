import numpy as np
import pytest

from ggmclust.core import Clustering, SampleStats


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_instance(rng, p=None, n=None, k=None):
    """Random data summary plus a random clustering."""
    p = int(rng.integers(2, 9)) if p is None else p
    n = int(rng.integers(5, 200)) if n is None else n
    X = rng.standard_normal((n, p)) @ rng.standard_normal((p, p))
    stats = SampleStats.from_data(X)
    k = int(rng.integers(1, p + 1)) if k is None else k
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=p - k)])
    rng.shuffle(labels)
    return stats, Clustering(tuple(labels.tolist()))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
