import numpy as np
import pytest

from kcrf.chain import LabeledSequence
from kcrf.inference import ScoreTable


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_scores(rng, T, L, scale=2.0):
    return ScoreTable(scale * rng.standard_normal((T, L)), scale * rng.standard_normal((L, L)))


def random_sequences(rng, n, n_labels, n_features=2, length=(1, 4)):
    out = []
    for i in range(n):
        T = int(rng.integers(length[0], length[1] + 1))
        out.append(LabeledSequence(rng.standard_normal((T, n_features)),
                                   rng.integers(0, n_labels, T), id=i))
    return out


def central_difference(f, x, h=1e-5):
    """Coordinate-wise central differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_instance(rng, n_labels=2, n_anchors=6, n_seq=4, degree=1, center=False,
                    window_radius=0, n_features=2, coeff_scale=0.5):
    """Small labeled dataset plus a basis with random nonzero coefficients."""
    from kcrf.chain import windows
    from kcrf.kernels import KernelSpec
    from kcrf.objective import BasisSet

    spec = KernelSpec(degree=degree, offset=1.0, window_radius=window_radius,
                      center_labels=center)
    data = random_sequences(rng, n_seq, n_labels, n_features, length=(1, 4))
    W = np.vstack([windows(s, window_radius) for s in data])
    pick = rng.choice(len(W), size=min(n_anchors, len(W)), replace=False)
    labels = rng.integers(0, n_labels, len(pick))
    basis = BasisSet(W[pick] + 0.1 * rng.standard_normal(W[pick].shape), labels,
                     coeff_scale * rng.standard_normal(len(pick)),
                     coeff_scale * rng.standard_normal((n_labels, n_labels)))
    return data, basis, spec


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
