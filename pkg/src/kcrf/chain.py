"""Linear-chain structure: sequences, alphabets, cliques and windows."""
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import InputError

EMISSION = "emission"
TRANSITION = "transition"
BLOCKS = (EMISSION, TRANSITION)


@dataclass(frozen=True)
class LabelAlphabet:
    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise InputError("label alphabet is empty")
        if len(set(self.names)) != len(self.names):
            raise InputError(f"duplicate labels in alphabet {self.names}")

    def __len__(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"unknown label {name!r}") from None

    def encode(self, names):
        return np.array([self.index(n) for n in names], dtype=int)

    def decode(self, ids):
        return [self.names[i] for i in ids]


@dataclass(frozen=True, eq=False)
class LabeledSequence:
    """Per-position feature rows (T x F) and, when known, one label id per row."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    id: object = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError("a sequence needs at least one position")
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=int)
            if y.shape != (X.shape[0],):
                raise InputError(f"expected {X.shape[0]} labels, got {y.shape}")
            if (y < 0).any():
                raise InputError("negative label id")
            object.__setattr__(self, "labels", y)

    @property
    def length(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def is_labeled(self):
        return self.labels is not None


class CliqueIndex(NamedTuple):
    kind: str
    position: int


def enumerate_cliques(seq):
    T = seq.length
    return ([CliqueIndex(EMISSION, t) for t in range(T)]
            + [CliqueIndex(TRANSITION, t) for t in range(T - 1)])


def windows(seq, radius):
    """All position windows of ``seq`` as a T x (2r+1)F matrix, zero padded."""
    X = seq.features
    T, F = X.shape
    padded = np.zeros((T + 2 * radius, F))
    padded[radius:radius + T] = X
    return np.hstack([padded[j:j + T] for j in range(2 * radius + 1)])


def extract_window(seq, t, radius):
    if not 0 <= t < seq.length:
        raise IndexError(f"position {t} outside sequence of length {seq.length}")
    rows = []
    for s in range(t - radius, t + radius + 1):
        if 0 <= s < seq.length:
            rows.append(seq.features[s])
        else:
            rows.append(np.zeros(seq.feature_dim))
    return np.concatenate(rows)


@dataclass(frozen=True)
class ParameterBlock:
    """A set of cliques sharing one natural parameter.

    ``dimension`` is None when the block is infinite dimensional and only
    reachable through kernel expansions.
    """

    name: str
    clique_kind: str
    dimension: Optional[int] = None
    tied: bool = True
    configurations: tuple = field(default=())


def tied_parameter_blocks(alphabet):
    n = len(alphabet)
    pairs = tuple((a, b) for a in range(n) for b in range(n))
    return [
        ParameterBlock(EMISSION, EMISSION),
        ParameterBlock(TRANSITION, TRANSITION, dimension=n * n, configurations=pairs),
    ]
