"""Clique kernels for the linear-chain CRF.

The joint kernel on (x, y) pairs decomposes into a sum over cliques that
contain a label: emission cliques (x_t, y_t) and transition cliques
(y_t, y_{t+1}).  Emission cliques use ``delta(y, y') * k(x, x')`` with a
polynomial base kernel ``k``; transition cliques use a Kronecker delta on
label pairs, so the transition part of any parameter vector collapses to
one coefficient per label pair.

For binary alphabets the emission kernel may be centered, which turns it
into ``s(y) s(y') k(x, x')`` with ``s`` mapping label 0 to +1 and label 1
to -1.  Centering shifts every labeling's score by a per-sequence constant,
so conditional label distributions are unaffected.
"""
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DimensionError, InputError


@dataclass(frozen=True)
class KernelSpec:
    """Polynomial base kernel ``(<u, v> + offset) ** degree`` plus window size."""

    degree: int = 1
    offset: float = 1.0
    window_radius: int = 0
    center_labels: bool = False

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ConfigurationError(f"degree must be a positive integer, got {self.degree!r}")
        if not np.isfinite(self.offset) or self.offset < 0:
            raise ConfigurationError(f"offset must be nonnegative, got {self.offset!r}")
        if int(self.window_radius) != self.window_radius or self.window_radius < 0:
            raise ConfigurationError(
                f"window_radius must be a nonnegative integer, got {self.window_radius!r}")

    def check_alphabet(self, n_labels):
        if self.center_labels and n_labels != 2:
            raise ConfigurationError(
                f"label centering needs exactly 2 labels, alphabet has {n_labels}")


def base_kernel(u, v, spec):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionError(f"window lengths differ: {u.shape} vs {v.shape}")
    return float((np.dot(u, v) + spec.offset) ** spec.degree)


def base_gram(U, V, spec):
    """Base kernel between the rows of ``U`` (n x d) and ``V`` (m x d)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if U.shape[1] != V.shape[1]:
        raise DimensionError(f"window lengths differ: {U.shape[1]} vs {V.shape[1]}")
    return (U @ V.T + spec.offset) ** spec.degree


def label_signs(n_labels=2):
    # label 0 -> +1, label 1 -> -1
    return 1.0 - 2.0 * np.arange(n_labels)


def label_kernel_matrix(n_labels, spec):
    """Label factor of the emission kernel, indexed ``[y, y']``."""
    spec.check_alphabet(n_labels)
    if spec.center_labels:
        s = label_signs(n_labels)
        return np.outer(s, s)
    return np.eye(n_labels)


def emission_kernel(a, b, spec, n_labels=None):
    """Kernel between two (window, label) emission configurations.

    ``n_labels`` is only needed to validate centering; when omitted under
    centering the alphabet is assumed binary and labels must be 0 or 1.
    """
    (u, ya), (v, yb) = a, b
    k = base_kernel(u, v, spec)
    if spec.center_labels:
        if n_labels is not None:
            spec.check_alphabet(n_labels)
        if ya not in (0, 1) or yb not in (0, 1):
            raise ConfigurationError("label centering needs binary labels 0/1")
        s = label_signs()
        return float(s[ya] * s[yb] * k)
    return k if ya == yb else 0.0


def transition_kernel(p, q):
    return 1.0 if tuple(p) == tuple(q) else 0.0


def joint_kernel(s1, s2, spec, n_labels=None):
    """Sum of clique kernels between two fully labeled sequences.

    ``s1`` and ``s2`` are ``(LabeledSequence, labeling)`` pairs.  Only
    cliques containing a label contribute; x-only cliques cannot change
    conditional probabilities and are never built.
    """
    from .chain import windows

    (seq1, y1), (seq2, y2) = s1, s2
    y1 = np.asarray(y1, dtype=int)
    y2 = np.asarray(y2, dtype=int)
    if len(y1) != seq1.length or len(y2) != seq2.length:
        raise InputError("labeling length does not match sequence length")
    if n_labels is not None and (y1.max() >= n_labels or y2.max() >= n_labels):
        raise InputError("label outside alphabet")
    W1 = windows(seq1, spec.window_radius)
    W2 = windows(seq2, spec.window_radius)
    terms = [emission_kernel((W1[t], y1[t]), (W2[s], y2[s]), spec, n_labels)
             for t in range(len(y1)) for s in range(len(y2))]
    terms += [transition_kernel((y1[t], y1[t + 1]), (y2[s], y2[s + 1]))
              for t in range(len(y1) - 1) for s in range(len(y2) - 1)]
    # correctly rounded, hence independent of argument order
    return math.fsum(terms)


def gram_matrix(anchors, spec, n_labels=None):
    """Emission-kernel Gram matrix over a list of ``(window, label)`` anchors."""
    if len(anchors) == 0:
        raise InputError("gram_matrix needs at least one anchor")
    W = np.array([a[0] for a in anchors], dtype=float)
    labels = np.array([a[1] for a in anchors], dtype=int)
    if n_labels is None:
        n_labels = 2 if spec.center_labels else int(labels.max()) + 1
    L = label_kernel_matrix(n_labels, spec)
    K = base_gram(W, W, spec) * L[np.ix_(labels, labels)]
    # exact symmetry regardless of matmul rounding
    return 0.5 * (K + K.T)
