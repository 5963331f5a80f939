"""Exact inference on a linear chain.

Scores are log-potentials: ``emission[t, y]`` for label ``y`` at position
``t`` and a position-independent ``transition[y, y']``.  The unnormalized
log-score of a labeling is the sum of its emission and transition entries.
"""
import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, SizeError

BRUTE_FORCE_LIMIT = 10 ** 6


def logsumexp(a, axis=None):
    # scipy.special.logsumexp carries ~100us of dispatch overhead per call,
    # which dominates the per-position recursions below
    a = np.asarray(a)
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out.item() if axis is None else np.squeeze(out, axis=axis)


@dataclass
class ScoreTable:
    emission: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        self.emission = np.atleast_2d(np.asarray(self.emission, dtype=float))
        self.transition = np.asarray(self.transition, dtype=float)
        L = self.emission.shape[1]
        if self.transition.shape != (L, L):
            raise InputError(
                f"transition table must be {L}x{L}, got {self.transition.shape}")

    @property
    def length(self):
        return self.emission.shape[0]

    @property
    def n_labels(self):
        return self.emission.shape[1]

    def check_finite(self):
        if not (np.isfinite(self.emission).all() and np.isfinite(self.transition).all()):
            raise InputError("score table has non-finite entries")


@dataclass
class CliqueMarginals:
    log_partition: float
    unary: np.ndarray
    pairwise: np.ndarray


def labeling_score(scores, y):
    y = np.asarray(y, dtype=int)
    if y.shape != (scores.length,):
        raise InputError(f"labeling length {len(y)} != sequence length {scores.length}")
    if (y < 0).any() or (y >= scores.n_labels).any():
        raise InputError("label outside alphabet")
    total = scores.emission[np.arange(len(y)), y].sum()
    if len(y) > 1:
        total += scores.transition[y[:-1], y[1:]].sum()
    return float(total)


def forward_batch(E, A):
    """Log forward messages for a batch of equal-length chains.

    ``E`` has shape (S, T, L); returns (S, T, L) with
    ``alpha[s, t, y]`` = log-sum of scores of all prefixes ending in ``y``.
    """
    S, T, L = E.shape
    alpha = np.empty((S, T, L))
    alpha[:, 0] = E[:, 0]
    for t in range(1, T):
        alpha[:, t] = E[:, t] + logsumexp(alpha[:, t - 1, :, None] + A[None], axis=1)
    return alpha


def log_partition_batch(E, A):
    return logsumexp(forward_batch(E, A)[:, -1], axis=1)


def forward_backward_batch(E, A):
    """Log-partition (S,), unary (S, T, L) and pairwise (S, T-1, L, L) marginals."""
    S, T, L = E.shape
    alpha = forward_batch(E, A)
    beta = np.zeros((S, T, L))
    for t in range(T - 2, -1, -1):
        beta[:, t] = logsumexp(A[None] + (E[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
    logz = logsumexp(alpha[:, -1], axis=1)

    unary = np.exp(alpha + beta - logz[:, None, None])
    pair_logits = (alpha[:, :-1, :, None] + A[None, None]
                   + (E[:, 1:] + beta[:, 1:])[:, :, None, :])
    pairwise = np.exp(pair_logits - logz[:, None, None, None])
    # renormalize away O(eps) drift so rows lie exactly on the simplex
    unary /= unary.sum(axis=2, keepdims=True)
    if T > 1:
        pairwise /= pairwise.sum(axis=(2, 3), keepdims=True)
    return logz, unary, pairwise


def log_partition(scores):
    scores.check_finite()
    return float(log_partition_batch(scores.emission[None], scores.transition)[0])


def forward_backward(scores):
    scores.check_finite()
    logz, unary, pairwise = forward_backward_batch(scores.emission[None], scores.transition)
    return CliqueMarginals(float(logz[0]), unary[0], pairwise[0])


def brute_force_marginals(scores):
    """Same contract as :func:`forward_backward`, by enumerating all labelings."""
    scores.check_finite()
    T, L = scores.length, scores.n_labels
    if L ** T > BRUTE_FORCE_LIMIT:
        raise SizeError(f"{L}**{T} labelings exceed the enumeration budget")
    labelings = np.array(list(itertools.product(range(L), repeat=T)), dtype=int)
    logw = np.array([labeling_score(scores, y) for y in labelings])
    logz = float(logsumexp(logw))
    p = np.exp(logw - logz)

    unary = np.zeros((T, L))
    pairwise = np.zeros((max(T - 1, 0), L, L))
    for t in range(T):
        np.add.at(unary[t], labelings[:, t], p)
    for t in range(T - 1):
        np.add.at(pairwise[t], (labelings[:, t], labelings[:, t + 1]), p)
    return CliqueMarginals(logz, unary, pairwise)


def viterbi(scores):
    """Highest-scoring labeling; among ties, the lexicographically smallest.

    Best suffix scores are computed right to left, then labels are chosen
    left to right taking the smallest label id that attains the optimum.
    """
    scores.check_finite()
    E, A = scores.emission, scores.transition
    T, L = E.shape
    suffix = np.zeros((T, L))
    for t in range(T - 2, -1, -1):
        suffix[t] = np.max(A + (E[t + 1] + suffix[t + 1])[None, :], axis=1)
    y = np.empty(T, dtype=int)
    y[0] = int(np.argmax(E[0] + suffix[0]))
    for t in range(1, T):
        y[t] = int(np.argmax(A[y[t - 1]] + E[t] + suffix[t]))
    return y


def sequence_log_prob(scores, y):
    return labeling_score(scores, y) - log_partition(scores)
