"""Synthetic chain-labeling tasks drawn from known CRF models."""
import numpy as np

from .chain import LabeledSequence
from .inference import ScoreTable, forward_batch, logsumexp, viterbi


def sample_labels(scores, rng):
    """Exact draw from p(y|x) by forward filtering, backward sampling."""
    alpha = forward_batch(scores.emission[None], scores.transition)[0]
    T, L = scores.emission.shape
    y = np.empty(T, dtype=int)
    p = np.exp(alpha[-1] - logsumexp(alpha[-1]))
    y[-1] = rng.choice(L, p=p / p.sum())
    for t in range(T - 2, -1, -1):
        logits = alpha[t] + scores.transition[:, y[t + 1]]
        p = np.exp(logits - logsumexp(logits))
        y[t] = rng.choice(L, p=p / p.sum())
    return y


def chain_task(rng, n_sequences, length, n_features, emission_fn, transition,
               decode="sample", feature_scale=1.0):
    """Sequences whose labels follow the CRF with the given potentials.

    ``emission_fn`` maps a T x F feature matrix to T x |Y| scores.
    ``decode='viterbi'`` labels each sequence by its MAP labeling instead of
    sampling, which yields a noise-free (separable) task.
    """
    data = []
    for i in range(n_sequences):
        T = length if np.isscalar(length) else int(rng.integers(length[0], length[1] + 1))
        X = feature_scale * rng.standard_normal((T, n_features))
        scores = ScoreTable(emission_fn(X), transition)
        y = viterbi(scores) if decode == "viterbi" else sample_labels(scores, rng)
        data.append(LabeledSequence(X, y, id=i))
    return data


def linear_task(rng, n_sequences=100, length=10, n_features=3, n_labels=2,
                weight_scale=1.0, transition_scale=1.0, decode="sample"):
    W = weight_scale * rng.standard_normal((n_features, n_labels))
    A = transition_scale * rng.standard_normal((n_labels, n_labels))
    return chain_task(rng, n_sequences, length, n_features, lambda X: X @ W, A, decode)


def quadratic_task(rng, n_sequences=100, length=8, scale=4.0, transition_scale=0.5,
                   decode="sample"):
    """Binary task whose emission score is the product of two features.

    A linear emission model cannot represent ``x1 * x2``, while a degree-2
    polynomial kernel can.
    """
    A = transition_scale * np.array([[1.0, -1.0], [-1.0, 1.0]])

    def emission(X):
        s = scale * X[:, 0] * X[:, 1]
        return np.column_stack([s / 2, -s / 2])

    return chain_task(rng, n_sequences, length, 2, emission, A, decode)


def iid_task(rng, n_sequences=100, length=10, n_features=3, weight_scale=2.0):
    """Binary labels depending only on the local features, no transition structure."""
    w = weight_scale * rng.standard_normal(n_features)

    def emission(X):
        s = X @ w
        return np.column_stack([s / 2, -s / 2])

    return chain_task(rng, n_sequences, length, n_features, emission, np.zeros((2, 2)))
