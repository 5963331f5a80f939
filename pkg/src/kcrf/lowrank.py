"""Sparse greedy basis selection by incomplete Cholesky factorization.

Candidates are all (window, label) emission configurations seen in the
training data.  Pivots are picked by largest remaining diagonal residual;
Gram columns are evaluated on demand, so a factor of rank r over n
candidates costs O(n r) kernel evaluations and O(n r^2) arithmetic.
"""
from dataclasses import dataclass, field

import numpy as np

from .chain import windows
from .exceptions import DegenerateKernelError, InputError
from .kernels import label_kernel_matrix
from .objective import BasisSet


def candidate_anchors(data, spec, n_labels):
    """Every (position window, label) pair over ``data``, deduplicated in order."""
    if not data:
        raise InputError("no training sequences")
    seen = set()
    out = []
    for seq in data:
        for w in windows(seq, spec.window_radius):
            key = w.tobytes()
            for y in range(n_labels):
                if (key, y) not in seen:
                    seen.add((key, y))
                    out.append((w, y))
    return out


@dataclass
class CholeskyFactor:
    pivots: list
    factor: np.ndarray
    residual_diag: np.ndarray
    initial_diag: np.ndarray
    pivot_residuals: list = field(default_factory=list)
    # trace of the residual diagonal after each step
    residual_traces: list = field(default_factory=list)

    @property
    def rank(self):
        return len(self.pivots)

    @property
    def initial_trace(self):
        return float(self.initial_diag.sum())

    def captured_fractions(self):
        """Fraction of the Gram trace reproduced by L L^T after each step."""
        return 1.0 - np.asarray(self.residual_traces) / self.initial_trace

    def captured_fraction(self, rank=None):
        r = self.rank if rank is None else rank
        return float(self.captured_fractions()[r - 1]) if r else 0.0

    def rank_for_fraction(self, fraction):
        hit = np.nonzero(self.captured_fractions() >= fraction)[0]
        return int(hit[0]) + 1 if len(hit) else self.rank

    def report_rows(self):
        cum = self.captured_fractions()
        return [(step, self.pivots[step], float(self.pivot_residuals[step]), float(cum[step]))
                for step in range(self.rank)]


def _candidate_arrays(candidates):
    W = np.array([c[0] for c in candidates], dtype=float)
    y = np.array([c[1] for c in candidates], dtype=int)
    return W, y


def incomplete_cholesky(candidates, spec, rank_budget, residual_tol=None, n_labels=None):
    if rank_budget < 1:
        raise InputError("rank_budget must be at least 1")
    if len(candidates) == 0:
        raise InputError("no candidates to factorize")
    W, y = _candidate_arrays(candidates)
    if n_labels is None:
        n_labels = 2 if spec.center_labels else int(y.max()) + 1
    lab = label_kernel_matrix(n_labels, spec)
    n = len(W)

    diag = ((np.einsum("ij,ij->i", W, W) + spec.offset) ** spec.degree) * lab[y, y]
    initial = diag.copy()
    start_max = diag.max()
    if not start_max > 0:
        raise DegenerateKernelError("all candidate self-kernels are zero")
    tol = 1e-6 * start_max if residual_tol is None else residual_tol

    budget = min(int(rank_budget), n)
    G = np.zeros((n, budget))
    pivots, picked, traces = [], [], []
    d = diag.copy()
    for r in range(budget):
        j = int(np.argmax(d))
        if d[j] < tol or d[j] <= 0:
            break
        pivots.append(j)
        picked.append(float(d[j]))
        column = ((W @ W[j] + spec.offset) ** spec.degree) * lab[y, y[j]]
        column -= G[:, :r] @ G[j, :r]
        G[:, r] = column / np.sqrt(d[j])
        d -= G[:, r] ** 2
        d[j] = 0.0
        np.maximum(d, 0.0, out=d)
        traces.append(float(d.sum()))
    return CholeskyFactor(pivots, G[:, :len(pivots)], d, initial, picked, traces)


def basis_from_factor(factor, candidates, n_labels):
    if factor.rank < 1:
        raise InputError("factor has rank 0")
    return BasisSet.from_anchors([candidates[i] for i in factor.pivots], n_labels)
