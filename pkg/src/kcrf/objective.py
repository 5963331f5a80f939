"""Negative log-posterior of a kernel CRF in dual (coefficient) form.

The parameter vector is represented as

    theta = sum_b alpha_em[b] * Phi_em(anchor_b) + sum_{y,y'} alpha_tr[y, y'] * e_{y,y'}

where each emission anchor is a (window, label) configuration shared by all
positions (stationary tying) and the transition part is a plain |Y| x |Y|
table.  Every quantity below is computed through kernel values only.
"""
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .chain import BLOCKS, EMISSION, TRANSITION, windows
from .exceptions import ConfigurationError, DimensionError, InputError
from .inference import ScoreTable, forward_backward_batch, log_partition_batch
from .kernels import KernelSpec, base_gram, gram_matrix, label_kernel_matrix

SCHEDULES = ("joint-block-jacobi", "cyclic-subspace")


@dataclass
class TrainConfig:
    sigma_squared: float = 1.0
    # None -> 1e-8 * trace(H) / dim
    damping: Optional[float] = None
    max_iterations: int = 100
    gradient_tolerance: float = 1e-6
    rank_budget: int = 100
    # None -> 1e-6 * initial max residual
    residual_tol: Optional[float] = None
    window_radius: int = 0
    degree: int = 1
    offset: float = 1.0
    center_labels: bool = False
    schedule: str = "cyclic-subspace"
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.sigma_squared > 0:
            raise ConfigurationError(f"sigma_squared must be positive, got {self.sigma_squared!r}")
        if self.damping is not None and self.damping < 0:
            raise ConfigurationError(f"damping must be nonnegative, got {self.damping!r}")
        if int(self.rank_budget) != self.rank_budget or self.rank_budget < 1:
            raise ConfigurationError(f"rank_budget must be >= 1, got {self.rank_budget!r}")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be nonnegative")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(
                f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        self.kernel_spec()  # validates kernel fields

    @property
    def regularization(self):
        return 1.0 / self.sigma_squared

    def kernel_spec(self):
        return KernelSpec(degree=self.degree, offset=self.offset,
                          window_radius=self.window_radius,
                          center_labels=self.center_labels)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigurationError(str(e)) from None

    def to_dict(self):
        return asdict(self)


@dataclass
class BasisSet:
    """Emission anchors (window, label) with coefficients, plus transition coefficients."""

    windows: np.ndarray
    labels: np.ndarray
    coeffs: np.ndarray
    transition_coeffs: np.ndarray

    def __post_init__(self):
        self.transition_coeffs = np.array(self.transition_coeffs, dtype=float)
        n = self.transition_coeffs.shape[0]
        if self.transition_coeffs.shape != (n, n):
            raise DimensionError("transition coefficients must be square")
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        self.coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        W = np.asarray(self.windows, dtype=float)
        if W.ndim != 2:
            W = W.reshape(len(self.labels), -1) if W.size else np.zeros((0, 0))
        self.windows = W
        if not (len(self.windows) == len(self.labels) == len(self.coeffs)):
            raise DimensionError("anchor windows, labels and coefficients differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= n):
            raise InputError("anchor label outside alphabet")
        if not (np.isfinite(self.coeffs).all() and np.isfinite(self.transition_coeffs).all()):
            raise InputError("basis coefficients must be finite")

    @classmethod
    def empty(cls, n_labels, window_dim=0):
        return cls(np.zeros((0, window_dim)), np.zeros(0, dtype=int), np.zeros(0),
                   np.zeros((n_labels, n_labels)))

    @classmethod
    def from_anchors(cls, anchors, n_labels, coeffs=None):
        """Zero-coefficient basis over ``(window, label)`` anchors, duplicates merged."""
        W = np.array([a[0] for a in anchors], dtype=float)
        y = np.array([a[1] for a in anchors], dtype=int)
        c = np.zeros(len(anchors)) if coeffs is None else np.asarray(coeffs, dtype=float)
        if len(anchors) == 0:
            return cls.empty(n_labels)
        return cls(W, y, c, np.zeros((n_labels, n_labels))).merged()

    @property
    def n_labels(self):
        return self.transition_coeffs.shape[0]

    @property
    def size(self):
        return len(self.labels)

    @property
    def window_dim(self):
        return self.windows.shape[1] if self.windows.ndim == 2 else 0

    def anchors(self):
        return [(w, int(y)) for w, y in zip(self.windows, self.labels)]

    def merged(self):
        """Collapse identical (window, label) anchors by summing their coefficients."""
        index = {}
        keep, coeffs = [], []
        for b in range(self.size):
            key = (self.windows[b].tobytes(), int(self.labels[b]))
            if key in index:
                coeffs[index[key]] += self.coeffs[b]
            else:
                index[key] = len(keep)
                keep.append(b)
                coeffs.append(self.coeffs[b])
        return BasisSet(self.windows[keep], self.labels[keep], np.array(coeffs),
                        self.transition_coeffs.copy())

    def with_coeffs(self, coeffs, transition_coeffs):
        return replace(self, coeffs=np.array(coeffs, dtype=float),
                       transition_coeffs=np.array(transition_coeffs, dtype=float))


@dataclass
class GradientReport:
    emission_grad: np.ndarray
    transition_grad: np.ndarray
    block_norms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.block_norms = {
            EMISSION: float(np.linalg.norm(self.emission_grad)),
            TRANSITION: float(np.linalg.norm(self.transition_grad)),
        }

    def block(self, name):
        return self.emission_grad if name == EMISSION else self.transition_grad.ravel()


@dataclass
class StackedMarginals:
    """Marginals of all sequences: log-partitions (S,), unary (N, |Y|) in
    stacked position order, and every pairwise table (M, |Y|, |Y|)."""

    log_partition: np.ndarray
    unary: np.ndarray
    pairwise: np.ndarray


class DualObjective:
    """Kernel design for a fixed dataset and anchor set.

    ``design[n, y, b]`` is the emission kernel between the configuration
    (window of position ``n``, label ``y``) and anchor ``b``; positions of all
    sequences are stacked.  Coefficients are passed to each method so the
    cached design is reused across optimizer iterations.
    """

    def __init__(self, data, basis, spec, sigma_squared=1.0):
        self.spec = spec
        self.n_labels = n = basis.n_labels
        self.label_kernel = label_kernel_matrix(n, spec)
        self.regularization = 1.0 / sigma_squared
        self.anchor_windows = basis.windows
        self.anchor_labels = basis.labels
        self.n_anchors = basis.size

        self.lengths = np.array([s.length for s in data], dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)]).astype(int)
        # sequences of equal length share one batched chain recursion
        self.groups = []
        for T in np.unique(self.lengths):
            members = np.nonzero(self.lengths == T)[0]
            positions = self.offsets[members][:, None] + np.arange(T)[None, :]
            self.groups.append((members, positions))
        W = [windows(s, spec.window_radius) for s in data]
        dim = W[0].shape[1] if W else basis.window_dim
        for w in W:
            if w.shape[1] != dim:
                raise DimensionError(f"window length {w.shape[1]} differs from {dim}")
        if self.n_anchors and basis.window_dim != dim:
            raise DimensionError(
                f"anchor window length {basis.window_dim} != data window length {dim}")
        self.windows = np.vstack(W) if W else np.zeros((0, dim))
        N = len(self.windows)

        if self.n_anchors:
            kx = base_gram(self.windows, basis.windows, spec) if N else np.zeros((0, self.n_anchors))
            self.design = kx[:, None, :] * self.label_kernel[:, basis.labels][None, :, :]
            self.gram = gram_matrix(basis.anchors(), spec, n)
        else:
            self.design = np.zeros((N, n, 0))
            self.gram = np.zeros((0, 0))
        self._gram_eig = None

        self.labeled = all(s.is_labeled for s in data)
        if self.labeled and N:
            self.gold = np.concatenate([s.labels for s in data])
            if self.gold.max() >= n:
                raise InputError("sequence label outside alphabet")
            self.gold_onehot = np.eye(n)[self.gold]
            self.gold_pairs = np.zeros((n, n))
            for s in data:
                np.add.at(self.gold_pairs, (s.labels[:-1], s.labels[1:]), 1.0)
        elif self.labeled:
            self.gold = np.zeros(0, dtype=int)
            self.gold_onehot = np.zeros((0, n))
            self.gold_pairs = np.zeros((n, n))

    @property
    def n_sequences(self):
        return len(self.lengths)

    def emission_scores(self, alpha_em):
        N = len(self.windows)
        if self.n_anchors == 0:
            return np.zeros((N, self.n_labels))
        flat = self.design.reshape(N * self.n_labels, self.n_anchors)
        return (flat @ alpha_em).reshape(N, self.n_labels)

    def score_tables(self, alpha_em, alpha_tr):
        em = self.emission_scores(alpha_em)
        return [ScoreTable(em[self.offsets[i]:self.offsets[i + 1]], alpha_tr)
                for i in range(self.n_sequences)]

    def regularizer(self, alpha_em, alpha_tr):
        quad = float(alpha_em @ self.gram @ alpha_em) if self.n_anchors else 0.0
        return 0.5 * self.regularization * (quad + float(np.sum(alpha_tr ** 2)))

    def _gold_score(self, em, alpha_tr):
        return float(np.sum(em * self.gold_onehot) + np.sum(self.gold_pairs * alpha_tr))

    def _require_labels(self):
        if not self.labeled:
            raise InputError("objective needs fully labeled sequences")

    def value(self, alpha_em, alpha_tr):
        self._require_labels()
        em = self.emission_scores(alpha_em)
        logz = sum(float(log_partition_batch(em[pos], alpha_tr).sum())
                   for _, pos in self.groups)
        return self.regularizer(alpha_em, alpha_tr) + logz - self._gold_score(em, alpha_tr)

    def marginals(self, alpha_em, alpha_tr):
        em = self.emission_scores(alpha_em)
        if not (np.isfinite(em).all() and np.isfinite(alpha_tr).all()):
            raise InputError("non-finite scores")
        N, n = em.shape
        logz = np.zeros(self.n_sequences)
        unary = np.zeros((N, n))
        pairwise = []
        for members, pos in self.groups:
            z, u, pw = forward_backward_batch(em[pos], alpha_tr)
            logz[members] = z
            unary[pos] = u
            pairwise.append(pw.reshape(-1, n, n))
        pairwise = np.concatenate(pairwise) if pairwise else np.zeros((0, n, n))
        return StackedMarginals(logz, unary, pairwise)

    def evaluate(self, alpha_em, alpha_tr):
        """Objective value, gradient report and stacked marginals."""
        self._require_labels()
        em = self.emission_scores(alpha_em)
        margs = self.marginals(alpha_em, alpha_tr)
        value = (self.regularizer(alpha_em, alpha_tr) + float(margs.log_partition.sum())
                 - self._gold_score(em, alpha_tr))

        lam = self.regularization
        N, n = len(self.windows), self.n_labels
        residual = margs.unary - self.gold_onehot
        if self.n_anchors:
            g_em = (self.design.reshape(N * n, self.n_anchors).T @ residual.reshape(-1)
                    + lam * (self.gram @ alpha_em))
        else:
            g_em = np.zeros(0)
        g_tr = margs.pairwise.sum(axis=0) - self.gold_pairs + lam * alpha_tr
        return value, GradientReport(g_em, g_tr), margs

    def hessian_block(self, block, margs):
        """Block-Jacobi Hessian: prior term plus per-clique conditional covariances."""
        lam = self.regularization
        n = self.n_labels
        if block == EMISSION:
            H = lam * self.gram
            if self.n_anchors and len(self.windows):
                mu = margs.unary
                D = self.design
                muD = np.einsum("nl,nlb->nb", mu, D)
                M = mu[:, :, None] * (D - muD[:, None, :])
                H = H + D.reshape(-1, self.n_anchors).T @ M.reshape(-1, self.n_anchors)
        elif block == TRANSITION:
            P = margs.pairwise.reshape(-1, n * n)
            H = lam * np.eye(n * n) + np.diag(P.sum(axis=0)) - P.T @ P
        else:
            raise ConfigurationError(f"unknown block {block!r}; expected one of {BLOCKS}")
        return 0.5 * (H + H.T)

    def gram_range(self):
        """Eigenpairs of the anchor Gram matrix above 1e-10 of the largest."""
        if self._gram_eig is None:
            vals, vecs = np.linalg.eigh(self.gram)
            keep = vals > 1e-10 * max(vals.max(initial=0.0), 0.0)
            self._gram_eig = (vals[keep], vecs[:, keep])
        return self._gram_eig

    def gram_inverse_norm_sq(self, g):
        """``g^T K^+ g`` for the anchor Gram matrix ``K``.

        This is the squared RKHS norm of the parameter-space gradient
        projected onto the span of the anchors.
        """
        if self.n_anchors == 0:
            return 0.0
        vals, vecs = self.gram_range()
        proj = vecs.T @ g
        return float(np.sum(proj ** 2 / vals))

    def reduced_emission_hessian(self, margs):
        """Emission Hessian block expressed in the range of the Gram matrix.

        Returns ``(V, H_r)`` with ``H = V H_r V^T`` on range(K).  Gradients
        always lie in range(K) and directions orthogonal to it leave the
        parameter vector unchanged, so Newton steps can be solved here.
        """
        vals, V = self.gram_range()
        H = self.regularization * np.diag(vals)
        if len(self.windows) and len(vals):
            mu = margs.unary
            N, n = mu.shape
            DV = (self.design.reshape(N * n, self.n_anchors) @ V).reshape(N, n, -1)
            muDV = np.einsum("nl,nlr->nr", mu, DV)
            M = mu[:, :, None] * (DV - muDV[:, None, :])
            H = H + DV.reshape(N * n, -1).T @ M.reshape(N * n, -1)
        return V, 0.5 * (H + H.T)


def _sigma_squared(config):
    return config.sigma_squared if config is not None else 1.0


def build_score_table(seq, basis, spec):
    obj = DualObjective([seq], basis, spec)
    return obj.score_tables(basis.coeffs, basis.transition_coeffs)[0]


def negative_log_posterior(data, basis, spec, config):
    obj = DualObjective(data, basis, spec, _sigma_squared(config))
    return obj.value(basis.coeffs, basis.transition_coeffs)


def gradient(data, basis, spec, config):
    obj = DualObjective(data, basis, spec, _sigma_squared(config))
    return obj.evaluate(basis.coeffs, basis.transition_coeffs)[1]


def hessian_block(data, basis, spec, config, block):
    obj = DualObjective(data, basis, spec, _sigma_squared(config))
    _, _, margs = obj.evaluate(basis.coeffs, basis.transition_coeffs)
    return obj.hessian_block(block, margs)
