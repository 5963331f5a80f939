"""Explicit-feature (primal) CRF for the degree-1 polynomial kernel.

With ``k(u, v) = <u, v> + c`` the emission feature map is
``phi(u) = [u, sqrt(c)]`` and ``Phi_em(u, y) = e_y (x) phi(u)``, so the
emission parameter is a |Y| x D matrix.  The objective matches the dual one
at corresponding parameters and is minimized here with L-BFGS.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .chain import windows
from .exceptions import ConfigurationError
from .inference import ScoreTable, forward_backward, log_partition, viterbi


def feature_map(W, spec):
    if spec.degree != 1 or spec.center_labels:
        raise ConfigurationError("explicit features are only built for uncentered degree 1")
    W = np.atleast_2d(W)
    return np.hstack([W, np.full((len(W), 1), np.sqrt(spec.offset))])


def theta_from_basis(basis, spec):
    """Materialize the emission parameter matrix of a dual basis."""
    phi = feature_map(basis.windows, spec) if basis.size else np.zeros((0, basis.window_dim + 1))
    theta = np.zeros((basis.n_labels, phi.shape[1]))
    np.add.at(theta, basis.labels, basis.coeffs[:, None] * phi)
    return theta


@dataclass
class PrimalModel:
    theta_em: np.ndarray
    theta_tr: np.ndarray
    objective: float
    spec: object

    def scores(self, seq):
        phi = feature_map(windows(seq, self.spec.window_radius), self.spec)
        return ScoreTable(phi @ self.theta_em.T, self.theta_tr)

    def predict(self, seq):
        return viterbi(self.scores(seq))


class PrimalObjective:
    def __init__(self, data, spec, sigma_squared, n_labels):
        self.spec = spec
        self.lam = 1.0 / sigma_squared
        self.n_labels = n_labels
        self.phis = [feature_map(windows(s, spec.window_radius), spec) for s in data]
        self.labels = [s.labels for s in data]
        self.dim = self.phis[0].shape[1]

    def unpack(self, x):
        L, D = self.n_labels, self.dim
        return x[:L * D].reshape(L, D), x[L * D:].reshape(L, L)

    def value(self, theta_em, theta_tr):
        total = 0.5 * self.lam * (np.sum(theta_em ** 2) + np.sum(theta_tr ** 2))
        for phi, y in zip(self.phis, self.labels):
            scores = ScoreTable(phi @ theta_em.T, theta_tr)
            gold = scores.emission[np.arange(len(y)), y].sum() + theta_tr[y[:-1], y[1:]].sum()
            total += log_partition(scores) - gold
        return float(total)

    def value_and_grad(self, x):
        theta_em, theta_tr = self.unpack(x)
        L = self.n_labels
        total = 0.5 * self.lam * float(x @ x)
        g_em = self.lam * theta_em
        g_tr = self.lam * theta_tr
        for phi, y in zip(self.phis, self.labels):
            m = forward_backward(ScoreTable(phi @ theta_em.T, theta_tr))
            gold = (phi @ theta_em.T)[np.arange(len(y)), y].sum() + theta_tr[y[:-1], y[1:]].sum()
            total += m.log_partition - gold
            resid = m.unary - np.eye(L)[y]
            g_em += resid.T @ phi
            g_tr += m.pairwise.sum(axis=0)
            np.add.at(g_tr, (y[:-1], y[1:]), -1.0)
        return total, np.concatenate([g_em.ravel(), g_tr.ravel()])


def train_primal(data, spec, config, n_labels, gtol=1e-9):
    obj = PrimalObjective(data, spec, config.sigma_squared, n_labels)
    x0 = np.zeros(n_labels * obj.dim + n_labels ** 2)
    res = minimize(obj.value_and_grad, x0, jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "ftol": 1e-15, "maxiter": 10000})
    theta_em, theta_tr = obj.unpack(res.x)
    return PrimalModel(theta_em, theta_tr, float(res.fun), spec)
