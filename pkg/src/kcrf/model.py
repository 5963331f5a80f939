"""Trained kernel CRF models and their JSON persistence."""
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .chain import LabelAlphabet, windows
from .exceptions import DimensionError, ParseError
from .inference import ScoreTable, viterbi
from .kernels import KernelSpec, base_gram, label_kernel_matrix
from .objective import BasisSet
from .optimizer import train

FORMAT_VERSION = 1


@dataclass
class KernelCRFModel:
    spec: KernelSpec
    alphabet: LabelAlphabet
    basis: BasisSet
    sigma_squared: float
    feature_dim: int

    def scores(self, seq):
        if seq.feature_dim != self.feature_dim:
            raise DimensionError(
                f"model expects {self.feature_dim} features, data has {seq.feature_dim}")
        b = self.basis
        W = windows(seq, self.spec.window_radius)
        em = np.zeros((seq.length, len(self.alphabet)))
        if b.size:
            lab = label_kernel_matrix(len(self.alphabet), self.spec)
            em = (base_gram(W, b.windows, self.spec) * b.coeffs) @ lab[:, b.labels].T
        return ScoreTable(em, b.transition_coeffs)

    def predict(self, seq):
        return viterbi(self.scores(seq))

    def predict_all(self, sequences):
        return [self.predict(s) for s in sequences]

    def to_dict(self):
        b = self.basis
        return {
            "format_version": FORMAT_VERSION,
            "kernel": {"degree": self.spec.degree, "offset": self.spec.offset,
                       "window_radius": self.spec.window_radius,
                       "center_labels": self.spec.center_labels},
            "alphabet": list(self.alphabet.names),
            "feature_dim": self.feature_dim,
            "sigma_squared": self.sigma_squared,
            "anchors": {"windows": b.windows.tolist(), "labels": b.labels.tolist(),
                        "coefficients": b.coeffs.tolist()},
            "transition": b.transition_coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ParseError(f"unsupported model format version {version!r}")
        try:
            alphabet = LabelAlphabet(d["alphabet"])
            spec = KernelSpec(**d["kernel"])
            a = d["anchors"]
            n = len(alphabet)
            window_dim = (2 * spec.window_radius + 1) * d["feature_dim"]
            W = np.array(a["windows"], dtype=float).reshape(len(a["labels"]), window_dim)
            basis = BasisSet(W, a["labels"], a["coefficients"], d["transition"])
            if basis.n_labels != n:
                raise ParseError("transition table does not match alphabet size")
            return cls(spec, alphabet, basis, float(d["sigma_squared"]), int(d["feature_dim"]))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(f"malformed model file: {e}") from None

    def save(self, path):
        atomic_write(path, json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(d)


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fit(dataset, config, basis=None, log=None):
    """Train on a labeled :class:`~kcrf.data.Dataset`; returns (model, state)."""
    spec = config.kernel_spec()
    n = len(dataset.alphabet)
    state = train(dataset.sequences, spec, config, n_labels=n, basis=basis, log=log)
    model = KernelCRFModel(spec, dataset.alphabet, state.basis, config.sigma_squared,
                           dataset.feature_dim)
    return model, state


def fold_assignment(n_sequences, k, seed=None):
    """Fold index per sequence: position modulo k, after a seeded shuffle if given."""
    order = np.arange(n_sequences)
    if seed is not None:
        order = np.random.default_rng(seed).permutation(n_sequences)
    folds = np.empty(n_sequences, dtype=int)
    folds[order] = np.arange(n_sequences) % k
    return folds


def cross_validate(dataset, config, k=5, seed=None):
    from .exceptions import ConfigurationError
    from .metrics import evaluate

    if not 2 <= k <= len(dataset):
        raise ConfigurationError(f"folds must be between 2 and {len(dataset)}, got {k}")
    folds = fold_assignment(len(dataset), k, seed)
    results = []
    for f in range(k):
        train_idx = np.nonzero(folds != f)[0]
        test_idx = np.nonzero(folds == f)[0]
        model, state = fit(dataset.subset(train_idx), config)
        test = dataset.subset(test_idx)
        metrics = evaluate([s.labels for s in test.sequences],
                           model.predict_all(test.sequences), len(dataset.alphabet))
        metrics.update(fold=f, objective=state.objective, converged=state.converged,
                       train_size=len(train_idx), test_size=len(test_idx))
        results.append(metrics)
    acc = np.array([r["accuracy"] for r in results])
    return {
        "folds": results,
        "mean_accuracy": float(acc.mean()),
        "sd_accuracy": float(acc.std(ddof=1)) if k > 1 else 0.0,
    }
