"""scikit-learn compatible wrappers.

Rows of ``X`` are configurations flattened in row-major order, with spins
given as booleans, 0/1 or -1/+1. The estimators are stateless apart from
what ``fit`` learns, so they compose with ``Pipeline`` and ``clone``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .configuration import LocalConfiguration, _as_bits, ball_codes, match_mask
from .evaluator import satisfies_batch
from .samplers import BernoulliModel, IsingParams, sample_batch
from .sentence import parse_sentence
from .torus import TorusParams, ball_template, sub_lattice


def check_configurations(X, params: TorusParams) -> np.ndarray:
    """Validate ``X`` as a 2-D batch of configurations and return booleans."""
    X = check_array(X, dtype=None, ensure_2d=True)
    if X.shape[1] != params.size:
        raise ValueError(f"X has {X.shape[1]} columns; a torus with n^d={params.size} sites was expected")
    return _as_bits(X)


class _TorusMixin:
    def _params(self) -> TorusParams:
        return TorusParams(self.d, self.n, self.p, self.rho)


class PatternCounter(_TorusMixin, TransformerMixin, BaseEstimator):
    """Occurrence counts ``X_n^D`` of complete descriptions.

    ``descriptions`` are ``+``/``-`` strings in canonical offset order of the
    ball of radius ``radius``. With ``spacing`` the count runs over the
    regular sub-lattice of that spacing only.
    """

    def __init__(self, descriptions=("+",), radius=0, d=1, n=2, p=1, rho=1, spacing=None):
        self.descriptions = descriptions
        self.radius = radius
        self.d = d
        self.n = n
        self.p = p
        self.rho = rho
        self.spacing = spacing

    def fit(self, X, y=None):
        params = self._params()
        check_configurations(X, params)
        template = ball_template(params, self.radius)
        self.descriptions_ = [LocalConfiguration.from_string(template, s) for s in self.descriptions]
        self.centers_ = (
            np.array(sub_lattice(params, spacing=self.spacing).centers) if self.spacing else None
        )
        self.n_features_in_ = params.size
        return self

    def transform(self, X):
        check_is_fitted(self, "descriptions_")
        params = self._params()
        X = check_configurations(X, params)
        out = np.empty((X.shape[0], len(self.descriptions_)), dtype=np.int64)
        for j, desc in enumerate(self.descriptions_):
            mask = match_mask(X, desc, params)
            if self.centers_ is not None:
                mask = mask[:, self.centers_]
            out[:, j] = mask.sum(axis=1)
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array([f"count[{s}]" for s in self.descriptions], dtype=object)


class SentenceChecker(_TorusMixin, BaseEstimator):
    """Predicts whether each configuration satisfies a sentence."""

    def __init__(self, sentence="EXIST 1 BALL r=0 { C(0) }", d=1, n=2, p=1, rho=1):
        self.sentence = sentence
        self.d = d
        self.n = n
        self.p = p
        self.rho = rho

    def fit(self, X=None, y=None):
        params = self._params()
        if X is not None:
            check_configurations(X, params)
        self.sentence_ = parse_sentence(self.sentence, params)
        self.n_features_in_ = params.size
        return self

    def predict(self, X):
        check_is_fitted(self, "sentence_")
        params = self._params()
        return satisfies_batch(check_configurations(X, params), self.sentence_, params)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y, dtype=bool)))


class LocalFrequencyEstimator(_TorusMixin, TransformerMixin, BaseEstimator):
    """Empirical law of ball colorings.

    ``fit`` pools every center of every row into ``frequencies_`` (indexed by
    description code) and records the smallest one as ``p_min_``;
    ``transform`` returns the per-row histogram.
    """

    def __init__(self, radius=0, d=1, n=2, p=1, rho=1):
        self.radius = radius
        self.d = d
        self.n = n
        self.p = p
        self.rho = rho

    def _histograms(self, X, params):
        template = ball_template(params, self.radius)
        codes = ball_codes(X, template, params)
        k = 1 << template.beta
        flat = codes + k * np.arange(codes.shape[0])[:, None]
        return np.bincount(flat.ravel(), minlength=k * codes.shape[0]).reshape(-1, k) / params.size

    def fit(self, X, y=None):
        params = self._params()
        hist = self._histograms(check_configurations(X, params), params)
        self.frequencies_ = hist.mean(axis=0)
        self.p_min_ = float(self.frequencies_.min())
        self.n_features_in_ = params.size
        return self

    def transform(self, X):
        check_is_fitted(self, "frequencies_")
        params = self._params()
        return self._histograms(check_configurations(X, params), params)


class FieldSampler(_TorusMixin, BaseEstimator):
    """Draws configurations from a Bernoulli or Ising field.

    ``fit`` only applies to the product model (``b == 0``): it sets
    ``p_`` to the black fraction of ``X``.
    """

    def __init__(self, a=0.0, b=0.0, d=1, n=2, p=1, rho=1, method="auto"):
        self.a = a
        self.b = b
        self.d = d
        self.n = n
        self.p = p
        self.rho = rho
        self.method = method

    def fit(self, X, y=None):
        if self.b != 0:
            raise ValueError("fit is only available for the product model b == 0")
        X = check_configurations(X, self._params())
        self.p_ = float(X.mean())
        self.n_features_in_ = X.shape[1]
        return self

    def model(self):
        if hasattr(self, "p_"):
            return BernoulliModel(self.p_)
        return IsingParams(self.a, self.b)

    def sample(self, n_samples=1, random_state=0):
        return sample_batch(self._params(), self.model(), n_samples, random_state, method=self.method)
