"""scikit-learn wrappers around the typicality test and the block code.

The source distribution is a hyper-parameter, not something learned from
``X``: ``fit`` validates the parameters and precomputes the reference
entropy or codebook. ``X`` is always a 2-D integer array with one length-``n``
sequence per row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from aeptools.coding import CodeParams, Codeword, build_codebook, decode, encode
from aeptools.entropy import (
    Distribution,
    QParam,
    composition_weighted_sum,
    letter_counts,
    shannon_entropy,
    tsallis_entropy,
)
from aeptools.typicality import exact_center, q_surprisal_weights, surprisal_bits, within


def _check_sequences(X, d: Distribution) -> np.ndarray:
    X = check_array(X, dtype=np.int64, ensure_min_features=1)
    letter_counts(d, X)
    return X


class TypicalityClassifier(ClassifierMixin, BaseEstimator):
    """Labels sequences as epsilon-typical (1) or not (0).

    With ``q == 1`` the statistic is the empirical entropy rate in bits and
    ``epsilon`` is in bits. For any other ``q`` the statistic is the mean
    q-surprisal and ``epsilon`` is in nats.
    """

    def __init__(self, probs=(0.5, 0.5), epsilon=0.05, q=1.0):
        self.probs = probs
        self.epsilon = epsilon
        self.q = q

    def fit(self, X=None, y=None):
        self.distribution_ = Distribution(self.probs)
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not self.q > 0:
            raise ValueError("q must be > 0")
        if self.q == 1.0:
            self.reference_ = shannon_entropy(self.distribution_).value
            self.weights_ = surprisal_bits(self.distribution_)
        else:
            self.reference_ = tsallis_entropy(self.distribution_, QParam(self.q)).value
            self.weights_ = q_surprisal_weights(self.distribution_, QParam(self.q))
        self.classes_ = np.array([0, 1])
        return self

    def statistic(self, X) -> np.ndarray:
        check_is_fitted(self, "reference_")
        X = _check_sequences(X, self.distribution_)
        counts = letter_counts(self.distribution_, X)
        w = np.where(np.isfinite(self.weights_), self.weights_, np.nan)
        return composition_weighted_sum(counts, w) / X.shape[1]

    def decision_function(self, X) -> np.ndarray:
        """``epsilon - |statistic - reference|``: non-negative exactly on typical rows."""
        return self.epsilon - np.abs(self.statistic(X) - self.reference_)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "reference_")
        X = _check_sequences(X, self.distribution_)
        counts = letter_counts(self.distribution_, X)
        return within(counts, self.weights_, exact_center(self.distribution_, self.weights_), self.epsilon).astype(int)


class TypicalSetCodec(TransformerMixin, BaseEstimator):
    """Block codec as a transformer: rows in, ``(ok, payload)`` rows out."""

    def __init__(self, probs=(0.5, 0.5), n=8, rate=1.0, epsilon=0.05):
        self.probs = probs
        self.n = n
        self.rate = rate
        self.epsilon = epsilon

    def fit(self, X=None, y=None):
        d = Distribution(self.probs)
        self.codebook_ = build_codebook(d, CodeParams(self.n, self.rate, self.epsilon))
        self.width_ = self.codebook_.width
        return self

    def transform(self, X) -> np.ndarray:
        """Object array of shape ``(n_samples, 2)``: success flag and integer payload."""
        check_is_fitted(self, "codebook_")
        X = _check_sequences(X, self.codebook_.distribution)
        if X.shape[1] != self.n:
            raise ValueError(f"expected sequences of length {self.n}, got {X.shape[1]}")
        out = np.empty((X.shape[0], 2), dtype=object)
        for i, row in enumerate(X):
            c = encode(self.codebook_, row)
            out[i] = (c.ok, c.payload)
        return out

    def inverse_transform(self, Z) -> np.ndarray:
        """Decoded rows; rows whose codeword carries a failure flag are all ``-1``."""
        check_is_fitted(self, "codebook_")
        Z = np.asarray(Z, dtype=object).reshape(-1, 2)
        out = np.full((Z.shape[0], self.n), -1, dtype=np.int64)
        for i, (ok, payload) in enumerate(Z):
            s = decode(self.codebook_, Codeword(bool(ok), int(payload), self.width_))
            if s is not None:
                out[i] = s
        return out

    def score(self, X, y=None) -> float:
        """Fraction of rows that survive a round trip."""
        X = _check_sequences(X, self.codebook_.distribution)
        back = self.inverse_transform(self.transform(X))
        return float(np.mean(np.all(back == X, axis=1)))
