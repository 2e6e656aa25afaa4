"""scikit-learn style front ends for the mapper and the pattern detectors."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .detectors import DETECTORS, FALLBACK_POLICIES, BatchDetector
from .mapping import derive_params
from .modem import qam
from .transceiver import BatchEncoder, deinterleave, frame_config, interleave

__all__ = ["IndexModulationMapper", "SapDetector", "check_bits", "check_complex"]


def check_bits(X, n_features: int | None = None) -> np.ndarray:
    """Validate a 2-D array of 0/1 values."""
    X = np.asarray(X)
    if X.ndim == 1:
        raise ValueError("Expected 2D array, got 1D array instead; reshape with X.reshape(1, -1)")
    if X.ndim != 2:
        raise ValueError(f"Expected 2D array, got {X.ndim}D")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, but {n_features} are expected")
    if X.size and not np.all((X == 0) | (X == 1)):
        raise ValueError("bit arrays may only contain 0 and 1")
    return X.astype(np.uint8)


def check_complex(X, n_features: int | None = None, name: str = "X") -> np.ndarray:
    """Validate a finite 2-D complex (or real) array."""
    X = np.asarray(X)
    if X.ndim == 1:
        raise ValueError(f"Expected 2D {name}, got 1D array instead; reshape with reshape(1, -1)")
    if X.ndim != 2:
        raise ValueError(f"Expected 2D {name}, got {X.ndim}D")
    if not (np.issubdtype(X.dtype, np.number)):
        raise ValueError(f"{name} must be numeric")
    X = X.astype(complex)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinity")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, but {n_features} are expected")
    return X


class IndexModulationMapper(TransformerMixin, BaseEstimator):
    """Map rows of ``G * p`` bits to interleaved OFDM-IM frames of length N.

    With ``N=None`` a frame is a single subblock (N = n).

    >>> m = IndexModulationMapper(n=4, k=2, M=4).fit()
    >>> m.transform([[0, 0, 0, 0, 1, 1]])
    array([[ 1.+1.j, -1.-1.j,  0.+0.j,  0.+0.j]])
    """

    def __init__(self, n=8, k=4, M=4, N=None):
        self.n = n
        self.k = k
        self.M = M
        self.N = N

    def fit(self, X=None, y=None):
        N = self.n if self.N is None else self.N
        self.frame_ = frame_config(N, self.n, self.k, self.M)
        self.params_ = self.frame_.params
        self.spec_ = qam(self.M)
        self._encoder = BatchEncoder(self.params_, self.spec_)
        self.n_features_in_ = self.frame_.bits_per_frame
        if X is not None:
            check_bits(X, self.n_features_in_)
        return self

    def transform(self, X):
        check_is_fitted(self, "frame_")
        X = check_bits(X, self.n_features_in_)
        G, p = self.frame_.G, self.params_.p
        _, x = self._encoder.encode(X.reshape(X.shape[0], G, p))
        return interleave(x, self.frame_)

    def active_ranks(self, X):
        """Pattern rank of every subblock, shape (n_samples, G)."""
        check_is_fitted(self, "frame_")
        X = check_bits(X, self.n_features_in_)
        ranks, _ = self._encoder.encode(X.reshape(X.shape[0], self.frame_.G, self.params_.p))
        return ranks

    def inverse_transform(self, X):
        """Hard ML demapping of frames observed through a unit channel."""
        check_is_fitted(self, "frame_")
        X = check_complex(X, self.frame_.N)
        sub = deinterleave(X, self.frame_)
        det = BatchDetector(self.params_, self.spec_)
        a, shat = det.metrics(sub, np.ones_like(sub))
        bits = det.bits(det.detect(a)["ml"], shat)
        return bits.reshape(X.shape[0], -1)


class SapDetector(BaseEstimator):
    """Activation-pattern detector over rows of equalized subblocks.

    ``predict(X, H)`` takes ``X`` = R (n_samples, n) and the matching CFR ``H``
    (all ones if omitted) and returns pattern ranks. For ``klv`` the rank may
    be illegal (>= 2**p1).
    """

    def __init__(self, n=8, k=4, M=4, detector="subml", fallback="default"):
        self.n = n
        self.k = k
        self.M = M
        self.detector = detector
        self.fallback = fallback

    def fit(self, X=None, y=None, H=None):
        if self.detector not in DETECTORS:
            raise ValueError(f"detector must be one of {DETECTORS}, got {self.detector!r}")
        if self.fallback not in FALLBACK_POLICIES:
            raise ValueError(f"fallback must be one of {FALLBACK_POLICIES}, got {self.fallback!r}")
        self.params_ = derive_params(self.n, self.k, self.M)
        self.spec_ = qam(self.M)
        self._batch = BatchDetector(self.params_, self.spec_, self.fallback)
        self.n_features_in_ = self.n
        if X is not None:
            check_complex(X, self.n)
        return self

    def _inputs(self, X, H):
        check_is_fitted(self, "params_")
        X = check_complex(X, self.n)
        if H is None:
            H = np.ones_like(X)
        else:
            H = check_complex(H, self.n, name="H")
            if H.shape != X.shape:
                raise ValueError(f"H shape {H.shape} does not match X shape {X.shape}")
            if np.any(H == 0):
                raise ValueError("H has zero entries")
        return X, H

    def decision_function(self, X, H=None):
        """Per-subcarrier active likelihoods, shape (n_samples, n)."""
        X, H = self._inputs(X, H)
        return self._batch.metrics(X, H)[0]

    def predict(self, X, H=None):
        X, H = self._inputs(X, H)
        a, _ = self._batch.metrics(X, H)
        return self._batch.detect(a)[self.detector]

    def predict_bits(self, X, H=None):
        X, H = self._inputs(X, H)
        a, shat = self._batch.metrics(X, H)
        return self._batch.bits(self._batch.detect(a)[self.detector], shat)

    def score(self, X, y, H=None):
        """Fraction of rows whose detected rank equals ``y``."""
        return float(np.mean(self.predict(X, H) == np.asarray(y)))
