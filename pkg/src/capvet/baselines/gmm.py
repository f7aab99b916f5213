"""Two-component 1-D Gaussian mixture for picking an accept threshold from
a score distribution: fit by EM, accept scores whose posterior favors the
higher-mean component.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.mixture import GaussianMixture

from ..validation import ValidationError


class GmmSelector(BaseEstimator):
    """Accept/reject selector over 1-D scores.

    Attributes after fit: means_, variances_, weights_ (each length 2),
    accept_component_ (index of the larger mean), unimodal_ (True when the
    two means are within 0.01, flagged with a warning).
    """

    def __init__(self, seed: int = 0, max_iter: int = 200, tol: float = 1e-6):
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, scores) -> "GmmSelector":
        x = np.asarray(scores, dtype=np.float64).ravel()
        if x.size < 10:
            raise ValidationError(f"need at least 10 scores to fit, got {x.size}")
        if np.ptp(x) == 0.0:
            raise ValidationError("degenerate score distribution: all values equal")
        gmm = GaussianMixture(
            n_components=2,
            covariance_type="spherical",
            init_params="k-means++",
            max_iter=self.max_iter,
            tol=self.tol,
            random_state=self.seed,
        )
        gmm.fit(x.reshape(-1, 1))
        self._gmm = gmm
        self.means_ = gmm.means_.ravel().copy()
        self.variances_ = gmm.covariances_.ravel().copy()
        self.weights_ = gmm.weights_.copy()
        self.accept_component_ = int(np.argmax(self.means_))
        self.unimodal_ = bool(abs(self.means_[0] - self.means_[1]) < 0.01)
        if self.unimodal_:
            warnings.warn(
                "unimodal score distribution: component means within 0.01; "
                "accept decisions may be arbitrary",
                stacklevel=2,
            )
        return self

    def predict(self, scores) -> np.ndarray:
        """Boolean accept mask: posterior component equals the high-mean one."""
        if not hasattr(self, "_gmm"):
            raise ValidationError("selector is not fitted")
        x = np.asarray(scores, dtype=np.float64).reshape(-1, 1)
        return self._gmm.predict(x) == self.accept_component_


def fit_gmm_selector(scores, seed: int = 0) -> GmmSelector:
    return GmmSelector(seed=seed).fit(scores)
