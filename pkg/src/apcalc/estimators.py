"""scikit-learn style wrappers around a fixed network.

The networks are specified, not trained, so :class:`APClassifier`,
:class:`AttributionTransformer` and :class:`SpuriousSuppressor` take a prefit
model and ``fit`` only records shapes (and, for the suppressor, runs the
suppression loop on the given data). Labels ``y`` are 0-based.
"""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .attribution import attribution_matrix, marginal_gradients
from .inference import label_marginals
from .metrics import SuppressionConfig, suppress_spurious
from .network import Dataset, EstimatorConfig, NetworkModel
from .separation import default_candidates, learn_separation


def _check_model(model):
    if not isinstance(model, NetworkModel):
        raise TypeError("expected a NetworkModel")
    return model


def _check_X(est, X):
    X = check_array(X, dtype=float)
    if X.shape[1] != est.n_features_in_:
        raise ValueError(f"X has {X.shape[1]} features, expected {est.n_features_in_}")
    return X


class APClassifier(ClassifierMixin, BaseEstimator):
    """Label prediction from the network's marginal ``P(label | S = t)``.

    Parameters
    ----------
    model : NetworkModel
    samples_per_point : int
        Monte Carlo draws of the mediator noise per row.
    seed : int
    """

    def __init__(self, model=None, samples_per_point=1000, seed=0):
        self.model = model
        self.samples_per_point = samples_per_point
        self.seed = seed

    def fit(self, X, y=None):
        self.model_ = _check_model(self.model)
        X = check_array(X, dtype=float)
        if X.shape[1] != self.model_.n:
            raise ValueError(f"X has {X.shape[1]} features, the model expects {self.model_.n}")
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(self.model_.m)
        return self

    def _cfg(self):
        return EstimatorConfig(samples_per_point=self.samples_per_point, seed=self.seed)

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return label_marginals(self.model_, _check_X(self, X), self._cfg())

    def predict(self, X):
        proba = self.predict_proba(X)
        # Lowest index wins ties, as in predict_label.
        top = proba.max(axis=1, keepdims=True)
        return self.classes_[np.argmax(proba >= top - 1e-12, axis=1)]


class AttributionTransformer(TransformerMixin, BaseEstimator):
    """Per-row marginal attributions ``dP(label=l | S=t)/dt_i``, flattened to ``n*m`` columns.

    ``fit`` also stores the dataset-level report in ``report_``. Column
    ``i*m + l`` of the output holds feature ``i`` and label ``l``.
    """

    def __init__(self, model=None, estimator="marginal", samples_per_point=1000, seed=0):
        self.model = model
        self.estimator = estimator
        self.samples_per_point = samples_per_point
        self.seed = seed

    def _cfg(self):
        return EstimatorConfig(samples_per_point=self.samples_per_point, seed=self.seed)

    def fit(self, X, y=None):
        self.model_ = _check_model(self.model)
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.report_ = attribution_matrix(self.model_, Dataset(X), self.estimator, self._cfg(),
                                          uncertainty=self.samples_per_point >= 2)
        return self

    def transform(self, X):
        check_is_fitted(self, "report_")
        X = _check_X(self, X)
        grads = marginal_gradients(self.model_, X, self._cfg())
        return grads.reshape(X.shape[0], -1)


class SeparationLearner(TransformerMixin, BaseEstimator):
    """Learns a separation transform for labels ``j`` and ``k``; ``transform`` applies it.

    Candidates default to the axis projections plus ``n_candidates``
    quasi-random directions.
    """

    def __init__(self, j=0, k=1, mode="literal-mi", bins=8, n_candidates=32, seed=0):
        self.j = j
        self.k = k
        self.mode = mode
        self.bins = bins
        self.n_candidates = n_candidates
        self.seed = seed

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = np.asarray(y)
        self.n_features_in_ = X.shape[1]
        cands = default_candidates(X.shape[1], self.n_candidates, self.seed)
        self.result_ = learn_separation(Dataset(X, y), self.j, self.k, cands, self.mode, self.bins)
        self.best_ = self.result_.best
        self.scores_ = dict(self.result_.scores)
        return self

    def transform(self, X):
        check_is_fitted(self, "best_")
        return self.best_(_check_X(self, X))[:, None]


class SpuriousSuppressor(BaseEstimator):
    """Runs spurious-correlation suppression for one feature and label on ``(X, y)``.

    After ``fit``, ``model_`` is the updated network and ``trace_`` the
    iteration rows.
    """

    def __init__(self, model=None, feature=0, label=0, epsilon=0.05, step=1.0, max_iters=200,
                 fd_step=1e-4, samples_per_point=256, seed=0, estimator="marginal"):
        self.model = model
        self.feature = feature
        self.label = label
        self.epsilon = epsilon
        self.step = step
        self.max_iters = max_iters
        self.fd_step = fd_step
        self.samples_per_point = samples_per_point
        self.seed = seed
        self.estimator = estimator

    def fit(self, X, y, X_holdout=None, y_holdout=None):
        model = _check_model(self.model)
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        holdout = None
        if X_holdout is not None:
            holdout = Dataset(check_array(X_holdout, dtype=float), np.asarray(y_holdout))
        cfg = SuppressionConfig(self.epsilon, self.step, self.max_iters, self.fd_step)
        ecfg = EstimatorConfig(samples_per_point=self.samples_per_point, seed=self.seed)
        self.model_, self.trace_ = suppress_spurious(model, Dataset(X, np.asarray(y)), self.feature, self.label,
                                                     cfg, ecfg, self.estimator, holdout)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        ecfg = EstimatorConfig(samples_per_point=self.samples_per_point, seed=self.seed)
        probs = label_marginals(self.model_, _check_X(self, X), ecfg)
        top = probs.max(axis=1, keepdims=True)
        return np.argmax(probs >= top - 1e-12, axis=1)
