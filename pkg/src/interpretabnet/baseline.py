"""Binary logistic regression fitted by full-batch gradient descent."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateImportanceError
from .model import ImportanceVector
from .numeric import _sigmoid


@dataclass
class LogisticModel:
    w: np.ndarray
    b: float = 0.0
    trained: bool = False
    feature_names: list = field(default_factory=list)

    def decision_function(self, x):
        return np.asarray(x, dtype=np.float64) @ self.w + self.b

    def predict_proba(self, x):
        p = _sigmoid(np.atleast_1d(self.decision_function(x)).astype(np.float64))
        return np.column_stack([1.0 - p, p])

    def predict(self, x):
        return (self.decision_function(x) > 0).astype(np.int64)


def fit_logistic(x, y, lr=0.1, epochs=500, l2=0.0, feature_names=()):
    """Minimise mean cross-entropy + (l2 / 2) * ||w||^2, starting from zero weights.

    Full-batch updates from a zero start make the fit deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isin(y, (0, 1)).all():
        raise DataError("logistic regression needs binary labels in {0, 1}")
    if np.unique(y).size < 2:
        raise DataError("logistic regression needs both classes in the training data")
    n = x.shape[0]
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(epochs):
        p = _sigmoid(x @ w + b)
        err = p - y
        w -= lr * (x.T @ err / n + l2 * w)
        b -= lr * err.mean()
    return LogisticModel(w, b, trained=epochs > 0, feature_names=list(feature_names))


def coefficients_as_importance(model, model_id="logistic", subset_id=""):
    """|w| normalised to sum to one."""
    mag = np.abs(np.asarray(model.w, dtype=np.float64))
    total = float(mag.sum())
    if total == 0:
        raise DegenerateImportanceError("all logistic coefficients are zero")
    return ImportanceVector(mag / total, model_id, subset_id, total, list(model.feature_names))
