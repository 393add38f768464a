import numpy as np

from ..errors import InvalidInput, UndefinedMetric


def _pair(y_true, y_pred, min_len):
    a = np.asarray(y_true, dtype=np.float64).ravel()
    b = np.asarray(y_pred, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InvalidInput(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise InvalidInput(f"need at least {min_len} values, got {a.size}")
    return a, b


def rmse(y_true, y_pred):
    """Root mean squared error over all entries (arrays of any matching shape)."""
    a, b = _pair(y_true, y_pred, 1)
    d = a - b
    return float(np.sqrt(np.dot(d, d) / d.size))


def r2(y_true, y_pred):
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    a, b = _pair(y_true, y_pred, 2)
    centred = a - a.mean()
    ss_tot = float(np.dot(centred, centred))
    if ss_tot == 0.0:
        raise UndefinedMetric("R^2 is undefined for a zero-variance target")
    d = a - b
    return 1.0 - float(np.dot(d, d)) / ss_tot
