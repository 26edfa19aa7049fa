from .forest import ForestModel, ForestParams, feature_importance, predict_score, train_forest
from .logistic import LogisticModel, logistic_gradient, logistic_objective, train_logistic


def set_threads(n: int | None) -> None:
    """Limit the worker threads used by forest training and prediction."""
    import numba

    if n is None:
        return
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


__all__ = [
    "ForestModel", "ForestParams", "LogisticModel", "feature_importance", "logistic_gradient",
    "logistic_objective", "predict_score", "set_threads", "train_forest", "train_logistic",
]
