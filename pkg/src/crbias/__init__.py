"""Bias and group fairness gaps from treating competing risks as censoring."""

__version__ = "0.1.0"

from .core import (DataError, Horizon, NumericalError, StepFunction, SurvivalDataset,  # noqa: E402
                   event_time_quantile, step_eval, step_eval_left)

__all__ = ["DataError", "Horizon", "NumericalError", "StepFunction", "SurvivalDataset",
           "event_time_quantile", "step_eval", "step_eval_left", "__version__"]
