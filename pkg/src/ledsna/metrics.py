"""Surrogate fidelity measures: local approximation error and R-squared."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class FidelityReport:
    """R-squared decomposition over a perturbation set.

    ``undefined`` marks the constant-label case (SST = 0 with SSE > 0),
    where r_squared carries the -inf sentinel.  ``err`` is filled by the
    explain pipeline; r_squared() alone leaves it at 0.
    """

    err: float
    r_squared: float
    sse: float
    sst: float
    n: int
    f_mean: float
    undefined: bool = False


def approx_error(f_x0: float, g_x0: float) -> float:
    """|f(x0) - g(x0)|, the surrogate's error at the explained point."""
    if not (math.isfinite(f_x0) and math.isfinite(g_x0)):
        raise ContractViolation("approx_error requires finite inputs")
    return abs(f_x0 - g_x0)


def r_squared(labels, predictions) -> FidelityReport:
    """1 - SSE/SST over paired label/prediction vectors.

    Constant labels make SST zero; then R^2 is 1 for a perfect fit and the
    -inf sentinel with the undefined flag otherwise.
    """
    f = np.asarray(labels, dtype=np.float64)
    g = np.asarray(predictions, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 1:
        raise ContractViolation("labels and predictions must be equal-length vectors")
    n = f.shape[0]
    if n < 2:
        raise ContractViolation("r_squared requires at least two samples")
    sse = float(np.sum((f - g) ** 2))
    if np.all(f == f[0]):
        # exactly constant labels: SST is 0 by definition, and the rounded
        # mean must not smuggle in a tiny fake variance
        f_mean = float(f[0])
        sst = 0.0
    else:
        f_mean = float(f.mean())
        sst = float(np.sum((f - f_mean) ** 2))
    if sst > 0.0:
        value, undefined = 1.0 - sse / sst, False
    elif sse == 0.0:
        value, undefined = 1.0, False
    else:
        value, undefined = float("-inf"), True
    return FidelityReport(
        err=0.0, r_squared=value, sse=sse, sst=sst, n=n, f_mean=f_mean, undefined=undefined
    )
