"""Strong-scaling power-law fit and the maximum-speedup prediction.

Walltime against compute nodes is fitted as t = exp(a) * n**(-x) by
ordinary least squares in log space (a straight line on a log-log plot).
The fitted exponent converts an initial load imbalance into the best
speedup perfect balancing could deliver: S = (1/E0)**x, where E0 is the
initial load-balance efficiency.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalingModel:
    """Fitted exponent x, log-space intercept, and RMS log residual."""

    exponent: float
    log_intercept: float
    residual: float

    def predict(self, nodes: float) -> float:
        return math.exp(self.log_intercept) * nodes ** (-self.exponent)


def fit_scaling(points) -> ScalingModel:
    """Least-squares fit of log(t) = a - x*log(n) over (nodes, walltime) pairs."""
    pts = [(float(n), float(t)) for n, t in points]
    if len(pts) < 2:
        raise ValueError(f"need at least 2 scaling points, got {len(pts)}")
    nodes = np.array([p[0] for p in pts])
    times = np.array([p[1] for p in pts])
    if (nodes <= 0).any() or (times <= 0).any():
        raise ValueError("node counts and walltimes must be positive")
    log_n = np.log(nodes)
    log_t = np.log(times)
    design = np.column_stack((np.ones_like(log_n), -log_n))
    coef, *_ = np.linalg.lstsq(design, log_t, rcond=None)
    intercept, exponent = float(coef[0]), float(coef[1])
    resid = log_t - design @ coef
    residual = float(np.sqrt(np.mean(resid * resid)))
    if not 0.0 <= exponent <= 1.2:
        warnings.warn(
            f"fitted scaling exponent {exponent:.3f} outside the sane band "
            "[0, 1.2]", stacklevel=2)
    return ScalingModel(exponent=exponent, log_intercept=intercept,
                        residual=residual)


def max_speedup(e0: float, x: float) -> float:
    """Best speedup perfect balancing can reach: (1/E0)**x."""
    if not 0.0 < e0 <= 1.0:
        raise ValueError(f"initial efficiency must be in (0, 1], got {e0}")
    if x < 0:
        raise ValueError(f"scaling exponent must be >= 0, got {x}")
    return (1.0 / e0) ** x

def achieved_fraction(measured_speedup: float, predicted: float) -> float:
    """How much of the predicted speedup limit a measured speedup attained."""
    if measured_speedup <= 0 or predicted <= 0:
        raise ValueError("speedups must be positive")
    return measured_speedup / predicted


# Fitted exponents for the reference application in the two geometries it
# ships; configuration data, not derivable here.
EXPONENT_PRESETS = {
    "2d3v": 0.91,
    "3d3v": 0.88,
}
