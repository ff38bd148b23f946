# SPDX-License-Identifier: Apache-2.0
"""Multi-device inertial pedestrian localization.

The heavy lifting lives in the C++ extension ``suitein._core``; this package
re-exports it and adds small numpy conveniences.
"""

from __future__ import annotations

import numpy as np

from ._core import (
    CheckpointError,
    ConfigError,
    DataError,
    DivergenceError,
    Model,
    ParseError,
    ate,
    config_digest,
    error_cdf,
    gradcheck,
    ingest,
    integrate_trajectory,
    rte,
    simulate,
    train,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "Model",
    "ParseError",
    "ate",
    "config_digest",
    "error_cdf",
    "gradcheck",
    "ingest",
    "integrate_trajectory",
    "predict_trajectory",
    "rte",
    "simulate",
    "train",
]

__version__ = "0.1.0"


def predict_trajectory(model: Model, windows: dict, y0=(0.0, 0.0)):
    """Predicts every window from :func:`ingest` and integrates from ``y0``.

    Returns ``(t, p)``; the last point sits at the end of the last window.
    """
    v = model.predict(windows["X"])
    starts = np.asarray(windows["t_start"], dtype=float)
    last_end = float(starts[-1] + windows["duration"][-1])
    return integrate_trajectory(v, starts, last_end, np.asarray(y0, dtype=float))
