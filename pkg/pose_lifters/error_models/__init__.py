# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Error models of 2D joint detections."""

from .mixture import (
    DEFAULT_SUPPORT,
    MixtureErrorParams,
    MixtureFitResult,
    fit_em,
    fit_single_gaussian,
    init_params,
    log_pdf,
    marginal_pdf,
    nll,
    pdf,
    responsibilities,
    sample,
)
from .error_model_set import ErrorModelSet, perturb_pose, perturb_poses

__all__ = [
    "DEFAULT_SUPPORT",
    "MixtureErrorParams",
    "MixtureFitResult",
    "fit_em",
    "fit_single_gaussian",
    "init_params",
    "log_pdf",
    "marginal_pdf",
    "nll",
    "pdf",
    "responsibilities",
    "sample",
    "ErrorModelSet",
    "perturb_pose",
    "perturb_poses",
]
