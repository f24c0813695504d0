# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""RMSprop."""

from typing import Dict, Tuple

import numpy as np


def rmsprop_step(
    param: np.ndarray,
    grad: np.ndarray,
    square_avg: np.ndarray,
    lr: float,
    rho: float = 0.99,
    eps: float = 1e-8,
) -> Tuple[np.ndarray, np.ndarray]:
    """One RMSprop update.

    ``v <- rho * v + (1 - rho) * g**2`` then ``theta <- theta - lr * g / (sqrt(v) + eps)``.

    Returns:
        The updated parameter and squared-gradient average, as new arrays.
    """
    square_avg = rho * square_avg + (1.0 - rho) * grad * grad
    return param - lr * grad / (np.sqrt(square_avg) + eps), square_avg


class RMSprop:
    """RMSprop over a dict of named arrays, updated in place."""

    def __init__(
        self, params: Dict[str, np.ndarray], lr: float = 1e-3, rho: float = 0.99, eps: float = 1e-8
    ) -> None:
        self._params = params
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self._square_avg = {name: np.zeros_like(array) for name, array in params.items()}

    @property
    def state(self) -> Dict[str, np.ndarray]:
        """return the running squared-gradient averages"""
        return self._square_avg

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        """Update every parameter that has a gradient."""
        for name, grad in grads.items():
            param = self._params[name]
            updated, self._square_avg[name] = rmsprop_step(
                param, grad, self._square_avg[name], self.lr, self.rho, self.eps
            )
            param[...] = updated
