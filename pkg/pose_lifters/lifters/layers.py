# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Forward and backward passes of the layers the lifter is built from.

Activations are row-major batches of shape ``(N, features)``. Linear weights have
shape ``(out_features, in_features)``.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..exceptions import UsageError


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Return ``x @ weight.T + bias``."""
    return x @ weight.T + bias


def linear_backward(
    grad_y: np.ndarray, x: np.ndarray, weight: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the gradients with respect to the input, weight and bias."""
    return grad_y @ weight, grad_y.T @ x, grad_y.sum(axis=0)


@dataclass
class BatchNormCache:
    """What the batch-norm backward pass needs from its forward pass."""

    normalized: np.ndarray
    inv_std: np.ndarray
    scale: np.ndarray
    training: bool


def batch_norm_forward(
    x: np.ndarray,
    scale: np.ndarray,
    shift: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float,
    eps: float,
    update_running_stats: bool = True,
) -> Tuple[np.ndarray, BatchNormCache]:
    """Normalize features with batch statistics (train) or running statistics (eval).

    In train mode the running statistics are updated in place with the biased batch
    mean and the unbiased batch variance, unless ``update_running_stats`` is false.

    Returns:
        The output and the cache for :func:`batch_norm_backward`.
    """
    if training:
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        if update_running_stats:
            count = x.shape[0]
            unbiased = var * count / (count - 1) if count > 1 else var
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = (x - mean) * inv_std
    return normalized * scale + shift, BatchNormCache(normalized, inv_std, scale, training)


def batch_norm_backward(
    grad_y: np.ndarray, cache: BatchNormCache
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the gradients with respect to the input, scale and shift."""
    grad_scale = np.sum(grad_y * cache.normalized, axis=0)
    grad_shift = grad_y.sum(axis=0)
    grad_norm = grad_y * cache.scale
    if not cache.training:
        return grad_norm * cache.inv_std, grad_scale, grad_shift
    count = grad_y.shape[0]
    grad_x = (
        cache.inv_std
        / count
        * (
            count * grad_norm
            - grad_norm.sum(axis=0)
            - cache.normalized * np.sum(grad_norm * cache.normalized, axis=0)
        )
    )
    return grad_x, grad_scale, grad_shift


def dropout_forward(
    x: np.ndarray, p: float, training: bool, rng: Optional[np.random.Generator]
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout: zero each unit with probability ``p`` and rescale the rest.

    Returns:
        The output and the scaled keep mask (``None`` when dropout is inactive).

    Raises:
        UsageError: If dropout is active and no generator is given.
    """
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise UsageError("Train-mode dropout needs a random generator.")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(grad_y: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    """Route the gradient through the kept units."""
    return grad_y if mask is None else grad_y * mask


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Return ``max(x, 0)``."""
    return np.maximum(x, 0.0)


def relu_backward(grad_y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pass the gradient where the input was positive."""
    return grad_y * (x > 0)
