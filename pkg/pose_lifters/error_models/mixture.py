# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

r"""Gaussian plus uniform mixture model of 2D joint detection error.

For an error vector :math:`e = (e_x, e_y)` the density is

.. math::

    p(e) = \gamma \, \mathcal{N}(e; \mu, \mathrm{diag}(\sigma_x^2, \sigma_y^2))
           + (1 - \gamma) \frac{1}{v} [e \in B],

where :math:`B = [-s, s]^2` is the support box of the uniform outlier component and
:math:`v = (2s)^2` its area. The Gaussian part explains inlier jitter; the uniform part
explains inversions and misses.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from ..exceptions import DomainError

logger = logging.getLogger(__name__)

DEFAULT_SUPPORT = 50.0
INITIAL_GAMMA = 0.9


@dataclass(frozen=True, eq=False)
class MixtureErrorParams:
    """Parameters of one joint's error mixture."""

    gamma: float
    mu: np.ndarray
    sigma: np.ndarray
    support: float = DEFAULT_SUPPORT

    def __post_init__(self) -> None:
        gamma = float(self.gamma)
        mu = np.array(self.mu, dtype=np.float64).reshape(2)
        sigma = np.array(self.sigma, dtype=np.float64).reshape(2)
        support = float(self.support)
        if not 0.0 <= gamma <= 1.0:
            raise DomainError(f"Mixing weight gamma must lie in [0, 1], got {gamma}.")
        if not np.all(np.isfinite(mu)):
            raise DomainError("Mixture mean must be finite.")
        if not np.all(sigma > 0) or not np.all(np.isfinite(sigma)):
            raise DomainError(f"Mixture standard deviations must be positive, got {sigma}.")
        if not support > 0:
            raise DomainError(f"Uniform support half-width must be positive, got {support}.")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "support", support)

    @property
    def v(self) -> float:
        """Return the normalization constant (area) of the uniform component."""
        return (2.0 * self.support) ** 2

    def replace(self, **changes) -> "MixtureErrorParams":
        """Return a copy with some fields replaced."""
        fields = {
            "gamma": self.gamma,
            "mu": self.mu,
            "sigma": self.sigma,
            "support": self.support,
        }
        fields.update(changes)
        return MixtureErrorParams(**fields)


class MixtureFitResult:
    """The outcome of an EM fit."""

    def __init__(
        self,
        params: MixtureErrorParams,
        nll_history: List[float],
        converged: bool,
        degenerate: bool = False,
    ) -> None:
        self._params = params
        self._nll_history = nll_history
        self._converged = converged
        self._degenerate = degenerate

    @property
    def params(self) -> MixtureErrorParams:
        """return the fitted parameters"""
        return self._params

    @property
    def nll_history(self) -> List[float]:
        """return the negative log likelihood before the first and after every iteration"""
        return self._nll_history

    @property
    def iterations(self) -> int:
        """return the number of EM iterations performed"""
        return len(self._nll_history) - 1

    @property
    def converged(self) -> bool:
        """return whether the NLL improvement fell below the tolerance"""
        return self._converged

    @property
    def degenerate(self) -> bool:
        """return whether the Gaussian component lost all responsibility mass"""
        return self._degenerate

    @property
    def nll(self) -> float:
        """return the final negative log likelihood"""
        return self._nll_history[-1]


def _as_errors(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.shape[-1] != 2:
        raise DomainError(f"Errors must be 2D vectors, got shape {e.shape}.")
    return e


def _log_components(e: np.ndarray, params: MixtureErrorParams) -> Tuple[np.ndarray, np.ndarray]:
    """Return the weighted log densities of the Gaussian and uniform components."""
    with np.errstate(divide="ignore"):
        log_gamma = np.log(params.gamma)
        log_rest = np.log1p(-params.gamma) - np.log(params.v)
    log_gauss = (
        log_gamma
        + norm.logpdf(e[..., 0], loc=params.mu[0], scale=params.sigma[0])
        + norm.logpdf(e[..., 1], loc=params.mu[1], scale=params.sigma[1])
    )
    inside = np.all(np.abs(e) <= params.support, axis=-1)
    log_uniform = np.where(inside, log_rest, -np.inf)
    return log_gauss, log_uniform


def log_pdf(e: np.ndarray, params: MixtureErrorParams) -> Union[float, np.ndarray]:
    """Return the log density of one error vector or an array of shape ``(..., 2)``."""
    e = _as_errors(e)
    log_gauss, log_uniform = _log_components(e, params)
    result = np.logaddexp(log_gauss, log_uniform)
    return float(result) if result.ndim == 0 else result


def pdf(e: np.ndarray, params: MixtureErrorParams) -> Union[float, np.ndarray]:
    """Return the mixture density of one error vector or an array of shape ``(..., 2)``.

    The uniform component contributes only inside the support box.
    """
    return np.exp(log_pdf(e, params))


def marginal_pdf(
    x: np.ndarray, params: MixtureErrorParams, axis: int = 0
) -> Union[float, np.ndarray]:
    """Return the 1D marginal density of the mixture along one image axis.

    Args:
        x: Error values along the axis.
        params: The mixture parameters.
        axis: 0 for x errors, 1 for y errors.

    Returns:
        The marginal density at ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    gauss = norm.pdf(x, loc=params.mu[axis], scale=params.sigma[axis])
    uniform = np.where(np.abs(x) <= params.support, 1.0 / (2.0 * params.support), 0.0)
    result = params.gamma * gauss + (1.0 - params.gamma) * uniform
    return float(result) if result.ndim == 0 else result


def nll(data: np.ndarray, params: MixtureErrorParams) -> float:
    """Return the negative log likelihood of a set of errors.

    Args:
        data: Errors of shape ``(N, 2)``.
        params: The mixture parameters.

    Returns:
        ``-sum_i log p(e_i)``.

    Raises:
        DomainError: If ``data`` is empty or some datum has zero density.
    """
    data = _as_errors(data).reshape(-1, 2)
    if data.shape[0] == 0:
        raise DomainError("Cannot evaluate the likelihood of an empty data set.")
    log_density = log_pdf(data, params)
    bad = np.flatnonzero(~np.isfinite(log_density))
    if bad.size:
        raise DomainError(
            f"Datum {int(bad[0])} ({data[bad[0]].tolist()}) has zero density under the model."
        )
    return float(-np.sum(log_density))


def _moments(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    data = _as_errors(data).reshape(-1, 2)
    if data.shape[0] < 2:
        raise DomainError("At least two error samples are needed to fit a Gaussian.")
    mu = data.mean(axis=0)
    sigma = data.std(axis=0)
    if np.any(sigma <= 0):
        raise DomainError(
            f"Error data has zero variance along axis {int(np.argmin(sigma))}; "
            "cannot fit an error model."
        )
    return mu, sigma


def init_params(data: np.ndarray, support: float = DEFAULT_SUPPORT) -> MixtureErrorParams:
    """Initialize a mixture from a single Gaussian fitted to all data, with gamma = 0.9.

    Raises:
        DomainError: If fewer than two samples are given or an axis has zero variance.
    """
    mu, sigma = _moments(data)
    return MixtureErrorParams(gamma=INITIAL_GAMMA, mu=mu, sigma=sigma, support=support)


def fit_single_gaussian(data: np.ndarray, support: float = DEFAULT_SUPPORT) -> MixtureErrorParams:
    """Fit a single Gaussian error model, expressed as a mixture with gamma = 1."""
    mu, sigma = _moments(data)
    return MixtureErrorParams(gamma=1.0, mu=mu, sigma=sigma, support=support)


def responsibilities(data: np.ndarray, params: MixtureErrorParams) -> np.ndarray:
    """Return the posterior probability that each datum came from the Gaussian component."""
    data = _as_errors(data).reshape(-1, 2)
    log_gauss, log_uniform = _log_components(data, params)
    log_total = logsumexp(np.stack([log_gauss, log_uniform]), axis=0)
    with np.errstate(invalid="ignore"):
        resp = np.exp(log_gauss - log_total)
    return np.nan_to_num(resp, nan=0.0)


def fit_em(
    data: np.ndarray,
    init: MixtureErrorParams,
    max_iters: int = 200,
    tol: float = 1e-6,
) -> MixtureFitResult:
    """Fit the mixture by expectation maximization.

    The uniform normalization constant ``v`` stays fixed; gamma, mu and sigma are
    re-estimated. Iteration stops once the NLL improves by less than ``tol`` or after
    ``max_iters`` iterations.

    Args:
        data: Errors of shape ``(N, 2)``.
        init: The starting parameters, usually from :func:`init_params`.
        max_iters: Maximum number of EM iterations.
        tol: Absolute NLL improvement below which the fit is converged.

    Returns:
        The fit result. If the Gaussian component loses all responsibility mass the
        result is flagged ``degenerate`` with gamma set to zero.
    """
    data = _as_errors(data).reshape(-1, 2)
    if data.shape[0] == 0:
        raise DomainError("Cannot fit an error model to an empty data set.")
    params = init
    current = nll(data, params)
    history = [current]
    converged = False
    degenerate = False

    for iteration in range(max_iters):
        resp = responsibilities(data, params)
        mass = float(resp.sum())
        if not mass > 0:
            logger.info("EM degenerate at iteration %d: no data explained by the Gaussian", iteration)
            params = params.replace(gamma=0.0)
            degenerate = True
            converged = True
            break
        mu = resp @ data / mass
        var = resp @ (data - mu) ** 2 / mass
        if not np.all(var > 0):
            logger.info("EM degenerate at iteration %d: Gaussian variance collapsed", iteration)
            degenerate = True
            break
        candidate = MixtureErrorParams(
            gamma=min(1.0, mass / data.shape[0]), mu=mu, sigma=np.sqrt(var), support=params.support
        )
        updated = nll(data, candidate)
        logger.debug("EM iteration %d: nll=%.10g gamma=%.6f", iteration, updated, candidate.gamma)
        if updated > current + 1e-9 * max(1.0, abs(current)):
            logger.warning("EM NLL increased from %.12g to %.12g", current, updated)
        params = candidate
        history.append(updated)
        if current - updated < tol:
            converged = True
            break
        current = updated

    logger.info(
        "EM finished after %d iterations: gamma=%.4f mu=%s sigma=%s nll=%.6g",
        len(history) - 1,
        params.gamma,
        np.round(params.mu, 4).tolist(),
        np.round(params.sigma, 4).tolist(),
        history[-1],
    )
    return MixtureFitResult(params, history, converged=converged, degenerate=degenerate)


def sample(
    params: MixtureErrorParams,
    rng: np.random.Generator,
    size: Optional[Union[int, Tuple[int, ...]]] = None,
) -> np.ndarray:
    """Draw errors from the mixture.

    With probability gamma a draw comes from the Gaussian, otherwise uniformly from the
    support box. Every call consumes the same amount of randomness for a given size.

    Args:
        params: The mixture parameters.
        rng: The random generator.
        size: Number (or shape) of draws; ``None`` draws a single 2D error.

    Returns:
        Errors of shape ``size + (2,)``.
    """
    shape: Tuple[int, ...] = () if size is None else tuple(np.atleast_1d(size).tolist())
    from_gaussian = np.asarray(rng.random(shape) < params.gamma)
    gaussian = rng.normal(params.mu, params.sigma, shape + (2,))
    uniform = rng.uniform(-params.support, params.support, shape + (2,))
    return np.where(from_gaussian[..., None], gaussian, uniform)
