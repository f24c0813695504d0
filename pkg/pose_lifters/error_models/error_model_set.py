# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Per-joint error models and 2D pose perturbation."""

import json
import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..exceptions import DomainError, FormatError
from ..normalize import Pose2D
from ..pose_file import check_version
from .mixture import (
    DEFAULT_SUPPORT,
    MixtureErrorParams,
    MixtureFitResult,
    fit_em,
    fit_single_gaussian,
    init_params,
    nll,
    sample,
)

logger = logging.getLogger(__name__)

ERROR_MODEL_VERSION = "1.0"
MODEL_KINDS = ("mixture", "gaussian")


class ErrorModelSet:
    """One error model per joint, sharing a uniform support.

    Examples:

        errors = predicted_2d - ground_truth_2d      # shape (N, J, 2)
        models = ErrorModelSet.fit(errors, support=50.0)
        noisy = models.perturb(clean_poses, np.random.default_rng(0))
    """

    def __init__(
        self,
        per_joint: Sequence[MixtureErrorParams],
        kind: str = "mixture",
        fit_results: Optional[List[Optional[MixtureFitResult]]] = None,
    ) -> None:
        """
        Args:
            per_joint: The error model of every joint, in joint order.
            kind: ``"mixture"`` or ``"gaussian"``, recorded in serialized files.
            fit_results: The EM results the models came from, if fitted here.
        """
        if len(per_joint) == 0:
            raise DomainError("An error model set needs at least one joint.")
        supports = {p.support for p in per_joint}
        if len(supports) != 1:
            raise DomainError(f"All joints must share one uniform support, got {sorted(supports)}.")
        if kind not in MODEL_KINDS:
            raise DomainError(f"Unknown error model kind '{kind}'.")
        self._per_joint = list(per_joint)
        self._kind = kind
        self._fit_results = fit_results

    @property
    def per_joint(self) -> List[MixtureErrorParams]:
        """Return the per-joint parameters."""
        return self._per_joint

    @property
    def joint_count(self) -> int:
        """Return the number of joints J."""
        return len(self._per_joint)

    @property
    def support(self) -> float:
        """Return the shared uniform support half-width in pixels."""
        return self._per_joint[0].support

    @property
    def kind(self) -> str:
        """Return the model family, mixture or single Gaussian."""
        return self._kind

    @property
    def fit_results(self) -> Optional[List[Optional[MixtureFitResult]]]:
        """Return the EM fit results when the set was produced by :meth:`fit`."""
        return self._fit_results

    def __getitem__(self, joint: int) -> MixtureErrorParams:
        return self._per_joint[joint]

    def __len__(self) -> int:
        return len(self._per_joint)

    @classmethod
    def fit(
        cls,
        errors: np.ndarray,
        support: float = DEFAULT_SUPPORT,
        pooled: bool = False,
        kind: str = "mixture",
        max_iters: int = 200,
        tol: float = 1e-6,
    ) -> "ErrorModelSet":
        """Fit error models to detection errors.

        Args:
            errors: Errors (prediction minus ground truth) of shape ``(N, J, 2)``.
            support: Half-width of the uniform component in pixels.
            pooled: Fit one model on the errors of all joints and share it.
            kind: ``"mixture"`` fits by EM; ``"gaussian"`` fits a single Gaussian.
            max_iters: EM iteration limit.
            tol: EM convergence tolerance on the NLL.

        Returns:
            The fitted set.

        Raises:
            DomainError: If the errors are malformed or degenerate.
        """
        errors = np.asarray(errors, dtype=np.float64)
        if errors.ndim != 3 or errors.shape[2] != 2:
            raise DomainError(f"Errors must have shape (N, J, 2), got {errors.shape}.")
        if kind not in MODEL_KINDS:
            raise DomainError(f"Unknown error model kind '{kind}'.")
        joint_count = errors.shape[1]

        def fit_one(data: np.ndarray, label: str):
            try:
                if kind == "gaussian":
                    return fit_single_gaussian(data, support), None
                result = fit_em(data, init_params(data, support), max_iters=max_iters, tol=tol)
                return result.params, result
            except DomainError as err:
                raise DomainError(f"{label}: {err}") from err

        if pooled:
            params, result = fit_one(errors.reshape(-1, 2), "pooled joints")
            return cls([params] * joint_count, kind=kind, fit_results=[result] * joint_count)

        per_joint, results = [], []
        for joint in range(joint_count):
            params, result = fit_one(errors[:, joint], f"joint {joint}")
            per_joint.append(params)
            results.append(result)
        return cls(per_joint, kind=kind, fit_results=results)

    def nll(self, errors: np.ndarray) -> np.ndarray:
        """Return the per-joint negative log likelihood of errors of shape ``(N, J, 2)``."""
        errors = np.asarray(errors, dtype=np.float64)
        self._check_joint_count(errors.shape[1])
        return np.array([nll(errors[:, j], p) for j, p in enumerate(self._per_joint)])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` independent error poses, shape ``(count, J, 2)``."""
        draws = [sample(params, rng, count) for params in self._per_joint]
        return np.stack(draws, axis=1).reshape(count, self.joint_count, 2)

    def perturb(self, poses2d: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Displace every joint of a batch of poses by an independent error draw."""
        poses2d = np.asarray(poses2d, dtype=np.float64)
        if poses2d.ndim != 3 or poses2d.shape[2] != 2:
            raise DomainError(f"Poses must have shape (N, J, 2), got {poses2d.shape}.")
        self._check_joint_count(poses2d.shape[1])
        return poses2d + self.sample(rng, poses2d.shape[0])

    def _check_joint_count(self, joint_count: int) -> None:
        if joint_count != self.joint_count:
            raise DomainError(
                f"Pose has {joint_count} joints but the error model covers {self.joint_count}."
            )

    def to_dict(self) -> Dict:
        """Return the versioned JSON document of this set."""
        return {
            "version": ERROR_MODEL_VERSION,
            "kind": self._kind,
            "joint_count": self.joint_count,
            "support": self.support,
            "per_joint": [
                {"gamma": p.gamma, "mu": p.mu.tolist(), "sigma": p.sigma.tolist()}
                for p in self._per_joint
            ],
        }

    @classmethod
    def from_dict(cls, document: Dict) -> "ErrorModelSet":
        """Build a set from its JSON document.

        Raises:
            FormatError: On a missing field, version mismatch or inconsistent joint count.
        """
        try:
            check_version(document["version"], ERROR_MODEL_VERSION, "error model")
            support = float(document["support"])
            per_joint = [
                MixtureErrorParams(
                    gamma=entry["gamma"], mu=entry["mu"], sigma=entry["sigma"], support=support
                )
                for entry in document["per_joint"]
            ]
            joint_count = int(document["joint_count"])
        except KeyError as err:
            raise FormatError(f"Error model document is missing field {err}.") from err
        if joint_count != len(per_joint):
            raise FormatError(
                f"Error model declares {joint_count} joints but lists {len(per_joint)}."
            )
        return cls(per_joint, kind=document.get("kind", "mixture"))

    def save(self, path: str) -> None:
        """Write the set as JSON."""
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2)
            handle.write("\n")
        logger.info("Wrote %d-joint %s error model to %s", self.joint_count, self._kind, path)

    @classmethod
    def load(cls, path: str) -> "ErrorModelSet":
        """Read a set written by :meth:`save`."""
        with open(path, "r", encoding="utf-8") as handle:
            try:
                document = json.load(handle)
            except json.JSONDecodeError as err:
                raise FormatError(f"{path} is not valid JSON: {err}") from err
        return cls.from_dict(document)


def perturb_pose(
    pose: Union[Pose2D, np.ndarray], models: ErrorModelSet, rng: np.random.Generator
) -> Pose2D:
    """Displace each joint of one pose by an independent draw from its error model.

    Raises:
        DomainError: If the joint count of the pose and the models differ.
    """
    joints = pose.joints if isinstance(pose, Pose2D) else np.asarray(pose, dtype=np.float64)
    return Pose2D(models.perturb(joints[None], rng)[0])


def perturb_poses(
    poses2d: np.ndarray, models: ErrorModelSet, rng: np.random.Generator
) -> np.ndarray:
    """Batched :func:`perturb_pose` for poses of shape ``(N, J, 2)``."""
    return models.perturb(poses2d, rng)
