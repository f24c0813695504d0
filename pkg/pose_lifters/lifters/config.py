# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Lifter architecture and training schedule configuration."""

import dataclasses
import json
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

from ..exceptions import DomainError, FormatError
from ..normalize import input_dim

Pairing = Tuple[Tuple[int, int], ...]

# JSON key -> dataclass field, where they differ.
_LIFTER_ALIASES = {"lambda": "loss_lambda"}


@dataclass(frozen=True)
class LifterConfig:
    """Architecture and loss hyperparameters of a lifter network."""

    joint_count: int = 17
    hidden_dim: int = 256
    num_blocks: int = 2
    dropout_p: float = 0.5
    use_loc_scale: bool = True
    use_canonical_depth: bool = True
    depth_scale: float = 1000.0
    loss_lambda: float = 1e3
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    root_index: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        self._check_configuration()

    def _check_configuration(self) -> None:
        if self.joint_count < 2:
            raise DomainError(f"joint_count must be at least 2, got {self.joint_count}.")
        if self.hidden_dim < 8:
            raise DomainError(f"hidden_dim must be at least 8, got {self.hidden_dim}.")
        if self.num_blocks < 0:
            raise DomainError(f"num_blocks must be non-negative, got {self.num_blocks}.")
        if not 0.0 <= self.dropout_p < 1.0:
            raise DomainError(f"dropout_p must lie in [0, 1), got {self.dropout_p}.")
        if not self.loss_lambda > 0:
            raise DomainError(f"lambda must be positive, got {self.loss_lambda}.")
        if not 0.0 < self.bn_momentum <= 1.0:
            raise DomainError(f"bn_momentum must lie in (0, 1], got {self.bn_momentum}.")
        if not self.bn_eps > 0:
            raise DomainError(f"bn_eps must be positive, got {self.bn_eps}.")
        if not self.depth_scale > 0:
            raise DomainError(f"depth_scale must be positive, got {self.depth_scale}.")
        if not 0 <= self.root_index < self.joint_count:
            raise DomainError(f"root_index {self.root_index} out of range.")

    @property
    def input_dim(self) -> int:
        """Return the network input width, 2J+3 or 2J."""
        return input_dim(self.joint_count, self.use_loc_scale)

    @property
    def output_dim(self) -> int:
        """Return the network output width 3J-2."""
        return 3 * self.joint_count - 2

    def architecture(self) -> Tuple:
        """Return the fields a stored network must match to be loaded."""
        return (
            self.joint_count,
            self.hidden_dim,
            self.num_blocks,
            self.use_loc_scale,
            self.use_canonical_depth,
            self.depth_scale,
            self.root_index,
        )

    def replace(self, **changes: Any) -> "LifterConfig":
        """Return a copy with some fields replaced."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Return the JSON object of this config."""
        document = dataclasses.asdict(self)
        document["lambda"] = document.pop("loss_lambda")
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "LifterConfig":
        """Build a config from a JSON object; unknown keys are rejected."""
        return cls(**_fields(cls, document, _LIFTER_ALIASES, "lifter"))


@dataclass(frozen=True)
class TrainingSchedule:
    """Optimization schedule: RMSprop with a single learning-rate drop."""

    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    final_learning_rate: float = 1e-4
    decay_epoch: Optional[int] = None
    rho: float = 0.99
    eps: float = 1e-8
    flip: bool = False
    pairing: Optional[Pairing] = None

    def __post_init__(self) -> None:
        if self.pairing is not None:
            object.__setattr__(
                self, "pairing", tuple((int(a), int(b)) for a, b in self.pairing)
            )
        self._check_configuration()

    def _check_configuration(self) -> None:
        if self.epochs < 1:
            raise DomainError(f"epochs must be positive, got {self.epochs}.")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be positive, got {self.batch_size}.")
        if not (self.learning_rate > 0 and self.final_learning_rate > 0):
            raise DomainError("Learning rates must be positive.")
        if self.decay_epoch is not None and self.decay_epoch < 0:
            raise DomainError(f"decay_epoch must be non-negative, got {self.decay_epoch}.")
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho}.")
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}.")
        if self.flip and self.pairing is None:
            raise DomainError("Flip augmentation needs a left/right pairing table.")

    @property
    def decay_at(self) -> int:
        """Return the last epoch trained at the initial learning rate."""
        if self.decay_epoch is not None:
            return self.decay_epoch
        return (2 * self.epochs) // 3

    def learning_rate_at(self, epoch: int) -> float:
        """Return the learning rate of a 1-based epoch."""
        return self.learning_rate if epoch <= self.decay_at else self.final_learning_rate

    def replace(self, **changes: Any) -> "TrainingSchedule":
        """Return a copy with some fields replaced."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """Return the JSON object of this schedule."""
        document = dataclasses.asdict(self)
        if self.pairing is not None:
            document["pairing"] = [list(pair) for pair in self.pairing]
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "TrainingSchedule":
        """Build a schedule from a JSON object; unknown keys are rejected."""
        return cls(**_fields(cls, document, {}, "schedule"))


def _fields(cls, document: Dict[str, Any], aliases: Dict[str, str], section: str) -> Dict[str, Any]:
    if not isinstance(document, dict):
        raise FormatError(f"The '{section}' section must be a JSON object.")
    names = {f.name for f in dataclasses.fields(cls)}
    fields = {}
    for key, value in document.items():
        name = aliases.get(key, key)
        if name not in names:
            raise FormatError(f"Unknown key '{key}' in the '{section}' section.")
        fields[name] = value
    return fields


def load_config(path: str) -> Tuple[LifterConfig, TrainingSchedule]:
    """Read ``{"lifter": {...}, "schedule": {...}}`` from a JSON file.

    Missing sections and keys take their defaults.

    Raises:
        FormatError: On malformed JSON or unknown keys.
        DomainError: On invalid values.
    """
    with open(path, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as err:
            raise FormatError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(document, dict):
        raise FormatError(f"{path} must hold a JSON object.")
    unknown = set(document) - {"lifter", "schedule"}
    if unknown:
        raise FormatError(f"Unknown config sections {sorted(unknown)} in {path}.")
    return (
        LifterConfig.from_dict(document.get("lifter", {})),
        TrainingSchedule.from_dict(document.get("schedule", {})),
    )
