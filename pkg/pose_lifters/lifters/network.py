# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""The lifter network: weights, forward pass, hand-derived backward pass and weight files.

Structure::

    input (2J+3 or 2J) -> linear -> [residual block] x num_blocks -> linear -> 3J-2

A residual block computes ``x + f(x)`` where ``f`` applies
``linear -> batch norm -> dropout -> ReLU`` twice. Output element 0 is the root
depth; the remaining 3(J-1) are the root-relative joints, root omitted, in joint
order.
"""

import io
import json
import logging
import zipfile
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..exceptions import DomainError, FormatError, UsageError
from ..normalize import NormalizedInput
from ..pose_file import check_version
from .config import LifterConfig
from .layers import (
    BatchNormCache,
    batch_norm_backward,
    batch_norm_forward,
    dropout_backward,
    dropout_forward,
    linear_backward,
    linear_forward,
    relu_backward,
    relu_forward,
)

logger = logging.getLogger(__name__)

WEIGHT_FILE_FORMAT = "pose-lifter-weights"
WEIGHT_FILE_VERSION = "1.0"
RNG_STREAMS = ("init", "shuffle", "dropout", "noise", "flip")
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Return the independent generators a seed expands to, keyed by purpose."""
    children = np.random.SeedSequence(seed).spawn(len(RNG_STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(RNG_STREAMS, children)}


def _layout(config: LifterConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    hidden = config.hidden_dim
    layout = [("input.weight", (hidden, config.input_dim)), ("input.bias", (hidden,))]
    for k in range(config.num_blocks):
        for i in (1, 2):
            prefix = f"blocks.{k}"
            layout += [
                (f"{prefix}.linear{i}.weight", (hidden, hidden)),
                (f"{prefix}.linear{i}.bias", (hidden,)),
                (f"{prefix}.bn{i}.scale", (hidden,)),
                (f"{prefix}.bn{i}.shift", (hidden,)),
                (f"{prefix}.bn{i}.running_mean", (hidden,)),
                (f"{prefix}.bn{i}.running_var", (hidden,)),
            ]
    layout += [("head.weight", (config.output_dim, hidden)), ("head.bias", (config.output_dim,))]
    return layout


def _is_buffer(name: str) -> bool:
    return name.endswith(".running_mean") or name.endswith(".running_var")


class LifterWeights:
    """All parameters and batch-norm running statistics of one network, plus its mode."""

    def __init__(
        self, config: LifterConfig, params: Dict[str, np.ndarray], training: bool = False
    ) -> None:
        """
        Args:
            config: The architecture.
            params: Arrays keyed by parameter name, shapes matching ``config``.
            training: Start in train mode.

        Raises:
            DomainError: If a parameter is missing, unexpected or misshapen.
        """
        layout = _layout(config)
        expected = {name for name, _ in layout}
        unexpected = set(params) - expected
        if unexpected:
            raise DomainError(f"Unexpected parameters {sorted(unexpected)}.")
        self._params: Dict[str, np.ndarray] = OrderedDict()
        for name, shape in layout:
            if name not in params:
                raise DomainError(f"Missing parameter '{name}'.")
            array = np.array(params[name], dtype=np.float64)
            if array.shape != shape:
                raise DomainError(f"Parameter '{name}' has shape {array.shape}, expected {shape}.")
            if name.endswith(".running_var") and np.any(array < 0):
                raise DomainError(f"Running variance '{name}' must be non-negative.")
            self._params[name] = array
        self._config = config
        self._training = training

    @classmethod
    def initialize(cls, config: LifterConfig) -> "LifterWeights":
        """Create freshly initialized weights, deterministic in ``config.seed``.

        Linear weights and biases are uniform in ``±1/sqrt(fan_in)``; batch-norm
        scales start at one, shifts and running means at zero, running variances at one.
        """
        rng = rng_streams(config.seed)["init"]
        params = {}
        for name, shape in _layout(config):
            if name.endswith(".weight"):
                bound = 1.0 / np.sqrt(shape[1])
                params[name] = rng.uniform(-bound, bound, shape)
            elif name.endswith(".bias"):
                fan_in = config.input_dim if name.startswith("input") else config.hidden_dim
                bound = 1.0 / np.sqrt(fan_in)
                params[name] = rng.uniform(-bound, bound, shape)
            elif name.endswith(".scale") or name.endswith(".running_var"):
                params[name] = np.ones(shape)
            else:
                params[name] = np.zeros(shape)
        return cls(config, params)

    @property
    def config(self) -> LifterConfig:
        """return the architecture"""
        return self._config

    @property
    def params(self) -> Dict[str, np.ndarray]:
        """return every array, learnable parameters and running statistics"""
        return self._params

    @property
    def training(self) -> bool:
        """return whether the weights are in train mode"""
        return self._training

    @property
    def mode(self) -> str:
        """return ``"train"`` or ``"eval"``"""
        return "train" if self._training else "eval"

    def train(self) -> "LifterWeights":
        """Switch to train mode."""
        self._training = True
        return self

    def eval(self) -> "LifterWeights":
        """Switch to eval mode."""
        self._training = False
        return self

    def parameter_names(self) -> List[str]:
        """Return the names of the learnable parameters."""
        return [name for name in self._params if not _is_buffer(name)]

    def learnable(self) -> Dict[str, np.ndarray]:
        """Return the learnable arrays themselves (not copies), keyed by name."""
        return OrderedDict((name, self._params[name]) for name in self.parameter_names())

    def copy(self) -> "LifterWeights":
        """Return a deep copy."""
        return LifterWeights(
            self._config, {k: v.copy() for k, v in self._params.items()}, self._training
        )

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]


@dataclass(frozen=True, eq=False)
class LifterOutput:
    """Raw network outputs for a batch, shape ``(N, 3J-2)``."""

    values: np.ndarray
    root_index: int = 0

    @property
    def depth(self) -> np.ndarray:
        """Return the first output: canonical root depth, or metric depth / depth_scale."""
        return self.values[:, 0]

    @property
    def relative_flat(self) -> np.ndarray:
        """Return the 3(J-1) root-relative coordinates, root omitted."""
        return self.values[:, 1:]

    @property
    def relative(self) -> np.ndarray:
        """Return the root-relative pose with the root at the origin, shape ``(N, J, 3)``."""
        count = self.values.shape[0]
        others = self.relative_flat.reshape(count, -1, 3)
        return np.insert(others, self.root_index, 0.0, axis=1)


@dataclass
class BlockCache:
    """Intermediate activations of one residual block."""

    x: np.ndarray
    bn1: BatchNormCache
    mask1: Optional[np.ndarray]
    pre_relu1: np.ndarray
    hidden: np.ndarray
    bn2: BatchNormCache
    mask2: Optional[np.ndarray]
    pre_relu2: np.ndarray


@dataclass
class ForwardCache:
    """Intermediate activations of a full forward pass."""

    inputs: np.ndarray
    blocks: List[BlockCache] = field(default_factory=list)
    head_input: Optional[np.ndarray] = None


def residual_block(
    x: np.ndarray,
    weights: LifterWeights,
    k: int,
    training: bool,
    rng: Optional[np.random.Generator] = None,
    update_running_stats: bool = True,
    bn_training: Optional[bool] = None,
) -> Tuple[np.ndarray, BlockCache]:
    """Apply block ``k``: ``x + f(x)``.

    ``training`` switches dropout; ``bn_training`` switches batch norm between batch
    and running statistics and follows ``training`` unless given.

    Raises:
        DomainError: If ``x`` does not have ``hidden_dim`` features.
    """
    config = weights.config
    bn_training = training if bn_training is None else bn_training
    if x.shape[-1] != config.hidden_dim:
        raise DomainError(f"Block input has {x.shape[-1]} features, expected {config.hidden_dim}.")
    p = f"blocks.{k}"
    stages = []
    h = x
    for i in (1, 2):
        a = linear_forward(h, weights[f"{p}.linear{i}.weight"], weights[f"{p}.linear{i}.bias"])
        b, bn_cache = batch_norm_forward(
            a,
            weights[f"{p}.bn{i}.scale"],
            weights[f"{p}.bn{i}.shift"],
            weights[f"{p}.bn{i}.running_mean"],
            weights[f"{p}.bn{i}.running_var"],
            bn_training,
            config.bn_momentum,
            config.bn_eps,
            update_running_stats,
        )
        d, mask = dropout_forward(b, config.dropout_p, training, rng)
        stages.append((h, bn_cache, mask, d))
        h = relu_forward(d)
    (_, bn1, mask1, d1), (hidden, bn2, mask2, d2) = stages
    return x + h, BlockCache(x, bn1, mask1, d1, hidden, bn2, mask2, d2)


def _residual_block_backward(
    grad_y: np.ndarray, cache: BlockCache, weights: LifterWeights, k: int, grads: Dict
) -> np.ndarray:
    p = f"blocks.{k}"
    grad = relu_backward(grad_y, cache.pre_relu2)
    grad = dropout_backward(grad, cache.mask2)
    grad, grads[f"{p}.bn2.scale"], grads[f"{p}.bn2.shift"] = batch_norm_backward(grad, cache.bn2)
    grad, grads[f"{p}.linear2.weight"], grads[f"{p}.linear2.bias"] = linear_backward(
        grad, cache.hidden, weights[f"{p}.linear2.weight"]
    )
    grad = relu_backward(grad, cache.pre_relu1)
    grad = dropout_backward(grad, cache.mask1)
    grad, grads[f"{p}.bn1.scale"], grads[f"{p}.bn1.shift"] = batch_norm_backward(grad, cache.bn1)
    grad, grads[f"{p}.linear1.weight"], grads[f"{p}.linear1.bias"] = linear_backward(
        grad, cache.x, weights[f"{p}.linear1.weight"]
    )
    return grad_y + grad


def forward(
    inputs: Union[np.ndarray, NormalizedInput],
    weights: LifterWeights,
    training: Optional[bool] = None,
    rng: Optional[np.random.Generator] = None,
    update_running_stats: bool = True,
    bn_training: Optional[bool] = None,
) -> Tuple[LifterOutput, ForwardCache]:
    """Run the network on a batch of normalized inputs.

    Args:
        inputs: Network inputs of shape ``(N, D)`` or ``(D,)``, or one
            :class:`NormalizedInput`.
        weights: The network.
        training: Train or eval mode; defaults to the mode of ``weights``.
        rng: Dropout generator, required in train mode when dropout is enabled.
        update_running_stats: Whether train mode updates batch-norm running statistics.
        bn_training: Batch-norm mode when it should differ from ``training``; ``False``
            keeps the running statistics while dropout stays active.

    Returns:
        The outputs and the activation cache for :func:`backward`.

    Raises:
        DomainError: If the input width does not match the configuration.
        UsageError: If train-mode dropout has no generator.
    """
    config = weights.config
    if isinstance(inputs, NormalizedInput):
        inputs = inputs.to_vector(config.use_loc_scale)
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise DomainError(f"Network input must have width {config.input_dim}, got shape {x.shape}.")
    training = weights.training if training is None else training

    cache = ForwardCache(inputs=x)
    h = linear_forward(x, weights["input.weight"], weights["input.bias"])
    for k in range(config.num_blocks):
        h, block_cache = residual_block(h, weights, k, training, rng, update_running_stats, bn_training)
        cache.blocks.append(block_cache)
    cache.head_input = h
    values = linear_forward(h, weights["head.weight"], weights["head.bias"])
    return LifterOutput(values, config.root_index), cache


def backward(
    cache: Optional[ForwardCache], grad_output: np.ndarray, weights: LifterWeights
) -> Dict[str, np.ndarray]:
    """Back-propagate an output gradient through a cached forward pass.

    Batch-norm layers differentiate through the statistics the forward pass used, so
    an eval-mode cache gives the gradient of the eval-mode network.

    Args:
        cache: The cache returned by :func:`forward`.
        grad_output: The loss gradient with respect to the outputs, ``(N, 3J-2)``.
        weights: The weights the forward pass used.

    Returns:
        Gradients keyed by learnable parameter name.

    Raises:
        UsageError: If there is no cache.
    """
    if cache is None or cache.head_input is None:
        raise UsageError("backward needs the cache of a completed forward pass.")
    grads: Dict[str, np.ndarray] = {}
    grad, grads["head.weight"], grads["head.bias"] = linear_backward(
        grad_output, cache.head_input, weights["head.weight"]
    )
    for k in reversed(range(weights.config.num_blocks)):
        grad = _residual_block_backward(grad, cache.blocks[k], weights, k, grads)
    _, grads["input.weight"], grads["input.bias"] = linear_backward(
        grad, cache.inputs, weights["input.weight"]
    )
    return OrderedDict((name, grads[name]) for name in weights.parameter_names())


def predict(inputs: np.ndarray, weights: LifterWeights, batch_size: int = 4096) -> LifterOutput:
    """Eval-mode forward over a large input matrix in chunks."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    chunks = [
        forward(inputs[start : start + batch_size], weights, training=False)[0].values
        for start in range(0, inputs.shape[0], batch_size)
    ]
    values = np.concatenate(chunks) if chunks else np.zeros((0, weights.config.output_dim))
    return LifterOutput(values, weights.config.root_index)


def _zip_entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_weights(weights: LifterWeights, path: str) -> None:
    """Write a weight file.

    The file is a zip archive readable by ``numpy.load``: ``header.json`` holds the
    format version, the config echo and the layer list; each array is stored as
    ``<name>.npy`` in row-major order. Equal weights give equal bytes.
    """
    header = {
        "format": WEIGHT_FILE_FORMAT,
        "version": WEIGHT_FILE_VERSION,
        "config": weights.config.to_dict(),
        "layers": [{"name": n, "shape": list(a.shape)} for n, a in weights.params.items()],
    }
    with zipfile.ZipFile(path, "w") as archive:
        archive.writestr(_zip_entry("header.json"), json.dumps(header, sort_keys=True))
        for name, array in weights.params.items():
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.ascontiguousarray(array), allow_pickle=False)
            archive.writestr(_zip_entry(f"{name}.npy"), buffer.getvalue())
    logger.info("Wrote %d arrays to %s", len(weights.params), path)


def load_weights(path: str, expected_config: Optional[LifterConfig] = None) -> LifterWeights:
    """Read a weight file written by :func:`save_weights`, in eval mode.

    Args:
        path: The weight file.
        expected_config: If given, the stored architecture must match it.

    Raises:
        FormatError: If the file is not a weight file, its version is unsupported or
            its architecture or layer list does not match.
    """
    try:
        with zipfile.ZipFile(path, "r") as archive:
            header = json.loads(archive.read("header.json"))
            if header.get("format") != WEIGHT_FILE_FORMAT:
                raise FormatError(f"{path} is not a lifter weight file.")
            check_version(header.get("version"), WEIGHT_FILE_VERSION, "weight file")
            config = LifterConfig.from_dict(header["config"])
            params = {}
            for layer in header["layers"]:
                array = np.lib.format.read_array(
                    io.BytesIO(archive.read(f"{layer['name']}.npy")), allow_pickle=False
                )
                if list(array.shape) != layer["shape"]:
                    raise FormatError(f"Layer '{layer['name']}' does not match its declared shape.")
                params[layer["name"]] = array
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as err:
        raise FormatError(f"{path} is not a valid weight file: {err}") from err
    if expected_config is not None and expected_config.architecture() != config.architecture():
        raise FormatError(
            f"Weight file architecture {config.architecture()} does not match the "
            f"configured {expected_config.architecture()}."
        )
    try:
        return LifterWeights(config, params, training=False)
    except DomainError as err:
        raise FormatError(f"{path}: {err}") from err
