# Copyright 2024 DeepElastica Contributors

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at

#      http://www.apache.org/licenses/LICENSE-2.0

# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""U-nets and gated U-nets used as a deep image prior.

A network maps the two-channel input (noise-filled masked image, mask) to a one-channel
candidate image. The encoder applies `convs_per_scale` convolutions per scale, separated by
stride-2 convolutions. The decoder upsamples by nearest-neighbour replication followed by a
convolution, concatenates the encoder features of the same scale and convolves again. A
1x1 convolution with a sigmoid produces the output.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np

from deepelastica.tensor import (Tensor, as_tensor, concat, conv2d, leaky_relu, resample,
                                 sigmoid)

logger = logging.getLogger(__name__)

VARIANTS = ("unet", "gated-unet")

ParamDict = Mapping[str, Union[Tensor, np.ndarray]]


class LayerSpec(NamedTuple):
    """One convolutional layer of a network"""
    name: str
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    dilation: int = 1
    gated: bool = False
    head: bool = False

    def parameter_count(self) -> int:
        n = self.out_channels * self.in_channels * self.kernel_size ** 2 + self.out_channels
        return 2 * n if self.gated else n


@dataclass(frozen=True)
class NetworkSpec:
    """
    Architecture of a deep-image-prior network.

    Parameters
    ----------
    variant : str
        "unet", or "gated-unet" where every convolution followed by an activation is
        replaced by a gated convolution. By default "unet"
    scales : int
        Number of resolutions, at least 2. By default 3
    convs_per_scale : int
        Convolutions per scale in the encoder and in the decoder, by default 2
    base_channels : int
        Channels at the finest scale, between 1 and 28. Scale `s` has
        `base_channels * 2**s` channels. By default 28
    kernel_size : int
        Odd kernel size of the convolutions, by default 3
    dilations_on_coarsest : tuple of int
        Dilations of the convolutions at the coarsest scale of the gated variant, at most
        `convs_per_scale` entries (missing entries are 1). By default (2, 4)
    leaky_slope : float
        Negative slope of the leaky ReLU activations, by default 0.2
    output_activation : str
        Activation of the output layer. Only "sigmoid" is available

    Examples
    --------
    >>> from deepelastica import NetworkSpec
    >>> spec = NetworkSpec(scales=3, base_channels=16)
    >>> spec.channels(2)
    64
    >>> spec.parameter_count()
    175873
    """
    variant: str = "unet"
    scales: int = 3
    convs_per_scale: int = 2
    base_channels: int = 28
    kernel_size: int = 3
    dilations_on_coarsest: Tuple[int, ...] = (2, 4)
    leaky_slope: float = 0.2
    output_activation: str = "sigmoid"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError("Unknown network variant '{}'. Expected one of {}".format(self.variant, VARIANTS))
        if not 2 <= self.scales <= 6:
            raise ValueError("scales must lie between 2 and 6, not {}".format(self.scales))
        if self.convs_per_scale < 1:
            raise ValueError("convs_per_scale must be at least 1, not {}".format(self.convs_per_scale))
        if not 1 <= self.base_channels <= 28:
            raise ValueError("base_channels must lie between 1 and 28, not {}".format(self.base_channels))
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be a positive odd number, not {}".format(self.kernel_size))
        object.__setattr__(self, "dilations_on_coarsest", tuple(int(d) for d in self.dilations_on_coarsest))
        too_many = self.gated and len(self.dilations_on_coarsest) > self.convs_per_scale
        if too_many or any(d < 1 for d in self.dilations_on_coarsest):
            raise ValueError("dilations_on_coarsest must hold at most {} values >= 1, not {}".format(
                self.convs_per_scale, self.dilations_on_coarsest))
        if self.output_activation != "sigmoid":
            raise ValueError("Only the 'sigmoid' output activation is available, not '{}'".format(
                self.output_activation))

    @property
    def gated(self) -> bool:
        return self.variant == "gated-unet"

    @property
    def divisor(self) -> int:
        """Input sizes must be multiples of this number"""
        return 2 ** (self.scales - 1)

    def channels(self, scale: int) -> int:
        return self.base_channels * 2 ** scale

    def coarsest_dilations(self) -> Tuple[int, ...]:
        if not self.gated:
            return (1,) * self.convs_per_scale
        pad = self.convs_per_scale - len(self.dilations_on_coarsest)
        return self.dilations_on_coarsest + (1,) * pad

    def layers(self) -> List[LayerSpec]:
        """The convolutional layers in the order of the forward pass"""
        k, gated = self.kernel_size, self.gated
        out = []
        for s in range(self.scales):
            c = self.channels(s)
            if s == 0:
                c_prev = 2
            else:
                out.append(LayerSpec("enc{}.down".format(s), self.channels(s - 1), c, k, stride=2, gated=gated))
                c_prev = c
            dilations = self.coarsest_dilations() if s == self.scales - 1 else (1,) * self.convs_per_scale
            for i, d in enumerate(dilations):
                out.append(LayerSpec("enc{}.conv{}".format(s, i), c_prev, c, k, dilation=d, gated=gated))
                c_prev = c
        for s in range(self.scales - 2, -1, -1):
            c = self.channels(s)
            out.append(LayerSpec("dec{}.up".format(s), self.channels(s + 1), c, k, gated=gated))
            c_prev = 2 * c
            for i in range(self.convs_per_scale):
                out.append(LayerSpec("dec{}.conv{}".format(s, i), c_prev, c, k, gated=gated))
                c_prev = c
        out.append(LayerSpec("head", self.base_channels, 1, 1, head=True))
        return out

    def parameter_count(self) -> int:
        """Number of scalar weights and biases"""
        return sum(layer.parameter_count() for layer in self.layers())

    def coarsest_receptive_field(self) -> int:
        """
        Side length, in input pixels, of the receptive field of one unit at the end of the
        encoder (the coarsest scale).

        Examples
        --------
        >>> from deepelastica import NetworkSpec
        >>> NetworkSpec(scales=3).coarsest_receptive_field()
        35
        >>> NetworkSpec(variant="gated-unet", scales=3).coarsest_receptive_field()
        67
        """
        field, jump = 1, 1
        for layer in self.layers():
            if not layer.name.startswith("enc"):
                break
            field += (layer.kernel_size - 1) * layer.dilation * jump
            jump *= layer.stride
        return field


def _bound(fan_in: int, gain: float) -> float:
    return gain * np.sqrt(3.0 / fan_in)


class Network:
    """
    A deep-image-prior network together with its parameters.
    """

    def __init__(self, spec: NetworkSpec, params: Dict[str, np.ndarray], seed: Optional[int] = None):
        """
        Parameters
        ----------
        spec : NetworkSpec
            The architecture
        params : dict of str to numpy.ndarray
            Weights and biases keyed by `<layer>.weight`, `<layer>.bias` and, for gated
            layers, `<layer>.gate_weight` and `<layer>.gate_bias`
        seed : int, optional
            The seed the parameters were initialised from, kept for checkpoints
        """
        expected = set(parameter_shapes(spec))
        if set(params) != expected:
            raise ValueError("Parameters do not match the NetworkSpec. Missing: {}, unexpected: {}".format(
                sorted(expected - set(params)), sorted(set(params) - expected)))
        for name, shape in parameter_shapes(spec).items():
            if np.shape(params[name]) != shape:
                raise ValueError("Parameter '{}' has shape {}, expected {}".format(name, np.shape(params[name]), shape))
        self.spec = spec
        self.params = params
        self.seed = seed

    @property
    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _weights(self, params: Optional[ParamDict]) -> Dict[str, Tensor]:
        source = self.params if params is None else params
        return {name: as_tensor(value) for name, value in source.items()}

    def _apply(self, layer: LayerSpec, x: Tensor, params: Dict[str, Tensor]) -> Tensor:
        out = conv2d(x, params[layer.name + ".weight"], params[layer.name + ".bias"],
                     stride=layer.stride, dilation=layer.dilation)
        if layer.head:
            return sigmoid(out)
        features = leaky_relu(out, self.spec.leaky_slope)
        if not layer.gated:
            return features
        gate = conv2d(x, params[layer.name + ".gate_weight"], params[layer.name + ".gate_bias"],
                      stride=layer.stride, dilation=layer.dilation)
        return features * sigmoid(gate)

    def downsample_path(self, x: Tensor, params: Optional[ParamDict] = None) -> List[Tensor]:
        """
        Run the encoder.

        Returns
        -------
        list of Tensor
            One feature map per scale, the map at scale `s` of shape
            `(base_channels * 2**s, H / 2**s, W / 2**s)`
        """
        weights = self._weights(params)
        features = []
        for layer in self.spec.layers():
            if not layer.name.startswith("enc"):
                break
            if layer.name.endswith(".down"):
                features.append(x)
            x = self._apply(layer, x, weights)
        features.append(x)
        return features

    def upsample_path(self, features: List[Tensor], params: Optional[ParamDict] = None,
                      drop_skips: Iterable[int] = ()) -> Tensor:
        """
        Run the decoder and the output layer on the encoder features.

        Parameters
        ----------
        features : list of Tensor
            The output of `downsample_path`
        params : dict, optional
            Parameters to use instead of `self.params`
        drop_skips : iterable of int, optional
            Scales whose skip connection is replaced by zeros

        Returns
        -------
        Tensor
            The output of shape `(1, H, W)`
        """
        weights = self._weights(params)
        drop_skips = set(drop_skips)
        x = features[-1]
        for layer in self.spec.layers():
            if layer.name.startswith("enc"):
                continue
            if layer.name.endswith(".up"):
                scale = int(layer.name[3:layer.name.index(".")])
                x = self._apply(layer, resample(x, "up2"), weights)
                skip = features[scale]
                if scale in drop_skips:
                    skip = Tensor(np.zeros(skip.shape, dtype=skip.dtype))
                x = concat(x, skip)
            else:
                x = self._apply(layer, x, weights)
        return x

    def forward(self, x, params: Optional[ParamDict] = None) -> Tensor:
        """
        Map a `(2, H, W)` input to a `(1, H, W)` output with values in (0, 1).

        Parameters
        ----------
        x : Tensor or numpy.ndarray
            Channel 0 holds the masked image with the inpainting domain filled, channel 1
            the mask. `H` and `W` must be multiples of `spec.divisor`
        params : dict, optional
            Parameter tensors to use instead of `self.params`, typically leaf tensors that
            require gradients

        Raises
        ------
        ValueError
            If the input does not have two channels or its spatial size is not divisible

        Examples
        --------
        >>> import numpy as np
        >>> from deepelastica import NetworkSpec, build
        >>> net = build(NetworkSpec(scales=2, base_channels=4), seed=0)
        >>> out = net.forward(np.random.default_rng(0).uniform(size=(2, 8, 8)))
        >>> out.shape
        (1, 8, 8)
        >>> bool(((out.numpy() > 0) & (out.numpy() < 1)).all())
        True
        """
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[0] != 2:
            raise ValueError("The network input must have shape (2, H, W), not {}".format(x.shape))
        height, width = x.shape[1:]
        m = self.spec.divisor
        if height % m or width % m:
            raise ValueError("The input size {}x{} is not divisible by {}. Pad it with "
                             "pad_to_multiple first".format(height, width, m))
        coarsest = min(height, width) // m
        reach = max(self.spec.coarsest_dilations()) * (self.spec.kernel_size // 2)
        if reach >= coarsest:
            raise ValueError("The input size {}x{} is too small for {} scales: the coarsest "
                             "scale has {} pixels but its convolutions reach {} pixels".format(
                                 height, width, self.spec.scales, coarsest, reach))
        return self.upsample_path(self.downsample_path(x, params), params)

    def __call__(self, x, params: Optional[ParamDict] = None) -> Tensor:
        return self.forward(x, params)

    def __repr__(self) -> str:
        return "<deepelastica.Network {} with {} scale{}, {} base channels and {} parameters>".format(
            self.spec.variant, self.spec.scales, "s" if self.spec.scales != 1 else "",
            self.spec.base_channels, self.num_parameters)


def parameter_shapes(spec: NetworkSpec) -> Dict[str, Tuple[int, ...]]:
    """Names and shapes of the parameters of a network, in layer order"""
    shapes = {}
    for layer in spec.layers():
        kernel = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
        shapes[layer.name + ".weight"] = kernel
        shapes[layer.name + ".bias"] = (layer.out_channels,)
        if layer.gated:
            shapes[layer.name + ".gate_weight"] = kernel
            shapes[layer.name + ".gate_bias"] = (layer.out_channels,)
    return shapes


def build(spec: NetworkSpec, seed: Optional[int] = None, dtype=np.float32) -> Network:
    """
    Create a network with freshly initialised parameters.

    Weights are drawn uniformly with the fan-in scaling suited to leaky ReLU activations,
    biases start at zero. The same seed always gives the same parameters.

    Parameters
    ----------
    spec : NetworkSpec
        The architecture
    seed : int, optional
        Seed of `numpy.random.default_rng`
    dtype : numpy dtype, optional
        `numpy.float32` (default) or `numpy.float64`

    Returns
    -------
    Network
    """
    rng = np.random.default_rng(seed)
    leaky_gain = np.sqrt(2.0 / (1.0 + spec.leaky_slope ** 2))
    params = {}
    for layer in spec.layers():
        fan_in = layer.in_channels * layer.kernel_size ** 2
        kernel = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
        bound = _bound(fan_in, 1.0 if layer.head else leaky_gain)
        params[layer.name + ".weight"] = rng.uniform(-bound, bound, size=kernel).astype(dtype)
        params[layer.name + ".bias"] = np.zeros(layer.out_channels, dtype=dtype)
        if layer.gated:
            gate_bound = _bound(fan_in, 1.0)
            params[layer.name + ".gate_weight"] = rng.uniform(-gate_bound, gate_bound, size=kernel).astype(dtype)
            params[layer.name + ".gate_bias"] = np.zeros(layer.out_channels, dtype=dtype)
    net = Network(spec, params, seed=seed)
    logger.debug("Built %r", net)
    return net


def pad_to_multiple(x: np.ndarray, multiple: int) -> np.ndarray:
    """
    Mirror-pad the last two axes of `x` at the bottom and right so that both are
    multiples of `multiple`.

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.networks import pad_to_multiple
    >>> pad_to_multiple(np.zeros((2, 30, 32)), 4).shape
    (2, 32, 32)
    """
    x = np.asarray(x)
    height, width = x.shape[-2:]
    extra_h = -height % multiple
    extra_w = -width % multiple
    if not extra_h and not extra_w:
        return x
    pad = [(0, 0)] * (x.ndim - 2) + [(0, extra_h), (0, extra_w)]
    return np.pad(x, pad, mode="reflect")


def default_network_spec(shape: Tuple[int, int], task: str = "natural",
                         base_channels: int = 28) -> NetworkSpec:
    """
    The network used when none is configured: a plain U-net for natural images, a gated
    U-net for shape completion. Images up to 128 pixels on their shorter side get three
    scales, larger ones four.
    """
    if task not in ("natural", "shape"):
        raise ValueError("task must be 'natural' or 'shape', not '{}'".format(task))
    scales = 3 if min(shape) <= 128 else 4
    variant = "unet" if task == "natural" else "gated-unet"
    return NetworkSpec(variant=variant, scales=scales, base_channels=base_channels)
