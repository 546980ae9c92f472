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

"""The discrete Euler's elastica energy.

The continuous elastica model penalises, over the inpainting domain, the length of the
level lines of an image (its total variation) together with their squared curvature::

    E(u) = integral over the domain of (b + (1 - b) * kappa**2) * |grad u|

On a pixel grid every derivative is taken from a quadratic polynomial fitted by weighted
least squares to the 3x3 neighbourhood of a pixel. The fit reduces to five fixed stencils:
the first derivatives are the Sobel operators scaled by 1/(8h), the second derivatives
are Sobel-like second differences scaled by 1/(4h^2). The stencils are applied as a single
non-trainable convolution so that gradients flow through the same tape as the networks.

Images use row-major indexing with the row index `i` growing downwards. The x axis runs
along columns and the y axis along rows, so `u[i, j] = j` is a unit ramp in x and
`u[i, j] = i * j` has `u_xy = 1`.
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple, Union

import numpy as np

from deepelastica.image_io import as_image, as_mask
from deepelastica.tensor import (Tensor, backward, channel_slice, conv2d, reshape, sqrt,
                                 square, sum_all)

Field = Union[Tensor, np.ndarray]


@dataclass(frozen=True)
class ElasticaParams:
    """
    Model parameters of the elastica energy.

    Parameters
    ----------
    b : float
        Weight of the length (total variation) term, in [0, 1]. The curvature term is
        weighted by `1 - b`. By default 0.175
    epsilon : float
        Regularisation of the gradient magnitude, `|grad u| = sqrt(u_x^2 + u_y^2 + epsilon^2)`.
        Must be positive. By default 0.005
    h : float
        Grid spacing, by default 1.0

    Examples
    --------
    >>> from deepelastica import ElasticaParams
    >>> ElasticaParams(b=0.001, epsilon=1e-4)
    ElasticaParams(b=0.001, epsilon=0.0001, h=1.0)
    """
    b: float = 0.175
    epsilon: float = 0.005
    h: float = 1.0

    def __post_init__(self):
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1], not {}".format(self.b))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive, not {}".format(self.epsilon))
        if not self.h > 0:
            raise ValueError("The grid spacing h must be positive, not {}".format(self.h))


@dataclass(frozen=True, eq=False)
class StencilSet:
    """The five 3x3 correlation kernels of the derivative approximations, scaling included"""
    dx: np.ndarray
    dy: np.ndarray
    dxx: np.ndarray
    dyy: np.ndarray
    dxy: np.ndarray
    h: float = 1.0

    def as_kernel(self, dtype=np.float64) -> np.ndarray:
        """Stack the stencils into one `(5, 1, 3, 3)` kernel bank for `conv2d`"""
        return np.stack([self.dx, self.dy, self.dxx, self.dyy, self.dxy])[:, None].astype(dtype)


def make_stencils(h: float = 1.0) -> StencilSet:
    """
    Build the derivative stencils for grid spacing `h`.

    Examples
    --------
    >>> from deepelastica.energy import make_stencils
    >>> s = make_stencils()
    >>> s.dx * 8
    array([[-1.,  0.,  1.],
           [-2.,  0.,  2.],
           [-1.,  0.,  1.]])
    >>> float(abs(s.dxy).sum())
    1.0
    """
    if not h > 0:
        raise ValueError("The grid spacing h must be positive, not {}".format(h))
    sobel = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
    second = np.array([[1.0, -2.0, 1.0], [2.0, -4.0, 2.0], [1.0, -2.0, 1.0]])
    # Rows grow downwards, hence the sign relative to a y-up convention.
    mixed = np.array([[1.0, 0.0, -1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 1.0]])
    return StencilSet(
        dx=sobel / (8 * h),
        dy=sobel.T / (8 * h),
        dxx=second / (4 * h * h),
        dyy=second.T / (4 * h * h),
        dxy=mixed / (4 * h * h),
        h=h,
    )


class Derivatives(NamedTuple):
    ux: Tensor
    uy: Tensor
    uxx: Tensor
    uyy: Tensor
    uxy: Tensor


def _as_field(u: Field) -> Tensor:
    if isinstance(u, Tensor):
        if u.ndim != 2:
            raise ValueError("Expected an image of shape (H, W), not {}".format(u.shape))
        return u
    return Tensor(as_image(u, check_range=False))


def derivatives(u: Field, stencils: StencilSet = None) -> Derivatives:
    """
    First and second derivatives of an image by the 3x3 stencils, with mirror boundary.

    Parameters
    ----------
    u : Tensor or numpy.ndarray
        Image of shape `(H, W)` with `H, W >= 3`
    stencils : StencilSet, optional
        By default `make_stencils(1.0)`

    Returns
    -------
    Derivatives
        The fields `ux, uy, uxx, uyy, uxy`, each of shape `(H, W)`

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.energy import derivatives
    >>> ramp = np.tile(np.arange(5.0), (5, 1))
    >>> d = derivatives(ramp)
    >>> d.ux.numpy()[2, 1:-1]
    array([1., 1., 1.])
    >>> float(abs(d.uxx.numpy()[1:-1, 1:-1]).max())
    0.0
    """
    u = _as_field(u)
    height, width = u.shape
    if height < 3 or width < 3:
        raise ValueError("Derivatives need an image of at least 3x3 pixels, not {}x{}".format(height, width))
    if stencils is None:
        stencils = make_stencils()
    bank = Tensor(stencils.as_kernel(u.dtype))
    out = conv2d(reshape(u, (1, height, width)), bank)
    return Derivatives(*(reshape(channel_slice(out, i, i + 1), (height, width)) for i in range(5)))


def grad_magnitude(ux: Tensor, uy: Tensor, params: ElasticaParams) -> Tensor:
    """The regularised gradient magnitude `sqrt(ux^2 + uy^2 + epsilon^2)`"""
    if ux.shape != uy.shape:
        raise ValueError("Derivative fields have different shapes {} and {}".format(ux.shape, uy.shape))
    return sqrt(square(ux) + square(uy) + params.epsilon ** 2)


def curvature(ux: Tensor, uy: Tensor, uxx: Tensor, uyy: Tensor, uxy: Tensor,
              params: ElasticaParams) -> Tensor:
    """
    Level-line curvature with the regularised gradient magnitude in the denominator.

    The result is finite everywhere since the denominator is at least `epsilon^3`.
    """
    numerator = square(uy) * uxx - 2.0 * ux * uy * uxy + square(ux) * uyy
    gm = grad_magnitude(ux, uy, params)
    return numerator / (gm * gm * gm)


def _weight(c, shape: Tuple[int, int], dtype) -> Tensor:
    c = as_mask(c)
    if c.shape != shape:
        raise ValueError("Image of shape {} and mask of shape {} differ".format(shape, c.shape))
    return Tensor(1.0 - c, dtype=dtype)


def energy_terms(u: Field, c, params: ElasticaParams) -> Tuple[Tensor, Tensor]:
    """
    The two parts of the energy over the inpainting domain: the regularised total variation
    `sum((1 - c) * |grad u|)` and the curvature part `sum((1 - c) * |grad u| * kappa^2)`.
    """
    u = _as_field(u)
    weight = _weight(c, u.shape, u.dtype)
    d = derivatives(u, make_stencils(params.h))
    gm = grad_magnitude(d.ux, d.uy, params)
    kappa = curvature(*d, params)
    weighted = weight * gm
    return sum_all(weighted), sum_all(weighted * square(kappa))


def elastica_loss(u: Field, c, params: ElasticaParams) -> Tensor:
    """
    The discrete elastica energy of an image over the inpainting domain.

    Parameters
    ----------
    u : Tensor or numpy.ndarray
        Image of shape `(H, W)`, at least 3x3. Gradients flow back to `u` if it is a tensor
        on the tape
    c : numpy.ndarray
        Binary mask of the same shape, 1 for known pixels. Known pixels contribute nothing
    params : ElasticaParams
        Model parameters

    Returns
    -------
    Tensor
        A 0-d tensor, `sum((1 - c) * |grad u| * (b + (1 - b) * kappa^2))`

    Raises
    ------
    ValueError
        If the mask is not binary, or the shapes of `u` and `c` differ

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica import ElasticaParams, elastica_loss
    >>> u = np.full((5, 5), 0.5)
    >>> c = np.ones((5, 5))
    >>> c[2, 2] = 0
    >>> round(elastica_loss(u, c, ElasticaParams(b=1.0, epsilon=0.01)).item(), 12)
    0.01
    """
    u = _as_field(u)
    weight = _weight(c, u.shape, u.dtype)
    d = derivatives(u, make_stencils(params.h))
    gm = grad_magnitude(d.ux, d.uy, params)
    kappa = curvature(*d, params)
    return sum_all(weight * gm * (params.b + (1.0 - params.b) * square(kappa)))


def _loss_value(u: np.ndarray, c, params: ElasticaParams) -> float:
    return elastica_loss(Tensor(u, dtype=np.float64), c, params).item()


def finite_difference_gradient(u, c, params: ElasticaParams, step: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient of `elastica_loss` with respect to every pixel of `u`.

    The computation runs in 64-bit precision regardless of the dtype of `u`. It costs two
    energy evaluations per pixel and is meant for small verification images.

    Parameters
    ----------
    u : numpy.ndarray
        Image of shape `(H, W)`
    c : numpy.ndarray
        Binary mask of the same shape
    params : ElasticaParams
        Model parameters
    step : float, optional
        Perturbation size in [1e-6, 1e-4], by default 1e-5

    Returns
    -------
    numpy.ndarray
        float64 array of the shape of `u`
    """
    if not 1e-6 <= step <= 1e-4:
        raise ValueError("The finite-difference step must lie in [1e-6, 1e-4], not {}".format(step))
    u = np.array(as_image(u, check_range=False), dtype=np.float64)
    c = as_mask(c)
    grad = np.zeros_like(u)
    for idx in np.ndindex(*u.shape):
        original = u[idx]
        u[idx] = original + step
        plus = _loss_value(u, c, params)
        u[idx] = original - step
        minus = _loss_value(u, c, params)
        u[idx] = original
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def autodiff_gradient(u, c, params: ElasticaParams) -> np.ndarray:
    """Gradient of `elastica_loss` with respect to `u` by backpropagation, in 64-bit precision"""
    x = Tensor(as_image(u, check_range=False), requires_grad=True, dtype=np.float64)
    backward(elastica_loss(x, c, params))
    return x.grad


def gradient_check(u, c, params: ElasticaParams, step: float = 1e-5) -> float:
    """
    Compare the backpropagated energy gradient with central finite differences.

    The error is normwise in the max-norm: the largest absolute deviation over all pixels
    divided by the largest finite-difference component. Pixels whose gradient is small
    compared with the largest one are not compared relative to their own size.

    Returns
    -------
    float
        `max|g_ad - g_fd| / max(max|g_fd|, 1e-12)`

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica import ElasticaParams
    >>> from deepelastica.energy import gradient_check
    >>> rng = np.random.default_rng(0)
    >>> u = rng.uniform(0.1, 0.9, size=(6, 6))
    >>> c = (rng.uniform(size=(6, 6)) < 0.5).astype(float)
    >>> gradient_check(u, c, ElasticaParams(b=0.5, epsilon=0.01)) < 1e-4
    True
    """
    g_ad = autodiff_gradient(u, c, params)
    g_fd = finite_difference_gradient(u, c, params, step)
    return float(np.max(np.abs(g_ad - g_fd)) / max(float(np.max(np.abs(g_fd))), 1e-12))
