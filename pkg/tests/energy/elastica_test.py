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

import numpy as np
import pytest

from deepelastica.energy import (ElasticaParams, make_stencils, derivatives, curvature,
                                 grad_magnitude, energy_terms, elastica_loss,
                                 finite_difference_gradient, autodiff_gradient, gradient_check)
from deepelastica.tensor import Tensor, parameter


def test_params_validation():
    with pytest.raises(ValueError):
        ElasticaParams(b=1.5)
    with pytest.raises(ValueError):
        ElasticaParams(b=-0.1)
    with pytest.raises(ValueError):
        ElasticaParams(epsilon=0.0)
    with pytest.raises(ValueError):
        ElasticaParams(h=0.0)
    with pytest.raises(ValueError):
        make_stencils(-1.0)


def test_stencil_scaling():
    s1 = make_stencils(1.0)
    s2 = make_stencils(0.5)
    np.testing.assert_allclose(s2.dx, 2 * s1.dx)
    np.testing.assert_allclose(s2.dxx, 4 * s1.dxx)
    np.testing.assert_allclose(s1.dy, s1.dx.T)
    np.testing.assert_allclose(s1.dyy, s1.dxx.T)
    assert s1.as_kernel(np.float32).shape == (5, 1, 3, 3)
    assert s1.as_kernel(np.float32).dtype == np.float32
    for stencil in (s1.dx, s1.dy, s1.dxx, s1.dyy, s1.dxy):
        assert abs(stencil.sum()) < 1e-15


def test_derivatives_exact_on_quadratics():
    i, j = np.indices((7, 8)).astype(float)
    x, y = j, i
    u = 0.3 + 0.5 * x - 0.2 * y + 0.04 * x ** 2 + 0.03 * x * y - 0.05 * y ** 2
    d = derivatives(u)
    interior = (slice(1, -1), slice(1, -1))
    np.testing.assert_allclose(d.ux.numpy()[interior], (0.5 + 0.08 * x + 0.03 * y)[interior], atol=1e-12)
    np.testing.assert_allclose(d.uy.numpy()[interior], (-0.2 + 0.03 * x - 0.1 * y)[interior], atol=1e-12)
    np.testing.assert_allclose(d.uxx.numpy()[interior], 0.08, atol=1e-12)
    np.testing.assert_allclose(d.uyy.numpy()[interior], -0.1, atol=1e-12)
    np.testing.assert_allclose(d.uxy.numpy()[interior], 0.03, atol=1e-12)


def test_derivatives_grid_spacing():
    u = np.tile(np.arange(6.0), (4, 1))
    d = derivatives(u, make_stencils(0.25))
    np.testing.assert_allclose(d.ux.numpy()[:, 1:-1], 4.0)


def test_derivatives_mirror_boundary():
    u = np.tile(np.arange(5.0), (5, 1))
    d = derivatives(u)
    np.testing.assert_allclose(d.ux.numpy()[:, 0], 0.0)
    np.testing.assert_allclose(d.ux.numpy()[:, -1], 0.0)
    np.testing.assert_allclose(d.uy.numpy(), 0.0)


def test_derivatives_too_small():
    with pytest.raises(ValueError):
        derivatives(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        derivatives(Tensor(np.zeros((1, 5, 5))))


def test_curvature_of_distance_function():
    i, j = np.indices((40, 40)).astype(float)
    r = np.hypot(i - 19.5, j - 19.5)
    params = ElasticaParams(epsilon=1e-6)
    kappa = curvature(*derivatives(r), params).numpy()
    ring = (r > 10) & (r < 14)
    np.testing.assert_allclose(kappa[ring], 1 / r[ring], rtol=0.05)


def test_curvature_is_finite_on_flat_image():
    params = ElasticaParams(epsilon=1e-3)
    kappa = curvature(*derivatives(np.full((5, 5), 0.7)), params).numpy()
    assert np.all(np.isfinite(kappa))
    np.testing.assert_allclose(kappa, 0.0)


def test_grad_magnitude():
    params = ElasticaParams(epsilon=0.5)
    gm = grad_magnitude(Tensor([3.0]), Tensor([4.0]), params)
    np.testing.assert_allclose(gm.numpy(), [np.sqrt(25.25)], rtol=1e-6)
    with pytest.raises(ValueError):
        grad_magnitude(Tensor([3.0]), Tensor([4.0, 1.0]), params)


@pytest.mark.parametrize("b", [0.0, 0.3, 1.0])
def test_constant_image_energy(b):
    rng = np.random.default_rng(3)
    c = (rng.random((9, 9)) < 0.5).astype(float)
    params = ElasticaParams(b=b, epsilon=0.02)
    loss = elastica_loss(np.full((9, 9), 0.4), c, params).item()
    np.testing.assert_allclose(loss, b * 0.02 * (1 - c).sum(), rtol=1e-12, atol=1e-15)


def test_known_pixels_contribute_nothing():
    rng = np.random.default_rng(4)
    u = rng.random((8, 8))
    assert elastica_loss(u, np.ones((8, 8)), ElasticaParams()).item() == 0.0
    assert elastica_loss(u, np.zeros((8, 8)), ElasticaParams()).item() > 0


def test_checkerboard_is_invisible_to_the_energy():
    i, j = np.indices((10, 10))
    board = 0.5 + 0.2 * (-1.0) ** (i + j)
    c = np.ones((10, 10))
    c[3:7, 3:7] = 0
    params = ElasticaParams(b=0.1, epsilon=0.01)
    np.testing.assert_allclose(elastica_loss(board, c, params).item(),
                               elastica_loss(np.full((10, 10), 0.5), c, params).item(), rtol=1e-10)


def test_energy_terms_combine_to_loss():
    rng = np.random.default_rng(5)
    u = rng.random((8, 8))
    c = (rng.random((8, 8)) < 0.3).astype(float)
    params = ElasticaParams(b=0.25, epsilon=0.05)
    tv, curv = energy_terms(u, c, params)
    np.testing.assert_allclose(0.25 * tv.item() + 0.75 * curv.item(),
                               elastica_loss(u, c, params).item(), rtol=1e-10)


def test_loss_input_validation():
    params = ElasticaParams()
    with pytest.raises(ValueError):
        elastica_loss(np.zeros((5, 5)), np.full((5, 5), 0.5), params)
    with pytest.raises(ValueError):
        elastica_loss(np.zeros((5, 5)), np.ones((4, 5)), params)


def test_loss_keeps_float32():
    u = parameter(np.full((6, 6), 0.5, dtype=np.float32))
    c = np.zeros((6, 6))
    loss = elastica_loss(u, c, ElasticaParams())
    assert loss.dtype == np.float32
    loss.backward()
    assert u.grad.dtype == np.float32


def test_gradient_vanishes_far_from_the_domain():
    rng = np.random.default_rng(6)
    u = rng.uniform(0.1, 0.9, (9, 9))
    c = np.ones((9, 9))
    c[3:6, 3:6] = 0
    g = autodiff_gradient(u, c, ElasticaParams(b=0.5, epsilon=0.01))
    near = np.zeros((9, 9), dtype=bool)
    near[2:7, 2:7] = True
    assert np.all(g[~near] == 0)
    assert np.any(g[near] != 0)


@pytest.mark.parametrize("b,epsilon", [(1.0, 0.01), (0.5, 0.01), (0.175, 0.05)])
def test_gradient_check(b, epsilon):
    rng = np.random.default_rng(7)
    u = rng.uniform(0.1, 0.9, (8, 8))
    c = (rng.random((8, 8)) < 0.4).astype(float)
    assert gradient_check(u, c, ElasticaParams(b=b, epsilon=epsilon)) < 1e-4


def test_gradient_check_is_normwise_in_the_max_norm():
    rng = np.random.default_rng(11)
    u = rng.uniform(0.1, 0.9, (7, 7))
    c = (rng.random((7, 7)) < 0.5).astype(float)
    params = ElasticaParams(b=0.3, epsilon=0.02)
    g_ad = autodiff_gradient(u, c, params)
    g_fd = finite_difference_gradient(u, c, params, 1e-5)
    expected = np.max(np.abs(g_ad - g_fd)) / np.max(np.abs(g_fd))
    assert gradient_check(u, c, params, step=1e-5) == pytest.approx(expected, rel=1e-12)


def test_finite_difference_step_range():
    u = np.full((4, 4), 0.5)
    c = np.zeros((4, 4))
    with pytest.raises(ValueError):
        finite_difference_gradient(u, c, ElasticaParams(), step=1e-3)
    g = finite_difference_gradient(u, c, ElasticaParams(), step=1e-4)
    assert g.dtype == np.float64
    assert g.shape == (4, 4)


def test_curvature_of_paraboloid():
    i, j = np.indices((32, 32)).astype(float)
    x, y = j - 15.5, i - 15.5
    u = (x ** 2 + y ** 2) / 2
    r = np.hypot(x, y)
    kappa = curvature(*derivatives(u), ElasticaParams(epsilon=1e-4)).numpy()
    ring = (r >= 3) & (r <= 12)
    np.testing.assert_allclose(kappa[ring], 1 / r[ring], rtol=1e-3)


@pytest.mark.parametrize("phi", [0.0, 0.3, 1.2, 2.5, -2.0])
def test_ramp_derivatives_in_any_direction(phi):
    i, j = np.indices((6, 7)).astype(float)
    d = derivatives(np.cos(phi) * j + np.sin(phi) * i)
    np.testing.assert_allclose(d.ux.numpy()[1:-1, 1:-1], np.cos(phi), atol=1e-12)
    np.testing.assert_allclose(d.uy.numpy()[1:-1, 1:-1], np.sin(phi), atol=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 0.4])
def test_checkerboard_energy_value(alpha):
    i, j = np.indices((12, 12))
    board = 0.5 + alpha * (-1.0) ** (i + j)
    c = np.ones((12, 12))
    c[2:9, 3:10] = 0
    params = ElasticaParams(b=0.175, epsilon=0.005)
    np.testing.assert_allclose(elastica_loss(board, c, params).item(), 49 * 0.005 * 0.175, rtol=1e-12)


def test_unit_ramp_total_variation():
    u = np.tile(np.arange(8.0), (8, 1))
    c = np.ones((8, 8))
    c[2:6, 2:6] = 0
    loss = elastica_loss(u, c, ElasticaParams(b=1.0, epsilon=0.005)).item()
    np.testing.assert_allclose(loss, 16 * np.sqrt(1.000025), rtol=1e-12)


def test_constant_image_has_zero_gradient_for_length_term():
    c = np.ones((7, 7))
    c[2:5, 2:5] = 0
    g = autodiff_gradient(np.full((7, 7), 0.6), c, ElasticaParams(b=1.0, epsilon=0.01))
    np.testing.assert_allclose(g, 0.0, atol=1e-12)


@pytest.mark.parametrize("b", [1.0, 0.175, 0.001])
def test_energy_is_invariant_to_grey_shift(b):
    rng = np.random.default_rng(21)
    u = rng.uniform(size=(12, 12))
    c = (rng.uniform(size=(12, 12)) < 0.4).astype(float)
    params = ElasticaParams(b=b, epsilon=0.01)
    for shift in (0.3, -0.7, 2.0):
        np.testing.assert_allclose(elastica_loss(u + shift, c, params).item(),
                                   elastica_loss(u, c, params).item(), rtol=1e-10)


def test_b_one_is_total_variation_over_domain():
    rng = np.random.default_rng(22)
    u = rng.uniform(size=(10, 11))
    c = (rng.uniform(size=(10, 11)) < 0.5).astype(float)
    params = ElasticaParams(b=1.0, epsilon=0.02)
    d = derivatives(u)
    tv = np.sum((1 - c) * np.sqrt(d.ux.numpy() ** 2 + d.uy.numpy() ** 2 + 0.02 ** 2))
    np.testing.assert_allclose(elastica_loss(u, c, params).item(), tv, rtol=1e-12)
