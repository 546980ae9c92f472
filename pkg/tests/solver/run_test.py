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

import warnings

import numpy as np
import pytest

from deepelastica.energy import ElasticaParams, autodiff_gradient, elastica_loss
from deepelastica.image_io import make_random_mask, make_shape_instance
from deepelastica.networks import NetworkSpec, build
from deepelastica.optimizers import LrSchedule
from deepelastica.solver import (SolverConfig, DivergenceError, RunResult, remask, initial_image,
                                 run_deep_prior, run_direct, run)
from deepelastica.tensor import Tensor, backward, crop, parameter, reshape


def small_instance():
    truth, mask = make_shape_instance("bar-gap", 16, 6)
    return truth, mask


def deep_config(**kwargs):
    settings = dict(network=NetworkSpec(scales=2, base_channels=2), max_iterations=5, log_every=1,
                    params=ElasticaParams(b=0.01, epsilon=0.01), schedule=LrSchedule(0.01))
    settings.update(kwargs)
    return SolverConfig(**settings)


def test_remask_blocks_gradients_on_known_pixels():
    rng = np.random.default_rng(0)
    u = parameter(rng.random((4, 5)))
    f = rng.random((4, 5))
    c = (rng.random((4, 5)) < 0.5).astype(float)
    out = remask(u, f, c)
    np.testing.assert_allclose(out.numpy()[c == 1], f[c == 1])
    np.testing.assert_allclose(out.numpy()[c == 0], u.data[c == 0])
    out.sum().backward()
    np.testing.assert_array_equal(u.grad, 1 - c)
    with pytest.raises(ValueError):
        remask(np.zeros((2, 2)), np.zeros((2, 3)), np.ones((2, 2)))


def test_direct_gradient_descent_step():
    truth, mask = small_instance()
    config = SolverConfig(mode="direct", optimizer="gd", schedule=LrSchedule(0.1), max_iterations=1,
                          init="constant", dtype="float64", params=ElasticaParams(b=0.5, epsilon=0.01))
    result = run_direct(truth, mask, config)
    start = initial_image(truth, mask, config)
    expected = start - 0.1 * (1 - mask) * autodiff_gradient(start, mask, config.params)
    np.testing.assert_allclose(result.final_image, expected, rtol=1e-10, atol=1e-12)


def test_direct_energy_decreases():
    rng = np.random.default_rng(1)
    truth = rng.random((12, 12))
    mask = make_random_mask((12, 12), 0.5, seed=2)
    config = SolverConfig(mode="direct", schedule=LrSchedule(0.005), max_iterations=40, log_every=1,
                          params=ElasticaParams(b=1.0, epsilon=0.05), dtype="float64")
    result = run_direct(truth, mask, config, ground_truth=truth)
    assert result.record.energies[-1] < result.record.energies[0]
    np.testing.assert_array_equal(result.final_image[mask == 1], truth[mask == 1])


def test_deep_prior_run():
    truth, mask = small_instance()
    result = run_deep_prior(truth, mask, deep_config(), ground_truth=truth)
    assert isinstance(result, RunResult)
    record = result.record
    assert record.iterations == [0, 1, 2, 3, 4, 5]
    assert record.lrs == [0.01] * 6
    np.testing.assert_array_equal(result.final_image[mask == 1], truth[mask == 1])
    np.testing.assert_array_equal(result.best_image[mask == 1], truth[mask == 1])
    assert record.best_mae == min(record.mae_inpaint)
    assert record.mae_inpaint[record.iterations.index(record.best_iteration)] == record.best_mae
    assert record.initial_image.shape == (16, 16)
    assert np.all((result.final_image >= 0) & (result.final_image <= 1))


def test_deep_prior_is_deterministic():
    truth, mask = small_instance()
    a = run_deep_prior(truth, mask, deep_config(max_iterations=3))
    b = run_deep_prior(truth, mask, deep_config(max_iterations=3))
    np.testing.assert_array_equal(a.final_image, b.final_image)
    np.testing.assert_array_equal(a.record.energies, b.record.energies)
    assert a.best_image is None
    assert np.all(np.isnan(a.record.mae_inpaint))


def test_deep_prior_pads_odd_sizes():
    rng = np.random.default_rng(3)
    f = rng.random((10, 13))
    c = make_random_mask((10, 13), 0.3, seed=0)
    result = run_deep_prior(f, c, deep_config(max_iterations=2, log_every=100))
    assert result.final_image.shape == (10, 13)
    assert result.record.iterations == [0, 2]


def test_gated_network_and_float64():
    truth, mask = make_shape_instance("double-bar", 32, 8)
    config = deep_config(network=NetworkSpec(variant="gated-unet", scales=2, base_channels=2),
                         max_iterations=2, dtype="float64")
    result = run_deep_prior(truth, mask, config, ground_truth=truth)
    assert len(result.record) == 3


def test_run_dispatch():
    truth, mask = small_instance()
    config = SolverConfig(mode="direct", max_iterations=1)
    np.testing.assert_array_equal(run(truth, mask, config).final_image,
                                  run_direct(truth, mask, config).final_image)
    with pytest.raises(ValueError):
        run_deep_prior(truth, mask, config)
    with pytest.raises(ValueError):
        run_direct(truth, mask, deep_config())


def test_input_validation():
    truth, mask = small_instance()
    config = SolverConfig(mode="direct", max_iterations=1)
    with pytest.raises(ValueError):
        run_direct(truth * 2, mask, config)
    with pytest.raises(ValueError):
        run_direct(truth, mask[:, :8], config)
    with pytest.raises(ValueError):
        run_direct(truth, mask, config, ground_truth=truth[:8])
    with pytest.raises(ValueError):
        run_direct(np.zeros((2, 2)), np.ones((2, 2)), config)


def test_divergence():
    rng = np.random.default_rng(4)
    truth = rng.random((12, 12))
    mask = make_random_mask((12, 12), 0.5, seed=1)
    config = SolverConfig(mode="direct", optimizer="gd", schedule=LrSchedule(1e30), max_iterations=5,
                          log_every=1)
    with pytest.raises(DivergenceError) as excinfo:
        run_direct(truth, mask, config)
    assert excinfo.value.iteration == 1
    assert excinfo.value.last_finite_image is not None
    assert excinfo.value.record.iterations == [0]


def test_schedule_warnings():
    truth, mask = small_instance()
    config = SolverConfig(mode="direct", max_iterations=2, schedule=LrSchedule(0.01, ((100, 0.5),)))
    with pytest.warns(UserWarning, match="milestones"):
        run_direct(truth, mask, config)
    with pytest.warns(UserWarning, match="clipping"):
        run_direct(truth, mask, SolverConfig(mode="direct", max_iterations=2, clip_norm=1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run_direct(truth, mask, SolverConfig(mode="direct", max_iterations=2))


def test_weight_gradient_matches_finite_differences():
    truth, mask = make_shape_instance("bar-gap", 8, 2)
    spec = NetworkSpec(scales=2, base_channels=1)
    net = build(spec, seed=5, dtype=np.float64)
    params = ElasticaParams(b=0.3, epsilon=0.05)
    x = Tensor(np.stack([np.where(mask == 1, truth, 0.5), mask]))

    def energy(values):
        out = reshape(crop(net.forward(x, values), 8, 8), (8, 8))
        return elastica_loss(remask(out, truth, mask), mask, params)

    leaves = {k: parameter(v) for k, v in net.params.items()}
    backward(energy(leaves))
    step = 1e-6
    for name in ("enc0.conv0.weight", "enc1.down.weight", "head.weight"):
        grad = leaves[name].grad.ravel()
        for index in range(0, grad.size, max(1, grad.size // 4)):
            values = {}
            for sign in (1, -1):
                shifted = {k: v.copy() for k, v in net.params.items()}
                shifted[name].flat[index] += sign * step
                values[sign] = energy({k: Tensor(v) for k, v in shifted.items()}).item()
            expected = (values[1] - values[-1]) / (2 * step)
            np.testing.assert_allclose(grad[index], expected, rtol=1e-4, atol=1e-6)


def test_deep_prior_energy_decreases():
    truth, mask = small_instance()
    config = deep_config(max_iterations=10, schedule=LrSchedule(0.001), dtype="float64",
                         params=ElasticaParams(b=0.5, epsilon=0.1))
    result = run_deep_prior(truth, mask, config)
    assert result.record.energies[-1] < result.record.energies[0]
