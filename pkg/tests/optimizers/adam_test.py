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

from deepelastica.optimizers import (gd_step, AdamState, adam_step, Adam, LrSchedule, lr_at,
                                     global_norm, clip_by_global_norm)


def test_gd_step():
    params = {"a": np.array([1.0, 2.0], dtype=np.float32)}
    grads = {"a": np.array([10.0, -10.0])}
    out = gd_step(params, grads, 0.01)
    np.testing.assert_allclose(out["a"], [0.9, 2.1], rtol=1e-6)
    assert out["a"].dtype == np.float32
    np.testing.assert_array_equal(params["a"], [1.0, 2.0])


def test_mismatched_gradients():
    with pytest.raises(ValueError, match="different names"):
        gd_step({"a": np.zeros(2)}, {"b": np.zeros(2)}, 0.1)
    with pytest.raises(ValueError, match="Shape mismatch"):
        adam_step(AdamState(), {"a": np.zeros(2)}, {"a": np.zeros(3)})


def test_adam_matches_reference():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    grads = [1.0, -2.0, 0.5, 0.25]
    state = AdamState.zeros({"w": np.zeros(1)}, lr=lr)
    params = {"w": np.zeros(1)}
    p, m, v = 0.0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        state, params = adam_step(state, params, {"w": np.array([g])})
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        np.testing.assert_allclose(params["w"], [p], rtol=1e-12)
    assert state.t == len(grads)


def test_adam_first_step_has_size_lr():
    params = {"w": np.array([5.0, -5.0, 5.0])}
    grads = {"w": np.array([1e-3, -40.0, 7.0])}
    state, new = adam_step(AdamState.zeros(params, lr=0.05), params, grads)
    np.testing.assert_allclose(new["w"], [4.95, -4.95, 4.95], rtol=1e-6)


def test_adam_does_not_modify_inputs():
    params = {"w": np.array([1.0])}
    state = AdamState.zeros(params)
    adam_step(state, params, {"w": np.array([1.0])})
    assert state.t == 0
    np.testing.assert_array_equal(state.m["w"], [0.0])
    np.testing.assert_array_equal(params["w"], [1.0])


def test_missing_moment_buffers_start_at_zero():
    params = {"w": np.array([1.0, 2.0])}
    grads = {"w": np.array([0.3, -0.1])}
    _, a = adam_step(AdamState(lr=0.1), params, grads)
    _, b = adam_step(AdamState.zeros(params, lr=0.1), params, grads)
    np.testing.assert_array_equal(a["w"], b["w"])


def test_adam_state_validation():
    with pytest.raises(ValueError):
        AdamState.zeros({}, beta1=1.0)


def test_adam_minimises_quadratic():
    opt = Adam(lr=0.1)
    params = {"w": np.array([0.0])}
    for _ in range(500):
        params = opt.step(params, {"w": 2 * (params["w"] - 3.0)})
    assert abs(params["w"][0] - 3.0) < 0.5
    assert opt.state.t == 500


def test_adam_lr_setter_keeps_moments():
    opt = Adam(lr=0.1)
    opt.step({"w": np.array([0.0])}, {"w": np.array([1.0])})
    m = opt.state.m["w"].copy()
    opt.lr = 0.05
    assert opt.lr == 0.05
    assert opt.state.t == 1
    np.testing.assert_array_equal(opt.state.m["w"], m)
    assert repr(opt) == "<deepelastica.Adam with lr=0.05 after 1 step>"


def test_constant_schedule():
    schedule = LrSchedule.constant(0.001)
    assert schedule.lr_at(0) == 0.001
    assert lr_at(schedule, 10 ** 6) == 0.001
    assert schedule.describe() == "0.001"


def test_step_decay():
    schedule = LrSchedule.step_decay(4e-5, every=20000, until=60000)
    assert schedule.lr_at(19999) == 4e-5
    assert schedule.lr_at(20000) == 2e-5
    assert schedule.lr_at(59999) == 1e-5
    assert schedule.lr_at(60000) == 1e-5
    assert schedule.describe() == "4e-05 x0.5@20000 x0.5@40000"
    assert len(LrSchedule.step_decay(1.0, every=10).milestones) == 9
    with pytest.raises(ValueError):
        LrSchedule.step_decay(1.0, every=0)
    with pytest.raises(ValueError):
        schedule.lr_at(-1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        LrSchedule(0.0)
    with pytest.raises(ValueError):
        LrSchedule(1.0, ((10, 0.5), (10, 0.5)))
    with pytest.raises(ValueError):
        LrSchedule(1.0, ((10, 1.5),))


def test_scaled_schedule():
    schedule = LrSchedule.step_decay(4e-5, every=20000, until=60000)
    assert schedule.scaled(0.5).milestones == ((10000, 0.5), (20000, 0.5))
    tiny = schedule.scaled(1 / 60000)
    assert tiny.milestones == ((1, 0.25),)
    assert tiny.lr_at(1) == 1e-5


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0], dtype=np.float32)}
    assert global_norm(grads) == 5.0
    clipped, norm = clip_by_global_norm(grads, 1.0)
    assert norm == 5.0
    np.testing.assert_allclose(clipped["a"], [0.6])
    np.testing.assert_allclose(clipped["b"], [0.8], rtol=1e-6)
    assert clipped["b"].dtype == np.float32
    unchanged, _ = clip_by_global_norm(grads, 10.0)
    np.testing.assert_array_equal(unchanged["a"], [3.0])
    with pytest.raises(ValueError):
        clip_by_global_norm(grads, 0.0)


def test_adam_zero_gradients_keep_parameters():
    params = {"w": np.random.default_rng(0).standard_normal((3, 4)), "b": np.array([0.5])}
    opt = Adam(lr=0.1)
    p = params
    for _ in range(100):
        p = opt.step(p, {k: np.zeros_like(v) for k, v in p.items()})
    for name, value in params.items():
        np.testing.assert_array_equal(p[name], value)


def test_adam_steps_are_bounded_by_lr():
    rng = np.random.default_rng(1)
    lr = 0.01
    opt = Adam(lr=lr)
    p = {"w": rng.standard_normal(10)}
    for _ in range(100):
        new = opt.step(p, {"w": rng.uniform(-1.0, 1.0, size=10)})
        assert np.all(np.abs(new["w"] - p["w"]) <= lr * 1.1)
        p = new


def test_adam_step_opposes_gradient():
    rng = np.random.default_rng(2)
    g = rng.standard_normal(200)
    p = {"w": rng.standard_normal(200)}
    _, new = adam_step(AdamState.zeros(p, lr=0.01), p, {"w": g})
    np.testing.assert_array_equal(np.sign(new["w"] - p["w"]), -np.sign(g))

    signs = np.where(rng.uniform(size=20) < 0.5, -1.0, 1.0)
    opt = Adam(lr=0.01)
    p = {"w": rng.standard_normal(20)}
    for _ in range(50):
        new = opt.step(p, {"w": signs * rng.uniform(0.1, 2.0, size=20)})
        np.testing.assert_array_equal(np.sign(new["w"] - p["w"]), -signs)
        p = new


def test_gd_step_is_linear():
    rng = np.random.default_rng(3)
    p = {"w": rng.standard_normal(8)}
    g1 = {"w": rng.standard_normal(8)}
    g2 = {"w": rng.standard_normal(8)}

    def delta(grads, lr):
        return gd_step(p, grads, lr)["w"] - p["w"]

    np.testing.assert_allclose(delta(g1, 0.3), 3 * delta(g1, 0.1), rtol=1e-12, atol=1e-14)
    both = {"w": g1["w"] + g2["w"]}
    np.testing.assert_allclose(delta(both, 0.2), delta(g1, 0.2) + delta(g2, 0.2), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("schedule", [
    LrSchedule.step_decay(0.001, every=7, factor=0.5, until=70),
    LrSchedule.step_decay(0.00004, every=20000, until=60000),
    LrSchedule(0.01, ((3, 0.9), (10, 1.0), (11, 0.2), (50, 0.75))),
])
def test_lr_never_increases(schedule):
    last = max(it for it, _ in schedule.milestones)
    iterations = sorted(set(range(0, 2 * last, max(1, last // 200))) | {it for it, _ in schedule.milestones})
    rates = [schedule.lr_at(it) for it in iterations]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert rates[0] == schedule.initial
