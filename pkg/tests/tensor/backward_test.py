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

from deepelastica.tensor import Tensor, parameter, backward, zero_grad, sigmoid, square, conv2d, TapeNode


def test_shared_subexpression():
    x = parameter(np.array([1.0, 3.0]))
    y = x * x
    z = y + y * 2.0
    z.sum().backward()
    np.testing.assert_allclose(x.grad, 6 * x.data)


def test_diamond_graph_visits_each_node_once():
    x = parameter(np.array([2.0]))
    a = sigmoid(x)
    b = a * 3.0
    c = a * a
    (b + c).sum().backward()
    s = 1 / (1 + np.exp(-2.0))
    np.testing.assert_allclose(x.grad, (3 + 2 * s) * s * (1 - s))


def test_gradients_accumulate_across_losses():
    x = parameter(np.array([1.0, 1.0]))
    (x * 2.0).sum().backward()
    (x * 3.0).sum().backward()
    np.testing.assert_allclose(x.grad, [5.0, 5.0])
    x.zero_grad()
    assert x.grad is None


def test_leaf_loss():
    x = parameter(3.0)
    x.backward()
    assert float(x.grad) == 1.0


def test_backward_errors():
    x = parameter(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        backward(x * 2.0)
    with pytest.raises(RuntimeError):
        backward(Tensor(1.0))
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(RuntimeError, match="already called"):
        loss.backward()


def test_zero_grad_allows_second_pass():
    x = parameter(np.array([1.0, 2.0]))
    loss = (x * x).sum()
    loss.backward()
    zero_grad(loss)
    assert x.grad is None
    loss.backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_constants_receive_no_gradient():
    x = parameter(np.array([1.0]))
    c = Tensor(np.array([2.0]))
    (x * c).sum().backward()
    assert c.grad is None
    assert not c.requires_grad


def test_tape_node():
    x = parameter(np.array([1.0]))
    y = x * 2.0
    assert not y.is_leaf
    assert isinstance(y._node, TapeNode)
    assert y._node.op == "mul"
    assert repr(y._node) == "<TapeNode mul with 2 inputs>"


def _first(x):
    return (sigmoid(x) * Tensor(np.linspace(-1.0, 2.0, 36).reshape(1, 6, 6))).sum()


def _second(x):
    k = Tensor(np.arange(9.0).reshape(1, 1, 3, 3) / 10)
    return (square(conv2d(x, k, dilation=2)) * x).sum()


def _gradient(loss, data):
    x = parameter(data.copy())
    loss(x).backward()
    return x.grad


def test_backward_is_linear_in_the_loss():
    data = np.random.default_rng(5).standard_normal((1, 6, 6))
    both = _gradient(lambda x: _first(x) + _second(x), data)
    separate = _gradient(_first, data) + _gradient(_second, data)
    np.testing.assert_allclose(both, separate, rtol=1e-12, atol=1e-12)
    scaled = _gradient(lambda x: _second(x) * 3.0, data)
    np.testing.assert_allclose(scaled, 3.0 * _gradient(_second, data), rtol=1e-12)


def test_forward_and_backward_are_deterministic():
    data = np.random.default_rng(6).standard_normal((1, 6, 6))
    values = [_second(Tensor(data)).item() for _ in range(2)]
    assert values[0] == values[1]
    np.testing.assert_array_equal(_gradient(_second, data), _gradient(_second, data))
