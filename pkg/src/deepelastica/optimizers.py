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

"""Gradient descent, Adam and step-decay learning-rate schedules.

Parameters and gradients are dictionaries from names to numpy arrays. The update rules
return new dictionaries and never modify their inputs.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

Arrays = Mapping[str, np.ndarray]


def _check_pairs(params: Arrays, grads: Arrays) -> None:
    if set(params) != set(grads):
        raise ValueError("Parameters and gradients have different names: {} and {}".format(
            sorted(params), sorted(grads)))
    for name, p in params.items():
        if np.shape(p) != np.shape(grads[name]):
            raise ValueError("Shape mismatch for '{}': parameter {} but gradient {}".format(
                name, np.shape(p), np.shape(grads[name])))


def gd_step(params: Arrays, grads: Arrays, lr: float) -> Dict[str, np.ndarray]:
    """
    One step of plain gradient descent, `p - lr * g` for every parameter.

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.optimizers import gd_step
    >>> float(gd_step({"p": np.array(1.0)}, {"p": np.array(2.0)}, 0.1)["p"])
    0.8
    """
    _check_pairs(params, grads)
    out = {}
    for name, p in params.items():
        p = np.asarray(p)
        out[name] = (p - lr * np.asarray(grads[name])).astype(p.dtype, copy=False)
    return out


@dataclass
class AdamState:
    """
    Moment estimates of Adam.

    Parameters
    ----------
    lr : float
        Learning rate
    beta1, beta2 : float
        Decay rates of the first and second moment estimates, by default 0.9 and 0.999
    eps : float
        Stabiliser added to the root of the second moment, by default 1e-8
    t : int
        Number of steps taken
    m, v : dict of str to numpy.ndarray
        First and second moment estimates, one buffer per parameter
    """
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, params: Arrays, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> "AdamState":
        """A fresh state with zero moments for every parameter"""
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in [0, 1), got {} and {}".format(beta1, beta2))
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0,
                   m={k: np.zeros_like(np.asarray(p)) for k, p in params.items()},
                   v={k: np.zeros_like(np.asarray(p)) for k, p in params.items()})


def adam_step(state: AdamState, params: Arrays, grads: Arrays) -> Tuple[AdamState, Dict[str, np.ndarray]]:
    """
    One bias-corrected Adam step.

    Parameters
    ----------
    state : AdamState
        The current moment estimates. Parameters without a moment buffer start from zero
    params : dict of str to numpy.ndarray
        Current parameters
    grads : dict of str to numpy.ndarray
        Gradients, with the same names and shapes as `params`

    Returns
    -------
    state : AdamState
        The new moment estimates, with `t` incremented
    params : dict of str to numpy.ndarray
        The updated parameters

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.optimizers import AdamState, adam_step
    >>> p = {"w": np.array(0.0)}
    >>> state, p = adam_step(AdamState.zeros(p, lr=0.001), p, {"w": np.array(1.0)})
    >>> state.t, round(float(p["w"]), 9)
    (1, -0.001)
    """
    _check_pairs(params, grads)
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1 - b1 ** t
    correction2 = 1 - b2 ** t
    new_m, new_v, new_params = {}, {}, {}
    for name, p in params.items():
        p = np.asarray(p)
        g = np.asarray(grads[name])
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = (b1 * m + (1 - b1) * g).astype(p.dtype, copy=False)
        v = (b2 * v + (1 - b2) * g * g).astype(p.dtype, copy=False)
        step = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new_params[name] = (p - step).astype(p.dtype, copy=False)
        new_m[name] = m
        new_v[name] = v
    return replace(state, t=t, m=new_m, v=new_v), new_params


class Adam:
    """
    The Adam optimiser as a stateful object around `adam_step`.

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica import Adam
    >>> opt = Adam(lr=0.1)
    >>> p = {"w": np.array([1.0, -1.0])}
    >>> p = opt.step(p, {"w": np.array([2.0, -3.0])})
    >>> p["w"]
    array([ 0.9, -0.9])
    >>> opt
    <deepelastica.Adam with lr=0.1 after 1 step>
    """

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 state: Optional[AdamState] = None):
        self.state = state if state is not None else AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state = replace(self.state, lr=value)

    def step(self, params: Arrays, grads: Arrays) -> Dict[str, np.ndarray]:
        self.state, params = adam_step(self.state, params, grads)
        return params

    def __repr__(self) -> str:
        return "<deepelastica.Adam with lr={} after {} step{}>".format(
            self.state.lr, self.state.t, "s" if self.state.t != 1 else "")


@dataclass(frozen=True)
class LrSchedule:
    """
    A learning rate that is multiplied by fixed factors at milestone iterations.

    Parameters
    ----------
    initial : float
        The learning rate at iteration 0, positive
    milestones : sequence of (int, float)
        Pairs `(iteration, multiplier)` with strictly increasing iterations and multipliers
        in (0, 1]. From `iteration` on, the rate includes the factor `multiplier`

    Examples
    --------
    >>> from deepelastica import LrSchedule
    >>> schedule = LrSchedule.step_decay(0.00004, every=20000, until=60000)
    >>> schedule.milestones
    ((20000, 0.5), (40000, 0.5))
    >>> schedule.lr_at(25000)
    2e-05
    """
    initial: float
    milestones: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self):
        if not self.initial > 0:
            raise ValueError("The initial learning rate must be positive, not {}".format(self.initial))
        milestones = tuple((int(it), float(mult)) for it, mult in self.milestones)
        object.__setattr__(self, "milestones", milestones)
        iterations = [it for it, _ in milestones]
        if any(b <= a for a, b in zip(iterations, iterations[1:])) or any(it < 0 for it in iterations):
            raise ValueError("Milestone iterations must be non-negative and strictly increasing, "
                             "not {}".format(iterations))
        if any(not 0 < mult <= 1 for _, mult in milestones):
            raise ValueError("Milestone multipliers must lie in (0, 1], not {}".format(
                [mult for _, mult in milestones]))

    @classmethod
    def constant(cls, lr: float) -> "LrSchedule":
        return cls(lr)

    @classmethod
    def step_decay(cls, initial: float, every: int, factor: float = 0.5,
                   until: Optional[int] = None) -> "LrSchedule":
        """
        Multiply the rate by `factor` every `every` iterations, for milestones before `until`.
        """
        if every < 1:
            raise ValueError("every must be at least 1, not {}".format(every))
        if until is None:
            until = 10 * every
        return cls(initial, tuple((it, factor) for it in range(every, until, every)))

    def lr_at(self, iteration: int) -> float:
        """The learning rate in effect at `iteration`"""
        if iteration < 0:
            raise ValueError("iteration must be non-negative, not {}".format(iteration))
        lr = self.initial
        for it, mult in self.milestones:
            if iteration >= it:
                lr *= mult
        return lr

    def scaled(self, factor: float) -> "LrSchedule":
        """
        The same schedule with milestone iterations multiplied by `factor` (at least 1).
        Milestones that land on the same iteration are merged into one.
        """
        merged: Dict[int, float] = {}
        for it, mult in self.milestones:
            it = max(1, int(round(it * factor)))
            merged[it] = merged.get(it, 1.0) * mult
        return LrSchedule(self.initial, tuple(merged.items()))

    def describe(self) -> str:
        if not self.milestones:
            return repr(self.initial)
        return "{} {}".format(self.initial, " ".join("x{}@{}".format(m, it) for it, m in self.milestones))


def lr_at(schedule: LrSchedule, iteration: int) -> float:
    return schedule.lr_at(iteration)


def global_norm(grads: Arrays) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_by_global_norm(grads: Arrays, max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Rescale all gradients together so that their joint Euclidean norm is at most `max_norm`.

    Returns
    -------
    grads : dict of str to numpy.ndarray
        The (possibly rescaled) gradients
    norm : float
        The norm before clipping
    """
    if not max_norm > 0:
        raise ValueError("max_norm must be positive, not {}".format(max_norm))
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    return {k: (np.asarray(g) * scale).astype(np.asarray(g).dtype, copy=False) for k, g in grads.items()}, norm

