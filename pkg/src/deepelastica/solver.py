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

"""Minimisation of the elastica energy, directly on the pixels or through a network.

In deep-prior mode the image is the output of a network whose weights are optimised.
Every iteration runs the network on a fixed input, overwrites the known pixels with the
given data (remasking), evaluates the energy on the inpainting domain, backpropagates to
the weights and takes an optimiser step. Direct mode optimises the pixel values of the
inpainting domain themselves.
"""

import csv
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import median_filter
from tqdm import tqdm

from deepelastica.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from deepelastica.energy import ElasticaParams, elastica_loss
from deepelastica.image_io import as_image, as_mask, mae
from deepelastica.networks import NetworkSpec, build, default_network_spec, pad_to_multiple
from deepelastica.optimizers import AdamState, LrSchedule, adam_step, clip_by_global_norm, gd_step
from deepelastica.tensor import Tensor, backward, crop, parameter, reshape

logger = logging.getLogger(__name__)

MODES = ("deep-prior", "direct")
INITS = ("uniform-noise", "mean-grey", "constant")
OPTIMIZERS = ("adam", "gd")
TASKS = ("natural", "shape")

PathLike = Union[str, os.PathLike]


class DivergenceError(RuntimeError):
    """
    Raised when the energy becomes non-finite.

    Attributes
    ----------
    iteration : int
        The iteration whose energy was not finite
    record : RunRecord
        The metrics logged up to that point
    last_finite_image : numpy.ndarray or None
        The reported image of the last iteration with a finite energy
    """

    def __init__(self, message: str, iteration: int, record: "RunRecord",
                 last_finite_image: Optional[np.ndarray]):
        super().__init__(message)
        self.iteration = iteration
        self.record = record
        self.last_finite_image = last_finite_image


@dataclass(frozen=True)
class SolverConfig:
    """
    Configuration of a solver run.

    Parameters
    ----------
    mode : str
        "deep-prior" (optimise network weights) or "direct" (optimise pixels). By default
        "deep-prior"
    params : ElasticaParams
        Energy parameters
    network : NetworkSpec, optional
        Architecture for deep-prior mode. By default `default_network_spec` for the image
        shape and `task`. Ignored in direct mode
    schedule : LrSchedule
        Learning rate schedule, by default a constant 0.001
    max_iterations : int
        Number of update steps, at least 1. By default 6000
    init : str
        Fill of the inpainting domain in the first image: "uniform-noise" (uniform in
        [0, 1]), "mean-grey" (mean of the known pixels) or "constant" (`init_value`)
    init_value : float
        Grey value of the "constant" fill, by default 0.5
    seed : int
        Seed of the network initialisation and of the noise fill, by default 0
    checkpoint_every : int
        Write a checkpoint every this many iterations when a checkpoint directory is given.
        0 (the default) disables periodic checkpoints
    log_every : int
        Record metrics (and log at INFO level) every this many iterations, by default 100
    b_sweep : tuple of float
        Values of `b` tried by `sweep_b` when none are passed explicitly
    optimizer : str
        "adam" (default) or "gd" for plain gradient descent
    clip_norm : float, optional
        Clip gradients to this global norm. Off by default
    dtype : str
        "float32" (default) or "float64"
    task : str
        "natural" or "shape", selects the default network
    """
    mode: str = "deep-prior"
    params: ElasticaParams = field(default_factory=ElasticaParams)
    network: Optional[NetworkSpec] = None
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(0.001))
    max_iterations: int = 6000
    init: str = "uniform-noise"
    init_value: float = 0.5
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 100
    b_sweep: Tuple[float, ...] = ()
    optimizer: str = "adam"
    clip_norm: Optional[float] = None
    dtype: str = "float32"
    task: str = "natural"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError("Unknown mode '{}'. Expected one of {}".format(self.mode, MODES))
        if self.init not in INITS:
            raise ValueError("Unknown init '{}'. Expected one of {}".format(self.init, INITS))
        if self.optimizer not in OPTIMIZERS:
            raise ValueError("Unknown optimizer '{}'. Expected one of {}".format(self.optimizer, OPTIMIZERS))
        if self.task not in TASKS:
            raise ValueError("Unknown task '{}'. Expected one of {}".format(self.task, TASKS))
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64', not '{}'".format(self.dtype))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1, not {}".format(self.max_iterations))
        if self.log_every < 1:
            raise ValueError("log_every must be at least 1, not {}".format(self.log_every))
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be non-negative, not {}".format(self.checkpoint_every))
        if not 0 <= self.init_value <= 1:
            raise ValueError("init_value must lie in [0, 1], not {}".format(self.init_value))
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive, not {}".format(self.clip_norm))
        object.__setattr__(self, "b_sweep", tuple(float(b) for b in self.b_sweep))

    def resolved_network(self, shape: Tuple[int, int]) -> NetworkSpec:
        """The configured network, or the default one for an image of this shape"""
        if self.network is not None:
            return self.network
        return default_network_spec(shape, self.task)

    def with_b(self, b: float) -> "SolverConfig":
        return replace(self, params=replace(self.params, b=b))

    def scaled_to(self, max_iterations: int) -> "SolverConfig":
        """The same run compressed or stretched to `max_iterations`, milestones scaled along"""
        factor = max_iterations / self.max_iterations
        return replace(self, max_iterations=max_iterations, schedule=self.schedule.scaled(factor))

    def to_manifest(self, shape: Optional[Tuple[int, int]] = None, **extra) -> str:
        """
        Every setting as sorted `key = value` lines, with nested settings flattened to
        dotted keys. With `shape`, the network that deep-prior mode would use is included
        even when it is not configured explicitly.

        Examples
        --------
        >>> from deepelastica import SolverConfig
        >>> print(SolverConfig(mode="direct", max_iterations=10).to_manifest().splitlines()[0])
        b_sweep = ()
        """
        values = {}
        config = self
        if shape is not None and self.mode == "deep-prior":
            config = replace(self, network=self.resolved_network(shape))
        for f in fields(config):
            _flatten(f.name, getattr(config, f.name), values)
        for key, value in extra.items():
            values[key] = value
        return "".join("{} = {}\n".format(k, _format_value(values[k])) for k in sorted(values))


def _flatten(prefix: str, value, out: Dict[str, object]) -> None:
    if is_dataclass(value):
        for f in fields(value):
            _flatten(prefix + "." + f.name, getattr(value, f.name), out)
    else:
        out[prefix] = value


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def paper_natural(**overrides) -> SolverConfig:
    """Natural-image inpainting: b=0.175, epsilon=0.005, Adam with lr 0.001, noise fill"""
    settings = dict(mode="deep-prior", params=ElasticaParams(b=0.175, epsilon=0.005),
                    schedule=LrSchedule(0.001), max_iterations=6000, init="uniform-noise",
                    task="natural", b_sweep=(0.05, 0.1, 0.175, 0.25))
    settings.update(overrides)
    return SolverConfig(**settings)


def paper_shape(**overrides) -> SolverConfig:
    """Shape completion: b=0.001, epsilon=0.0001, Adam with lr 0.00005, gap filled with 0.5"""
    settings = dict(mode="deep-prior", params=ElasticaParams(b=0.001, epsilon=0.0001),
                    schedule=LrSchedule(0.00005), max_iterations=20000, init="constant",
                    init_value=0.5, task="shape", b_sweep=(0.0001, 0.0005, 0.001, 0.02))
    settings.update(overrides)
    return SolverConfig(**settings)


def paper_ablation(**overrides) -> SolverConfig:
    """
    Energy with and without the network: b=0.001, epsilon=0.0001, lr 0.00004 halved every
    20,000 of 60,000 iterations, mean-grey fill. Direct mode uses plain gradient descent.
    """
    settings = dict(mode="deep-prior", params=ElasticaParams(b=0.001, epsilon=0.0001),
                    schedule=LrSchedule.step_decay(0.00004, every=20000, factor=0.5, until=60000),
                    max_iterations=60000, init="mean-grey", task="shape")
    settings.update(overrides)
    if "optimizer" not in overrides:
        settings["optimizer"] = "gd" if settings["mode"] == "direct" else "adam"
    return SolverConfig(**settings)


PRESETS: Dict[str, Callable[..., SolverConfig]] = {
    "paper-natural": paper_natural,
    "paper-shape": paper_shape,
    "paper-ablation": paper_ablation,
}


RECORD_COLUMNS = ("iteration", "energy", "mae_inpaint", "mae_full", "lr")


@dataclass
class RunRecord:
    """
    Metrics of a run, one row per logged iteration.

    MAE columns hold NaN when no ground truth was given. The best-MAE fields follow every
    iteration, not only the logged ones.
    """
    iterations: List[int] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    mae_inpaint: List[float] = field(default_factory=list)
    mae_full: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    best_iteration: Optional[int] = None
    best_mae: Optional[float] = None
    best_image: Optional[np.ndarray] = None
    initial_image: Optional[np.ndarray] = None

    def append(self, iteration: int, energy: float, mae_inpaint: float, mae_full: float, lr: float) -> None:
        self.iterations.append(int(iteration))
        self.energies.append(float(energy))
        self.mae_inpaint.append(float(mae_inpaint))
        self.mae_full.append(float(mae_full))
        self.lrs.append(float(lr))

    def __len__(self) -> int:
        return len(self.iterations)

    @property
    def final_energy(self) -> float:
        if not self.energies:
            raise ValueError("The record is empty")
        return self.energies[-1]

    def columns(self) -> Dict[str, np.ndarray]:
        return {
            "iteration": np.array(self.iterations, dtype=np.int64),
            "energy": np.array(self.energies, dtype=np.float64),
            "mae_inpaint": np.array(self.mae_inpaint, dtype=np.float64),
            "mae_full": np.array(self.mae_full, dtype=np.float64),
            "lr": np.array(self.lrs, dtype=np.float64),
        }

    @classmethod
    def from_columns(cls, columns: Dict[str, np.ndarray]) -> "RunRecord":
        record = cls()
        for row in zip(*(columns[k].tolist() for k in RECORD_COLUMNS)):
            record.append(*row)
        return record

    def to_csv(self, path: PathLike) -> None:
        """Write the rows with the header `iteration,energy,mae_inpaint,mae_full,lr`"""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(RECORD_COLUMNS)
            for row in zip(self.iterations, self.energies, self.mae_inpaint, self.mae_full, self.lrs):
                writer.writerow([row[0]] + [repr(v) for v in row[1:]])

    def filtered_energy(self, window: int = 101) -> np.ndarray:
        """The energy series with spikes removed by a running median of `window` rows"""
        if window < 1:
            raise ValueError("window must be at least 1, not {}".format(window))
        energies = np.array(self.energies, dtype=np.float64)
        if energies.size == 0:
            return energies
        return median_filter(energies, size=window, mode="nearest")

    def draw(self, ax=None) -> None:
        """Plot energy and MAE against the iteration on logarithmic axes using matplotlib

        Note that you may need to call `plt.figure()` before and `plt.show()` after calling
        this function.
        """
        import matplotlib.pyplot as plt

        if ax is None:
            ax = plt.gca()
        it = np.array(self.iterations)
        ax.plot(it, self.energies, color="#bfbfbf", linewidth=0.5)
        ax.plot(it, self.filtered_energy(), color="k", label="energy")
        ax.set_xlabel("iteration")
        ax.set_ylabel("energy")
        ax.set_yscale("log")
        mae_values = np.array(self.mae_inpaint)
        if np.any(np.isfinite(mae_values)):
            twin = ax.twinx()
            twin.plot(it, mae_values, color="tab:red", label="MAE")
            twin.set_ylabel("MAE")
            if self.best_iteration is not None:
                twin.axvline(self.best_iteration, color="tab:red", linestyle=":")

    def __repr__(self) -> str:
        return "<deepelastica.RunRecord with {} row{}{}>".format(
            len(self), "s" if len(self) != 1 else "",
            ", best MAE {:.4g} at iteration {}".format(self.best_mae, self.best_iteration)
            if self.best_iteration is not None else "")


class RunResult(NamedTuple):
    record: RunRecord
    final_image: np.ndarray
    best_image: Optional[np.ndarray]


class SweepResult(NamedTuple):
    table: List[Tuple[float, float]]
    best_b: float
    best_run: RunResult


def remask(u, f, c) -> Tensor:
    """
    Overwrite the known pixels of `u` with the data: `c * f + (1 - c) * u`.

    Gradients with respect to `u` vanish exactly on known pixels.

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.solver import remask
    >>> remask(np.zeros((1, 2)), np.ones((1, 2)), np.array([[1, 0]])).numpy()
    array([[1., 0.]])
    """
    u = u if isinstance(u, Tensor) else Tensor(as_image(u, check_range=False))
    f = as_image(f, check_range=False)
    c = as_mask(c)
    if not u.shape == f.shape == c.shape:
        raise ValueError("remask needs equal shapes, got u {}, f {} and c {}".format(u.shape, f.shape, c.shape))
    return u * Tensor(1.0 - c, dtype=u.dtype) + Tensor(c * f, dtype=u.dtype)


def initial_image(f: np.ndarray, c: np.ndarray, config: SolverConfig) -> np.ndarray:
    """
    The data with the inpainting domain filled according to `config.init`.

    The noise fill is drawn from a generator seeded with `config.seed`, independently of
    the network initialisation.
    """
    if config.init == "uniform-noise":
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1,)))
        fill = rng.uniform(0.0, 1.0, size=f.shape)
    elif config.init == "mean-grey":
        known = c == 1
        fill = np.full(f.shape, float(np.mean(f[known])) if known.any() else 0.5)
    else:
        fill = np.full(f.shape, config.init_value)
    return np.where(c == 1, f, fill)


def _prepare(f, c, ground_truth) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    f = np.asarray(as_image(f), dtype=np.float64)
    c = as_mask(c, f.shape)
    if ground_truth is not None:
        ground_truth = np.asarray(as_image(ground_truth), dtype=np.float64)
        if ground_truth.shape != f.shape:
            raise ValueError("Ground truth of shape {} does not match the image of shape {}".format(
                ground_truth.shape, f.shape))
    if min(f.shape) < 3:
        raise ValueError("Images must be at least 3x3 pixels, not {}x{}".format(*f.shape))
    return f, c, ground_truth


def _warn_schedule(config: SolverConfig) -> None:
    late = [it for it, _ in config.schedule.milestones if it >= config.max_iterations]
    if late:
        warnings.warn("The learning rate milestones {} lie beyond the {} iterations of the run and have "
                      "no effect".format(late, config.max_iterations))
    if config.clip_norm is not None:
        warnings.warn("Gradient clipping to norm {} is enabled. This suppresses the gradient spikes of "
                      "the curvature term".format(config.clip_norm))


class _Run:
    """The loop shared by both modes"""

    def __init__(self, f, c, ground_truth, config: SolverConfig, params: Dict[str, np.ndarray],
                 forward: Callable[[Dict[str, Tensor]], Tensor], network: Optional[NetworkSpec],
                 checkpoint_dir: Optional[PathLike], progress: bool):
        self.f, self.c, self.truth = f, c, ground_truth
        self.config = config
        self.params = params
        self.forward = forward
        self.network = network
        self.checkpoint_dir = checkpoint_dir
        self.progress = progress
        self.domain = c == 0
        self.record = RunRecord()
        self.start = 0
        self.adam = AdamState.zeros(params, lr=config.schedule.initial) if config.optimizer == "adam" else None
        self.last_finite_image = None

    def resume(self, checkpoint: Checkpoint) -> None:
        if checkpoint.mode != self.config.mode:
            raise ValueError("Cannot resume a {} run from a {} checkpoint".format(self.config.mode, checkpoint.mode))
        if set(checkpoint.params) != set(self.params):
            raise ValueError("The checkpoint parameters {} do not match the run parameters {}".format(
                sorted(checkpoint.params), sorted(self.params)))
        if (checkpoint.adam is None) != (self.adam is None):
            raise ValueError("The checkpoint was written with a different optimizer")
        if checkpoint.iteration > self.config.max_iterations:
            raise ValueError("The checkpoint is at iteration {}, beyond the {} iterations of the run".format(
                checkpoint.iteration, self.config.max_iterations))
        self.params = dict(checkpoint.params)
        self.adam = checkpoint.adam
        self.record = RunRecord.from_columns(checkpoint.record) if checkpoint.record else RunRecord()
        self.record.best_iteration = checkpoint.best_iteration
        self.record.best_mae = checkpoint.best_mae
        self.record.best_image = checkpoint.best_image
        self.start = checkpoint.iteration
        logger.info("Resuming at iteration %d", self.start)

    def _evaluate(self, leaves: Dict[str, Tensor]) -> Tuple[Tensor, Tensor]:
        u = remask(self.forward(leaves), self.f, self.c)
        return u, elastica_loss(u, self.c, self.config.params)

    def _reported(self, u: Tensor) -> np.ndarray:
        return np.where(self.c == 1, self.f, u.data.astype(np.float64))

    def _observe(self, iteration: int, energy: float, image: np.ndarray, lr: float) -> None:
        if not np.isfinite(energy):
            raise DivergenceError("The energy became {} at iteration {}".format(energy, iteration),
                                  iteration, self.record, self.last_finite_image)
        self.last_finite_image = image
        err_inpaint = err_full = float("nan")
        if self.truth is not None:
            err_full = mae(image, self.truth)
            err_inpaint = mae(image, self.truth, self.domain) if self.domain.any() else 0.0
            if self.record.best_mae is None or err_inpaint < self.record.best_mae:
                self.record.best_mae = err_inpaint
                self.record.best_iteration = iteration
                self.record.best_image = image
        logged = bool(self.record.iterations) and self.record.iterations[-1] == iteration
        if not logged and (iteration % self.config.log_every == 0 or iteration == self.config.max_iterations):
            self.record.append(iteration, energy, err_inpaint, err_full, lr)
            logger.info("iteration %d: energy %.6g, mae %.4g, lr %.3g", iteration, energy, err_inpaint, lr)

    def _save(self, name: str, iteration: int) -> None:
        if self.checkpoint_dir is None:
            return
        os.makedirs(self.checkpoint_dir, exist_ok=True)
        save_checkpoint(os.path.join(self.checkpoint_dir, name), Checkpoint(
            params=self.params, iteration=iteration, seed=self.config.seed, mode=self.config.mode,
            network=self.network, adam=self.adam, record=self.record.columns(),
            best_image=self.record.best_image, best_iteration=self.record.best_iteration,
            best_mae=self.record.best_mae, manifest=self.config.to_manifest()))

    def _update(self, grads: Dict[str, np.ndarray], lr: float) -> None:
        if self.config.clip_norm is not None:
            grads, norm = clip_by_global_norm(grads, self.config.clip_norm)
            if norm > self.config.clip_norm:
                logger.debug("Clipped gradient norm %.4g to %.4g", norm, self.config.clip_norm)
        if self.adam is None:
            self.params = gd_step(self.params, grads, lr)
        else:
            self.adam, self.params = adam_step(replace(self.adam, lr=lr), self.params, grads)

    def run(self) -> RunResult:
        config = self.config
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for iteration in tqdm(range(self.start, config.max_iterations), disable=not self.progress,
                                  desc=config.mode, initial=self.start, total=config.max_iterations):
                lr = config.schedule.lr_at(iteration)
                leaves = {k: parameter(v) for k, v in self.params.items()}
                u, loss = self._evaluate(leaves)
                image = self._reported(u)
                if iteration == 0:
                    self.record.initial_image = image
                self._observe(iteration, loss.item(), image, lr)
                backward(loss)
                self._update({k: leaves[k].grad for k in self.params}, lr)
                done = iteration + 1
                if config.checkpoint_every and done % config.checkpoint_every == 0:
                    self._save("iteration_{:07d}.npz".format(done), done)
            u, loss = self._evaluate({k: Tensor(v) for k, v in self.params.items()})
            final = self._reported(u)
            self._observe(config.max_iterations, loss.item(), final, config.schedule.lr_at(config.max_iterations))
        self._save("final.npz", config.max_iterations)
        return RunResult(self.record, final, self.record.best_image)


def _start(run: _Run, resume: Optional[Union[Checkpoint, PathLike]]) -> RunResult:
    if resume is not None:
        run.resume(resume if isinstance(resume, Checkpoint) else load_checkpoint(resume))
    _warn_schedule(run.config)
    return run.run()


def run_deep_prior(f, c, config: SolverConfig, ground_truth=None, *,
                   checkpoint_dir: Optional[PathLike] = None,
                   resume: Optional[Union[Checkpoint, PathLike]] = None,
                   progress: bool = False) -> RunResult:
    """
    Inpaint by optimising the weights of a network whose remasked output minimises the energy.

    Parameters
    ----------
    f : numpy.ndarray
        The image of shape `(H, W)` with values in [0, 1]. Only known pixels are used
    c : numpy.ndarray
        Binary mask of the same shape, 1 for known pixels
    config : SolverConfig
        Run configuration with `mode="deep-prior"`
    ground_truth : numpy.ndarray, optional
        The complete image. When given, the MAE is tracked every iteration and the image
        with the lowest MAE on the inpainting domain is kept
    checkpoint_dir : str or os.PathLike, optional
        Directory for periodic checkpoints (see `SolverConfig.checkpoint_every`) and for
        `final.npz`, the state after the last iteration
    resume : Checkpoint or path, optional
        Continue a run from a checkpoint. The continued run is identical to an
        uninterrupted one
    progress : bool, optional
        Show a progress bar, by default False

    Returns
    -------
    RunResult
        The record, the final image and the best-MAE image (None without ground truth).
        Known pixels of the images equal `f` exactly

    Raises
    ------
    DivergenceError
        If the energy becomes non-finite

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica import NetworkSpec, SolverConfig, run_deep_prior
    >>> f = np.full((8, 8), 0.5)
    >>> config = SolverConfig(network=NetworkSpec(scales=2, base_channels=2), max_iterations=2)
    >>> result = run_deep_prior(f, np.ones((8, 8)), config)
    >>> result.record.energies
    [0.0, 0.0]
    """
    if config.mode != "deep-prior":
        raise ValueError("run_deep_prior needs mode 'deep-prior', not '{}'".format(config.mode))
    f, c, ground_truth = _prepare(f, c, ground_truth)
    height, width = f.shape
    spec = config.resolved_network(f.shape)
    dtype = np.dtype(config.dtype)
    net = build(spec, seed=config.seed, dtype=dtype)
    logger.info("Deep-prior run on a %dx%d image with %r", height, width, net)
    x = Tensor(pad_to_multiple(np.stack([initial_image(f, c, config), c]), spec.divisor), dtype=dtype)

    def forward(leaves):
        out = crop(net.forward(x, leaves), height, width)
        return reshape(out, (height, width))

    run = _Run(f, c, ground_truth, config, dict(net.params), forward, spec, checkpoint_dir, progress)
    return _start(run, resume)


def run_direct(f, c, config: SolverConfig, ground_truth=None, *,
               checkpoint_dir: Optional[PathLike] = None,
               resume: Optional[Union[Checkpoint, PathLike]] = None,
               progress: bool = False) -> RunResult:
    """
    Inpaint by optimising the pixel values of the inpainting domain directly.

    The parameters and return value are those of `run_deep_prior`, with `mode="direct"`.
    With `optimizer="gd"` every step is `u - lr * grad E(u)`. Known pixels never change.
    """
    if config.mode != "direct":
        raise ValueError("run_direct needs mode 'direct', not '{}'".format(config.mode))
    f, c, ground_truth = _prepare(f, c, ground_truth)
    dtype = np.dtype(config.dtype)
    logger.info("Direct run on a %dx%d image", *f.shape)
    params = {"u": initial_image(f, c, config).astype(dtype)}
    run = _Run(f, c, ground_truth, config, params, lambda leaves: leaves["u"], None, checkpoint_dir, progress)
    return _start(run, resume)


def run(f, c, config: SolverConfig, ground_truth=None, **kwargs) -> RunResult:
    """Dispatch to `run_deep_prior` or `run_direct` according to `config.mode`"""
    solve = run_deep_prior if config.mode == "deep-prior" else run_direct
    return solve(f, c, config, ground_truth, **kwargs)


def sweep_b(f, c, ground_truth, config: SolverConfig, b_values: Optional[Sequence[float]] = None, *,
            max_workers: Optional[int] = None, progress: bool = False) -> SweepResult:
    """
    Run once per value of `b` and pick the value with the lowest best MAE.

    Parameters
    ----------
    f, c : numpy.ndarray
        Image and mask
    ground_truth : numpy.ndarray
        The complete image, required
    config : SolverConfig
        Configuration shared by all runs
    b_values : sequence of float, optional
        By default `config.b_sweep`
    max_workers : int, optional
        Run up to this many runs in parallel threads. By default the runs are sequential.
        Results do not depend on the number of workers
    progress : bool, optional
        Show a progress bar over the runs

    Returns
    -------
    SweepResult
        The table of `(b, best MAE)` sorted by `b`, the winning `b` and its run. Ties go
        to the smaller `b`

    Raises
    ------
    ValueError
        If there are no values of `b` or no ground truth
    """
    if ground_truth is None:
        raise ValueError("sweep_b needs ground truth to compare runs")
    values = sorted(set(float(b) for b in (config.b_sweep if b_values is None else b_values)))
    if not values:
        raise ValueError("sweep_b needs at least one value of b")
    configs = [config.with_b(b) for b in values]

    def one(cfg):
        return run(f, c, cfg, ground_truth)

    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            runs = list(tqdm(executor.map(one, configs), total=len(configs), disable=not progress, desc="sweep"))
    else:
        runs = [one(cfg) for cfg in tqdm(configs, disable=not progress, desc="sweep")]
    table = [(b, r.record.best_mae) for b, r in zip(values, runs)]
    best = min(range(len(values)), key=lambda i: (table[i][1], i))
    logger.info("Best b = %g with MAE %.4g", values[best], table[best][1])
    return SweepResult(table, values[best], runs[best])

