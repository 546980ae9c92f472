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

"""The `deepelastica` command line.

Exit codes: 0 on success, 1 for invalid arguments or a failed gradient check, 2 when the
energy diverges, 3 for file errors.
"""

import csv
import logging
import sys
import warnings
from contextlib import contextmanager
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import List, Optional

import click
import numpy as np
import typer

try:  # newer typer releases vendor their own copy of click
    from typer._click import exceptions as _typer_click_exceptions
    _CLICK_EXCEPTIONS = (click.ClickException, _typer_click_exceptions.ClickException)
    _ABORT_EXCEPTIONS = (click.exceptions.Abort, _typer_click_exceptions.Abort)
except ImportError:
    _CLICK_EXCEPTIONS = (click.ClickException,)
    _ABORT_EXCEPTIONS = (click.exceptions.Abort,)

from deepelastica.energy import ElasticaParams, gradient_check
from deepelastica.image_io import (ImageFormatError, load_image, load_mask, mae,
                                   make_random_mask, make_shape_instance, save_image, save_mask)
from deepelastica.optimizers import LrSchedule
from deepelastica.solver import PRESETS, DivergenceError, RunResult, SolverConfig, run, sweep_b

logger = logging.getLogger("deepelastica")

OUT_DIR_ENVVAR = "DEEPELASTICA_OUT_DIR"
GRADCHECK_MAX_SIZE = 32
GRADCHECK_TOLERANCE = 1e-4

app = typer.Typer(add_completion=False, no_args_is_help=True,
                  help="Image inpainting by minimising Euler's elastica through a deep image prior.")


class Preset(str, Enum):
    natural = "paper-natural"
    shape = "paper-shape"
    ablation = "paper-ablation"


class Mode(str, Enum):
    deep_prior = "deep-prior"
    direct = "direct"


class Arch(str, Enum):
    unet = "unet"
    gated_unet = "gated-unet"


class Init(str, Enum):
    uniform_noise = "uniform-noise"
    mean_grey = "mean-grey"
    constant = "constant"


class Optimizer(str, Enum):
    adam = "adam"
    gd = "gd"


class DType(str, Enum):
    float32 = "float32"
    float64 = "float64"


class Kind(str, Enum):
    bar_gap = "bar-gap"
    circle_arc = "circle-arc"
    double_bar = "double-bar"


class Format(str, Enum):
    pgm = "pgm"
    png = "png"


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(stream=sys.stderr, format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)


@contextmanager
def _exit_codes():
    try:
        yield
    except DivergenceError as e:
        typer.echo("error: {}".format(e), err=True)
        raise typer.Exit(2)
    except (ImageFormatError, OSError) as e:
        typer.echo("error: {}".format(e), err=True)
        raise typer.Exit(3)
    except (ValueError, TypeError) as e:
        typer.echo("error: {}".format(e), err=True)
        raise typer.Exit(1)


def _suffix(path: Path) -> str:
    ext = path.suffix.lower()
    return ".png" if ext == ".png" else ".pgm"


def _load_inputs(image: Path, mask: Path, ground_truth: Optional[Path]):
    f = load_image(image)
    c = load_mask(mask)
    if c.shape != f.shape:
        raise ValueError("The mask {} has shape {} but the image {} has shape {}".format(mask, c.shape, image, f.shape))
    truth = load_image(ground_truth) if ground_truth is not None else None
    if truth is not None and truth.shape != f.shape:
        raise ValueError("The ground truth {} has shape {} but the image has shape {}".format(
            ground_truth, truth.shape, f.shape))
    return f, c, truth


def _resolve_config(preset: Preset, shape, *, mode: Optional[Mode] = None, arch: Optional[Arch] = None,
                    b: Optional[float] = None, epsilon: Optional[float] = None, lr: Optional[float] = None,
                    iterations: Optional[int] = None, scales: Optional[int] = None,
                    channels: Optional[int] = None, init: Optional[Init] = None,
                    init_value: Optional[float] = None, seed: int = 0, log_every: Optional[int] = None,
                    checkpoint_every: int = 0, optimizer: Optional[Optimizer] = None,
                    clip_norm: Optional[float] = None, dtype: DType = DType.float32) -> SolverConfig:
    factory = PRESETS[preset.value]
    base = factory(mode=mode.value) if mode is not None else factory()
    if iterations is not None:
        base = base.scaled_to(iterations)
    overrides = dict(seed=seed, checkpoint_every=checkpoint_every, dtype=dtype.value)
    if b is not None or epsilon is not None:
        overrides["params"] = ElasticaParams(b=base.params.b if b is None else b,
                                             epsilon=base.params.epsilon if epsilon is None else epsilon,
                                             h=base.params.h)
    if lr is not None:
        overrides["schedule"] = LrSchedule(lr, base.schedule.milestones)
    if init is not None:
        overrides["init"] = init.value
    if init_value is not None:
        overrides["init_value"] = init_value
    if log_every is not None:
        overrides["log_every"] = log_every
    if optimizer is not None:
        overrides["optimizer"] = optimizer.value
    if clip_norm is not None:
        overrides["clip_norm"] = clip_norm
    if arch is not None or scales is not None or channels is not None:
        default = base.resolved_network(shape)
        overrides["network"] = replace(default,
                                       variant=default.variant if arch is None else arch.value,
                                       scales=default.scales if scales is None else scales,
                                       base_channels=default.base_channels if channels is None else channels)
    return replace(base, **overrides)


def _write_run(out_dir: Path, result: RunResult, config: SolverConfig, shape, suffix: str, bitdepth: int,
               **manifest_extra) -> None:
    save_image(result.final_image, out_dir / ("result" + suffix), bitdepth=bitdepth)
    if result.best_image is not None:
        save_image(result.best_image, out_dir / ("best" + suffix), bitdepth=bitdepth)
    result.record.to_csv(out_dir / "metrics.csv")
    with open(out_dir / "energy_filtered.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "energy_filtered"])
        for it, e in zip(result.record.iterations, result.record.filtered_energy()):
            writer.writerow([it, repr(float(e))])
    with open(out_dir / "manifest.txt", "w") as f:
        f.write(config.to_manifest(shape, bitdepth=bitdepth, **manifest_extra))


def _solve(f, c, truth, config: SolverConfig, out_dir: Path, progress: bool, suffix: str, bitdepth: int) -> RunResult:
    try:
        return run(f, c, config, truth, checkpoint_dir=out_dir / "checkpoints", progress=progress)
    except DivergenceError as e:
        if e.last_finite_image is not None:
            save_image(e.last_finite_image, out_dir / ("last_finite" + suffix), bitdepth=bitdepth)
        e.record.to_csv(out_dir / "metrics.csv")
        raise


@app.command()
def inpaint(
        image: Path = typer.Option(..., "--image", help="Greyscale PGM or PNG image. Only known pixels are used."),
        mask: Path = typer.Option(..., "--mask", help="Mask image, pixels at or above half range are known."),
        preset: Preset = typer.Option(Preset.natural, "--preset", help="Named settings the flags below override."),
        mode: Optional[Mode] = typer.Option(None, "--mode", help="Optimise network weights or pixels."),
        arch: Optional[Arch] = typer.Option(None, "--arch", help="Network variant."),
        b: Optional[float] = typer.Option(None, "--b", help="Weight of the length term, in [0, 1]."),
        epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Gradient magnitude regularisation."),
        lr: Optional[float] = typer.Option(None, "--lr", help="Initial learning rate."),
        iterations: Optional[int] = typer.Option(None, "--iterations", help="Number of update steps."),
        scales: Optional[int] = typer.Option(None, "--scales", help="Network scales."),
        channels: Optional[int] = typer.Option(None, "--channels", help="Channels at the finest scale."),
        init: Optional[Init] = typer.Option(None, "--init", help="Fill of the inpainting domain."),
        init_value: Optional[float] = typer.Option(None, "--init-value", help="Grey value of the constant fill."),
        seed: int = typer.Option(0, "--seed", help="Seed of the network and the noise fill."),
        ground_truth: Optional[Path] = typer.Option(None, "--ground-truth", help="Complete image for MAE tracking."),
        out_dir: Path = typer.Option(Path("deepelastica-out"), "--out-dir", envvar=OUT_DIR_ENVVAR,
                                     help="Directory for the results."),
        optimizer: Optional[Optimizer] = typer.Option(None, "--optimizer", help="Update rule."),
        clip_norm: Optional[float] = typer.Option(None, "--clip-norm", help="Clip gradients to this global norm."),
        log_every: Optional[int] = typer.Option(None, "--log-every", help="Metric logging interval."),
        checkpoint_every: int = typer.Option(0, "--checkpoint-every", help="Checkpoint interval, 0 for none."),
        bitdepth: Optional[int] = typer.Option(None, "--bitdepth", help="8 or 16. By default 16 for shapes."),
        dtype: DType = typer.Option(DType.float32, "--dtype", help="Floating point precision."),
        progress: bool = typer.Option(True, "--progress/--no-progress", help="Show a progress bar."),
        verbose: bool = typer.Option(False, "--verbose", help="Log at DEBUG level."),
):
    """Inpaint an image."""
    _configure_logging(verbose)
    with _exit_codes():
        f, c, truth = _load_inputs(image, mask, ground_truth)
        config = _resolve_config(preset, f.shape, mode=mode, arch=arch, b=b, epsilon=epsilon, lr=lr,
                                 iterations=iterations, scales=scales, channels=channels, init=init,
                                 init_value=init_value, seed=seed, log_every=log_every,
                                 checkpoint_every=checkpoint_every, optimizer=optimizer, clip_norm=clip_norm,
                                 dtype=dtype)
        if bitdepth is None:
            bitdepth = 16 if config.task == "shape" else 8
        if bitdepth not in (8, 16):
            raise ValueError("bitdepth must be 8 or 16, not {}".format(bitdepth))
        suffix = _suffix(image)
        out_dir.mkdir(parents=True, exist_ok=True)
        result = _solve(f, c, truth, config, out_dir, progress, suffix, bitdepth)
        _write_run(out_dir, result, config, f.shape, suffix, bitdepth, preset=preset.value, image=image,
                   mask=mask, ground_truth=ground_truth)
        typer.echo("final energy {!r}".format(result.record.final_energy))
        if result.record.best_iteration is not None:
            typer.echo("best MAE {!r} at iteration {}".format(result.record.best_mae, result.record.best_iteration))


def _prefixed(manifest: str, prefix: str) -> List[str]:
    return ["{}.{}".format(prefix, line) for line in manifest.splitlines()]


@app.command()
def ablate(
        image: Path = typer.Option(..., "--image", help="Greyscale PGM or PNG image."),
        mask: Path = typer.Option(..., "--mask", help="Mask image."),
        ground_truth: Optional[Path] = typer.Option(None, "--ground-truth",
                                                    help="Complete image. Without it the input image is used, "
                                                         "with a warning."),
        iterations: Optional[int] = typer.Option(None, "--iterations",
                                                 help="Iterations, with the schedule scaled along. By default 60000."),
        scales: Optional[int] = typer.Option(None, "--scales", help="Network scales."),
        channels: Optional[int] = typer.Option(None, "--channels", help="Channels at the finest scale."),
        seed: int = typer.Option(0, "--seed", help="Seed of the network."),
        out_dir: Path = typer.Option(Path("deepelastica-out"), "--out-dir", envvar=OUT_DIR_ENVVAR,
                                     help="Directory for the results."),
        log_every: Optional[int] = typer.Option(None, "--log-every", help="Metric logging interval."),
        progress: bool = typer.Option(True, "--progress/--no-progress", help="Show a progress bar."),
        verbose: bool = typer.Option(False, "--verbose", help="Log at DEBUG level."),
):
    """Compare the energy minimised with and without the network."""
    _configure_logging(verbose)
    with _exit_codes():
        if ground_truth is None:
            warnings.warn("No --ground-truth given, the MAE is measured against the input image {}".format(image))
            ground_truth = image
        f, c, truth = _load_inputs(image, mask, ground_truth)
        suffix = _suffix(image)
        configs = {}
        presets = {}
        for mode in (Mode.direct, Mode.deep_prior):
            presets[mode.value] = PRESETS[Preset.ablation.value](mode=mode.value)
            configs[mode.value] = _resolve_config(Preset.ablation, f.shape, mode=mode, iterations=iterations,
                                                  scales=scales, channels=channels, seed=seed,
                                                  log_every=log_every)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        manifest = []
        for name, config in configs.items():
            sub = out_dir / name
            sub.mkdir(exist_ok=True)
            result = _solve(f, c, truth, config, sub, progress, suffix, 16)
            _write_run(sub, result, config, f.shape, suffix, 16, image=image, mask=mask)
            error = mae(result.final_image, truth, c == 0) if (c == 0).any() else 0.0
            rows.append((name, result.record.final_energy, error))
            manifest += _prefixed(config.to_manifest(f.shape), name)
            manifest += _prefixed("max_iterations = {}\nschedule = {}".format(
                presets[name].max_iterations, presets[name].schedule.describe()), name + ".preset")
            typer.echo("{}: final energy {!r}, MAE {!r}".format(name, result.record.final_energy, error))
        with open(out_dir / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "final_energy", "mae"])
            for name, energy, error in rows:
                writer.writerow([name, repr(energy), repr(error)])
        with open(out_dir / "manifest.txt", "w") as fh:
            fh.write("".join(line + "\n" for line in sorted(manifest)))


@app.command("sweep-b")
def sweep_b_command(
        image: Path = typer.Option(..., "--image", help="Greyscale PGM or PNG image."),
        mask: Path = typer.Option(..., "--mask", help="Mask image."),
        ground_truth: Path = typer.Option(..., "--ground-truth", help="Complete image to compare against."),
        b_values: Optional[List[float]] = typer.Option(None, "--b", help="A value of b, repeat for several. "
                                                                        "By default the preset's values."),
        preset: Preset = typer.Option(Preset.natural, "--preset", help="Named settings."),
        epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Gradient magnitude regularisation."),
        lr: Optional[float] = typer.Option(None, "--lr", help="Initial learning rate."),
        iterations: Optional[int] = typer.Option(None, "--iterations", help="Number of update steps."),
        scales: Optional[int] = typer.Option(None, "--scales", help="Network scales."),
        channels: Optional[int] = typer.Option(None, "--channels", help="Channels at the finest scale."),
        seed: int = typer.Option(0, "--seed", help="Seed of the network and the noise fill."),
        workers: int = typer.Option(1, "--workers", help="Runs in parallel."),
        out_dir: Path = typer.Option(Path("deepelastica-out"), "--out-dir", envvar=OUT_DIR_ENVVAR,
                                     help="Directory for the results."),
        log_every: Optional[int] = typer.Option(None, "--log-every", help="Metric logging interval."),
        progress: bool = typer.Option(True, "--progress/--no-progress", help="Show a progress bar."),
        verbose: bool = typer.Option(False, "--verbose", help="Log at DEBUG level."),
):
    """Pick the value of b with the lowest MAE."""
    _configure_logging(verbose)
    with _exit_codes():
        f, c, truth = _load_inputs(image, mask, ground_truth)
        config = _resolve_config(preset, f.shape, epsilon=epsilon, lr=lr, iterations=iterations, scales=scales,
                                 channels=channels, seed=seed, log_every=log_every)
        bitdepth = 16 if config.task == "shape" else 8
        suffix = _suffix(image)
        values = b_values if b_values else None
        if values is None and not config.b_sweep:
            raise ValueError("No values of b given and the preset has none")
        out_dir.mkdir(parents=True, exist_ok=True)
        result = sweep_b(f, c, truth, config, values, max_workers=workers, progress=progress)
        with open(out_dir / "sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["b", "best_mae"])
            for b, best in result.table:
                writer.writerow([repr(b), repr(best)])
        _write_run(out_dir, result.best_run, config.with_b(result.best_b), f.shape, suffix, bitdepth,
                   preset=preset.value, image=image, mask=mask, ground_truth=ground_truth)
        typer.echo("best b {!r} with MAE {!r}".format(result.best_b, dict(result.table)[result.best_b]))


@app.command("make-instance")
def make_instance(
        kind: Kind = typer.Option(Kind.bar_gap, "--kind", help="Shape to complete."),
        size: int = typer.Option(64, "--size", help="Side length in pixels."),
        gap: int = typer.Option(32, "--gap", help="Width of the inpainting domain."),
        density: Optional[float] = typer.Option(None, "--density",
                                                help="Write a random mask of this density instead."),
        seed: int = typer.Option(0, "--seed", help="Seed of the random mask."),
        out_dir: Path = typer.Option(Path("deepelastica-out"), "--out-dir", envvar=OUT_DIR_ENVVAR,
                                     help="Directory for the files."),
        fmt: Format = typer.Option(Format.pgm, "--format", help="File format."),
        bitdepth: int = typer.Option(8, "--bitdepth", help="8 or 16."),
):
    """Write a synthetic shape-completion instance: ground truth, mask and masked image."""
    with _exit_codes():
        truth, c = make_shape_instance(kind.value, size, gap)
        if density is not None:
            c = make_random_mask(truth.shape, density, seed)
        if bitdepth not in (8, 16):
            raise ValueError("bitdepth must be 8 or 16, not {}".format(bitdepth))
        out_dir.mkdir(parents=True, exist_ok=True)
        suffix = "." + fmt.value
        save_image(truth, out_dir / ("ground_truth" + suffix), bitdepth=bitdepth)
        save_mask(c, out_dir / ("mask" + suffix))
        save_image(np.where(c == 1, truth, 0.5), out_dir / ("masked" + suffix), bitdepth=bitdepth)
        typer.echo("wrote {} with {} unknown pixels".format(out_dir, int((c == 0).sum())))


@app.command()
def gradcheck(
        size: int = typer.Option(16, "--size", help="Side length of the random test image, at most 32."),
        seed: int = typer.Option(0, "--seed", help="Seed of the image and the mask."),
        b: float = typer.Option(ElasticaParams.b, "--b", help="Weight of the length term."),
        epsilon: float = typer.Option(ElasticaParams.epsilon, "--epsilon", help="Gradient magnitude regularisation."),
        density: float = typer.Option(0.5, "--density", help="Fraction of known pixels."),
        step: float = typer.Option(1e-5, "--step", help="Finite-difference step."),
):
    """Compare the backpropagated energy gradient with finite differences (max-norm relative error)."""
    with _exit_codes():
        if not 3 <= size <= GRADCHECK_MAX_SIZE:
            raise ValueError("size must lie between 3 and {}, not {}".format(GRADCHECK_MAX_SIZE, size))
        rng = np.random.default_rng(seed)
        u = rng.uniform(0.1, 0.9, size=(size, size))
        c = make_random_mask((size, size), density, seed)
        error = gradient_check(u, c, ElasticaParams(b=b, epsilon=epsilon), step)
    typer.echo("normwise relative error (max-norm) {:.3e}".format(error))
    if error > GRADCHECK_TOLERANCE:
        typer.echo("FAILED: the tolerance is {:.0e}".format(GRADCHECK_TOLERANCE), err=True)
        raise typer.Exit(1)
    if error > GRADCHECK_TOLERANCE / 10:
        warnings.warn("The gradient check passed with an error of {:.3e}, within a factor of 10 of the "
                      "tolerance".format(error))


def cli(*, command_line_args: Optional[List[str]] = None) -> int:
    """
    Run the command line with the given arguments and return the exit code.

    Parameters
    ----------
    command_line_args : list of str, optional
        Arguments without the program name. By default `sys.argv[1:]`
    """
    args = sys.argv[1:] if command_line_args is None else list(command_line_args)
    try:
        rv = app(args=args, prog_name="deepelastica", standalone_mode=False)
    except _CLICK_EXCEPTIONS as e:
        e.show()
        return 1
    except _ABORT_EXCEPTIONS:
        typer.echo("Aborted!", err=True)
        return 1
    return rv if isinstance(rv, int) else 0
