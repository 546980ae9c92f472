import pathlib

import numpy as np
import typer

from deepelastica.image_io import make_random_mask, make_shape_instance, save_image, save_mask

SHAPE_INSTANCES = [
    ("bar-gap", 64, 24),
    ("double-bar", 128, 48),
    ("circle-arc", 128, 40),
]


def generate_instances(out_dir: str = "instances", density: float = 0.1, size: int = 256, seed: int = 0) -> None:
    """Write the shape-completion instances and one random mask of the given density."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind, n, gap in SHAPE_INSTANCES:
        truth, mask = make_shape_instance(kind, n, gap)
        name = "{}_{}_{}".format(kind, n, gap)
        save_image(truth, out / (name + "_ground_truth.pgm"), bitdepth=16)
        save_mask(mask, out / (name + "_mask.pgm"))
        save_image(np.where(mask == 1, truth, 0.5), out / (name + "_masked.pgm"), bitdepth=16)
        print(name)
    mask = make_random_mask((size, size), density, seed=seed)
    save_mask(mask, out / "random_{}_{}_seed{}_mask.pgm".format(size, density, seed))
    print("random mask with {} known pixels".format(int(mask.sum())))


if __name__ == "__main__":
    typer.run(generate_instances)
