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

"""Greyscale images and masks: validation, file I/O, metrics and synthetic instances.

Images are 2-D `numpy.ndarray`s with grey values in [0, 1]. Masks are 2-D arrays with
values in {0, 1}, where 1 marks known data. Files are binary portable greymaps (P5) or
greyscale PNGs, with 8 or 16 bits per pixel.
"""

import logging
import os
from typing import Optional, Tuple, Union

import numpy as np
import png
from scipy.ndimage import correlate

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

SHAPE_KINDS = ("bar-gap", "circle-arc", "double-bar")


class ImageFormatError(ValueError):
    """Raised for image files that are corrupt, colour, or in an unsupported format"""


def as_image(img, check_range: bool = True) -> np.ndarray:
    """
    Check that `img` is a 2-D greyscale image and return it as a floating point array.

    float32 and float64 arrays keep their dtype, everything else becomes float64.

    Raises
    ------
    ValueError
        If `img` is not 2-D, is empty, holds non-finite values, or (with `check_range`)
        has values outside [0, 1]
    """
    arr = np.asarray(img)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if arr.ndim != 2:
        raise ValueError("An image must be a 2-D array, not an array of shape {}".format(arr.shape))
    if arr.size == 0:
        raise ValueError("An image must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("An image must only hold finite values")
    if check_range and (arr.min() < 0 or arr.max() > 1):
        raise ValueError("Grey values must lie in [0, 1], found values in [{}, {}]".format(
            arr.min(), arr.max()))
    return arr


def as_mask(c, shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """
    Check that `c` is a binary 2-D mask and return it as a float64 array of zeros and ones.

    Raises
    ------
    ValueError
        If `c` is not 2-D, has values other than 0 and 1, or does not have shape `shape`

    Examples
    --------
    >>> from deepelastica.image_io import as_mask
    >>> as_mask([[1, 0], [0, 1]])
    array([[1., 0.],
           [0., 1.]])
    >>> as_mask([[1, 0.5]])
    Traceback (most recent call last):
        ...
    ValueError: A mask must be binary (values 0 and 1), found the values [0.5 1. ]
    """
    arr = np.asarray(c, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("A mask must be a 2-D array, not an array of shape {}".format(arr.shape))
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("A mask must be binary (values 0 and 1), found the values {}".format(
            np.unique(arr)))
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError("The mask has shape {} but the image has shape {}".format(arr.shape, tuple(shape)))
    return arr


def _pgm_tokens(data: bytes, count: int) -> Tuple[list, int]:
    # Reads `count` whitespace-separated header tokens, skipping comments.
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ImageFormatError("Truncated PGM header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # Exactly one whitespace byte separates the header from the raster.
    return tokens, pos + 1


def _read_pgm(path: PathLike) -> Tuple[np.ndarray, int]:
    with open(path, "rb") as f:
        data = f.read()
    magic = data[:2]
    if magic in (b"P3", b"P6"):
        raise ImageFormatError("{} is a colour image (format {}). Only greyscale images are "
                               "supported".format(path, magic.decode()))
    if magic != b"P5":
        raise ImageFormatError("{} is not a binary greymap (P5) file".format(path))
    tokens, offset = _pgm_tokens(data, 4)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError("Corrupt PGM header in {}: {}".format(path, tokens))
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError("Invalid PGM dimensions {}x{} or maxval {} in {}".format(
            width, height, maxval, path))
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    expected = width * height * dtype.itemsize
    raster = data[offset:offset + expected]
    if len(raster) != expected:
        raise ImageFormatError("{} is truncated: expected {} bytes of pixel data, found {}".format(
            path, expected, len(raster)))
    values = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return values.astype(np.int64), maxval


def _read_png(path: PathLike) -> Tuple[np.ndarray, int]:
    try:
        width, height, rows, info = png.Reader(filename=os.fspath(path)).asDirect()
        values = np.vstack([np.asarray(row, dtype=np.int64) for row in rows])
    except png.Error as e:
        raise ImageFormatError("Cannot read {}: {}".format(path, e))
    if not info["greyscale"] or info["alpha"]:
        raise ImageFormatError("{} is not a plain greyscale PNG. Colour images and alpha "
                               "channels are not supported".format(path))
    return values.reshape(height, width), 2 ** info["bitdepth"] - 1


def _read_raw(path: PathLike) -> Tuple[np.ndarray, int]:
    if not os.path.isfile(path):
        raise FileNotFoundError("No such image file: '{}'".format(path))
    with open(path, "rb") as f:
        magic = f.read(8)
    if magic.startswith(b"\x89PNG"):
        return _read_png(path)
    if magic[:1] == b"P":
        return _read_pgm(path)
    raise ImageFormatError("{} is neither a PGM nor a PNG file".format(path))


def load_image(path: PathLike) -> np.ndarray:
    """
    Load an 8- or 16-bit greyscale PGM (P5) or PNG image.

    Parameters
    ----------
    path : str or os.PathLike
        The image file. The format is detected from the file contents

    Returns
    -------
    numpy.ndarray
        float64 array of shape `(H, W)`, with stored values divided by the maximum value of
        the file's bit depth (255 for 8-bit images)

    Raises
    ------
    FileNotFoundError
        If the file does not exist
    ImageFormatError
        If the file is corrupt, a colour image, or in another format
    """
    values, maxval = _read_raw(path)
    logger.debug("Loaded %s: %dx%d, maxval %d", path, values.shape[0], values.shape[1], maxval)
    return values / maxval


def _quantise(img: np.ndarray, bitdepth: int) -> Tuple[np.ndarray, int]:
    if bitdepth not in (8, 16):
        raise ValueError("bitdepth must be 8 or 16, not {}".format(bitdepth))
    maxval = 2 ** bitdepth - 1
    img = as_image(img, check_range=False)
    return np.round(np.clip(img, 0.0, 1.0) * maxval).astype(np.int64), maxval


def _format_for(path: PathLike) -> str:
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext == ".png":
        return "png"
    if ext in (".pgm", ".pnm"):
        return "pgm"
    raise ValueError("Cannot infer the image format from '{}'. Use a .pgm or .png file "
                     "extension".format(path))


def _write_raw(values: np.ndarray, maxval: int, bitdepth: int, path: PathLike) -> None:
    height, width = values.shape
    if _format_for(path) == "png":
        writer = png.Writer(width, height, greyscale=True, bitdepth=bitdepth)
        with open(path, "wb") as f:
            writer.write(f, values.tolist())
    else:
        dtype = np.uint8 if bitdepth == 8 else ">u2"
        with open(path, "wb") as f:
            f.write("P5\n{} {}\n{}\n".format(width, height, maxval).encode("ascii"))
            f.write(values.astype(dtype).tobytes())


def save_image(img, path: PathLike, bitdepth: int = 8) -> None:
    """
    Save a greyscale image as PGM or PNG, depending on the file extension.

    Values are clipped to [0, 1] and rounded to the nearest level of the bit depth, so
    saving an image that was loaded at the same bit depth reproduces the file contents.

    Parameters
    ----------
    img : array_like
        Image of shape `(H, W)`
    path : str or os.PathLike
        Output file ending in `.pgm` or `.png`
    bitdepth : int, optional
        8 or 16, by default 8
    """
    values, maxval = _quantise(img, bitdepth)
    _write_raw(values, maxval, bitdepth, path)
    logger.debug("Saved %s (%d bit)", path, bitdepth)


def load_mask(path: PathLike) -> np.ndarray:
    """Load a mask image. Pixels at or above half the value range are known (1)"""
    values, maxval = _read_raw(path)
    return (values >= (maxval + 1) // 2).astype(np.float64)


def save_mask(c, path: PathLike) -> None:
    """Save a mask as an 8-bit image with known pixels white"""
    c = as_mask(c)
    _write_raw((c * 255).astype(np.int64), 255, 8, path)


def make_random_mask(shape: Tuple[int, int], density: float, seed: Optional[int] = None) -> np.ndarray:
    """
    A mask with a fixed number of known pixels chosen uniformly at random.

    Parameters
    ----------
    shape : tuple of int
        `(H, W)`
    density : float
        Fraction of known pixels, in (0, 1]. Exactly `round(density * H * W)` pixels are
        set, with halves rounded up
    seed : int, optional
        Seed of `numpy.random.default_rng`

    Examples
    --------
    >>> from deepelastica.image_io import make_random_mask
    >>> int(make_random_mask((256, 256), 0.1, seed=0).sum())
    6554
    """
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1], not {}".format(density))
    height, width = shape
    if height <= 0 or width <= 0:
        raise ValueError("Invalid mask shape {}".format(shape))
    n = height * width
    count = int(np.floor(density * n + 0.5))
    rng = np.random.default_rng(seed)
    mask = np.zeros(n)
    mask[rng.choice(n, size=count, replace=False)] = 1.0
    return mask.reshape(height, width)


def make_shape_instance(kind: str, size: int, gap: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    A binary shape-completion instance: a black-on-white figure crossing a vertical gap.

    The inpainting domain is the full-height band of `gap` columns in the middle of the
    image, starting at column `(size - gap) // 2`.

    Parameters
    ----------
    kind : str
        "bar-gap" (one horizontal bar of thickness `size // 4`), "double-bar" (two bars of
        thickness `size // 8`) or "circle-arc" (a disk whose boundary arcs cross the gap)
    size : int
        Side length of the square image, at least 8
    gap : int
        Width of the inpainting domain, `0 <= gap < size`. For "circle-arc" the gap must be
        narrower than the disk

    Returns
    -------
    ground_truth : numpy.ndarray
        Image of shape `(size, size)` with values 0 (figure) and 1 (background)
    mask : numpy.ndarray
        Mask of the same shape, 0 on the gap band

    Examples
    --------
    >>> from deepelastica.image_io import make_shape_instance
    >>> truth, mask = make_shape_instance("bar-gap", 64, 32)
    >>> int((mask == 0).sum()) == 64 * 32
    True
    >>> float(truth[32, 0]), float(truth[0, 0])
    (0.0, 1.0)
    """
    if kind not in SHAPE_KINDS:
        raise ValueError("Unknown shape kind '{}'. Expected one of {}".format(kind, SHAPE_KINDS))
    if size < 8:
        raise ValueError("size must be at least 8, not {}".format(size))
    if not 0 <= gap < size:
        raise ValueError("gap must satisfy 0 <= gap < size, got gap={} and size={}".format(gap, size))
    truth = np.ones((size, size))
    if kind == "bar-gap":
        thickness = size // 4
        top = (size - thickness) // 2
        truth[top:top + thickness] = 0.0
    elif kind == "double-bar":
        thickness = size // 8
        for centre in (size // 3, size - size // 3):
            top = centre - thickness // 2
            truth[top:top + thickness] = 0.0
    else:
        radius = 3 * size / 8
        if gap >= 2 * radius:
            raise ValueError("A gap of {} pixels swallows the whole disk of diameter {}".format(
                gap, 2 * radius))
        centre = (size - 1) / 2
        rows, cols = np.mgrid[:size, :size]
        truth[(rows - centre) ** 2 + (cols - centre) ** 2 <= radius ** 2] = 0.0
    mask = np.ones((size, size))
    start = (size - gap) // 2
    mask[:, start:start + gap] = 0.0
    return truth, mask


def _region(shape: Tuple[int, ...], region) -> np.ndarray:
    if region is None:
        return np.ones(shape, dtype=bool)
    region = np.asarray(region, dtype=bool)
    if region.shape != shape:
        raise ValueError("Region of shape {} does not match images of shape {}".format(region.shape, shape))
    if not region.any():
        raise ValueError("The region is empty")
    return region


def _pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("Cannot compare images of shapes {} and {}".format(a.shape, b.shape))
    return a, b


def mae(a, b, region=None) -> float:
    """
    Mean absolute error between two images over a region.

    Parameters
    ----------
    a, b : array_like
        Images of equal shape
    region : array_like of bool, optional
        Pixels to average over (for instance `mask == 0`, the inpainting domain). By default
        the whole image

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.image_io import mae
    >>> mae(np.zeros((2, 2)), np.ones((2, 2)))
    1.0
    """
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)[_region(a.shape, region)]))


def mse(a, b, region=None) -> float:
    """Mean squared error between two images over a region, see `mae`"""
    a, b = _pair(a, b)
    return float(np.mean(((a - b) ** 2)[_region(a.shape, region)]))


def checkerboard_score(img, region=None) -> float:
    """
    Strength of the highest-frequency pattern `(-1)^(i+j)` in an image.

    The local mean (a 3x3 binomial filter with mirror boundary) is removed before the
    correlation with the alternating pattern, so smooth images score close to 0 and a pure
    `+-alpha` checkerboard scores `alpha`.

    Examples
    --------
    >>> import numpy as np
    >>> from deepelastica.image_io import checkerboard_score
    >>> i, j = np.indices((8, 8))
    >>> round(checkerboard_score(0.5 + 0.1 * (-1.0) ** (i + j)), 12)
    0.1
    >>> round(checkerboard_score(np.full((8, 8), 0.3)), 12)
    0.0
    """
    img = as_image(img, check_range=False).astype(np.float64)
    mask = _region(img.shape, region)
    binomial = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16
    detail = img - correlate(img, binomial, mode="mirror")
    i, j = np.indices(img.shape)
    return float(abs(np.mean((detail * (-1.0) ** (i + j))[mask])))
