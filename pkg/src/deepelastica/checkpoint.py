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

"""Self-describing checkpoints of solver runs.

A checkpoint is an uncompressed `.npz` archive. Parameters are stored under
`param:<name>`, Adam moments under `adam_m:<name>` and `adam_v:<name>`, the logged metric
columns under `record:<column>`, and the best image (if any) under `best_image`. The entry
`header` holds a JSON document with the format version, network spec, seed, iteration,
mode, parameter shapes and dtypes, and the Adam hyperparameters.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Union

import numpy as np

from deepelastica.networks import NetworkSpec
from deepelastica.optimizers import AdamState

logger = logging.getLogger(__name__)

FORMAT = "deepelastica-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    """The complete state of a solver run after `iteration` update steps"""
    params: Dict[str, np.ndarray]
    iteration: int
    seed: Optional[int]
    mode: str
    network: Optional[NetworkSpec] = None
    adam: Optional[AdamState] = None
    record: Dict[str, np.ndarray] = field(default_factory=dict)
    best_image: Optional[np.ndarray] = None
    best_iteration: Optional[int] = None
    best_mae: Optional[float] = None
    manifest: str = ""


def save_checkpoint(path: Union[str, os.PathLike], checkpoint: Checkpoint) -> None:
    """
    Write a checkpoint. Arrays keep their dtype and values bit for bit.

    Parameters
    ----------
    path : str or os.PathLike
        Output file, conventionally ending in `.npz`
    checkpoint : Checkpoint
        The state to write
    """
    header = {
        "format": FORMAT,
        "version": VERSION,
        "iteration": int(checkpoint.iteration),
        "seed": checkpoint.seed,
        "mode": checkpoint.mode,
        "network": asdict(checkpoint.network) if checkpoint.network is not None else None,
        "params": {k: {"shape": list(v.shape), "dtype": str(v.dtype)} for k, v in checkpoint.params.items()},
        "best_iteration": checkpoint.best_iteration,
        "best_mae": checkpoint.best_mae,
        "manifest": checkpoint.manifest,
        "adam": None,
    }
    arrays = {"param:" + k: np.asarray(v) for k, v in checkpoint.params.items()}
    if checkpoint.adam is not None:
        a = checkpoint.adam
        header["adam"] = {"lr": a.lr, "beta1": a.beta1, "beta2": a.beta2, "eps": a.eps, "t": a.t}
        arrays.update({"adam_m:" + k: v for k, v in a.m.items()})
        arrays.update({"adam_v:" + k: v for k, v in a.v.items()})
    arrays.update({"record:" + k: np.asarray(v) for k, v in checkpoint.record.items()})
    if checkpoint.best_image is not None:
        arrays["best_image"] = np.asarray(checkpoint.best_image)
    arrays["header"] = np.array(json.dumps(header, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.debug("Wrote checkpoint %s at iteration %d", path, checkpoint.iteration)


def _entries(data, prefix: str) -> Dict[str, np.ndarray]:
    return {k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)}


def load_checkpoint(path: Union[str, os.PathLike]) -> Checkpoint:
    """
    Read a checkpoint written by `save_checkpoint`.

    Raises
    ------
    FileNotFoundError
        If `path` does not exist
    ValueError
        If the file is not a checkpoint or its arrays disagree with its header
    """
    if not os.path.isfile(path):
        raise FileNotFoundError("No such checkpoint: '{}'".format(path))
    with np.load(path, allow_pickle=False) as data:
        if "header" not in data.files:
            raise ValueError("{} is not a checkpoint: it has no header".format(path))
        header = json.loads(str(data["header"]))
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise ValueError("{} has format {} version {}, expected {} version {}".format(
                path, header.get("format"), header.get("version"), FORMAT, VERSION))
        params = _entries(data, "param:")
        record = _entries(data, "record:")
        m = _entries(data, "adam_m:")
        v = _entries(data, "adam_v:")
        best_image = data["best_image"] if "best_image" in data.files else None
    for name, meta in header["params"].items():
        if name not in params or list(params[name].shape) != meta["shape"] or str(params[name].dtype) != meta["dtype"]:
            raise ValueError("Parameter '{}' in {} does not match its header entry {}".format(name, path, meta))
    adam = None
    if header["adam"] is not None:
        adam = AdamState(m=m, v=v, **header["adam"])
    network = NetworkSpec(**header["network"]) if header["network"] is not None else None
    return Checkpoint(params=params, iteration=header["iteration"], seed=header["seed"], mode=header["mode"],
                      network=network, adam=adam, record=record, best_image=best_image,
                      best_iteration=header["best_iteration"], best_mae=header["best_mae"],
                      manifest=header["manifest"])
