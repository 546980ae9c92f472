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

from deepelastica._version import __version__  # noqa
from deepelastica.tensor import Tensor, backward  # noqa
from deepelastica.energy import ElasticaParams, elastica_loss  # noqa
from deepelastica.networks import NetworkSpec, build  # noqa
from deepelastica.optimizers import Adam, LrSchedule  # noqa
from deepelastica.solver import (SolverConfig, DivergenceError, run_deep_prior, run_direct,  # noqa
                                 sweep_b)
from deepelastica.image_io import load_image, save_image  # noqa
from deepelastica._cli import cli  # noqa
