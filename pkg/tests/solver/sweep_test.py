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

import matplotlib.pyplot as plt
import numpy as np
import pytest

from deepelastica.image_io import make_shape_instance
from deepelastica.optimizers import LrSchedule
from deepelastica.solver import SolverConfig, RunRecord, sweep_b


def sweep_config(**kwargs):
    settings = dict(mode="direct", optimizer="gd", schedule=LrSchedule(0.01), max_iterations=3,
                    init="constant", log_every=1, dtype="float64")
    settings.update(kwargs)
    return SolverConfig(**settings)


def test_sweep_b():
    truth, mask = make_shape_instance("bar-gap", 16, 6)
    result = sweep_b(truth, mask, truth, sweep_config(), [0.5, 0.1, 0.5, 0.9])
    assert [b for b, _ in result.table] == [0.1, 0.5, 0.9]
    maes = [m for _, m in result.table]
    assert result.best_b == result.table[int(np.argmin(maes))][0]
    assert result.best_run.record.best_mae == min(maes)


def test_sweep_b_uses_config_values_and_workers():
    truth, mask = make_shape_instance("bar-gap", 16, 6)
    config = sweep_config(b_sweep=(0.2, 0.05))
    sequential = sweep_b(truth, mask, truth, config)
    parallel = sweep_b(truth, mask, truth, config, max_workers=2)
    assert [b for b, _ in sequential.table] == [0.05, 0.2]
    assert sequential.table == parallel.table
    assert sequential.best_b == parallel.best_b


def test_sweep_b_ties_go_to_smaller_b():
    truth, _ = make_shape_instance("bar-gap", 16, 6)
    result = sweep_b(truth, np.ones((16, 16)), truth, sweep_config(), [0.3, 0.2])
    assert result.table == [(0.2, 0.0), (0.3, 0.0)]
    assert result.best_b == 0.2


def test_sweep_b_errors():
    truth, mask = make_shape_instance("bar-gap", 16, 6)
    with pytest.raises(ValueError):
        sweep_b(truth, mask, None, sweep_config(), [0.1])
    with pytest.raises(ValueError):
        sweep_b(truth, mask, truth, sweep_config())


def test_record_csv(tmp_path):
    record = RunRecord()
    record.append(0, 2.5, float("nan"), float("nan"), 0.001)
    record.append(100, 1.25, 0.5, 0.25, 0.0005)
    path = tmp_path / "metrics.csv"
    record.to_csv(path)
    assert path.read_text() == ("iteration,energy,mae_inpaint,mae_full,lr\n"
                                "0,2.5,nan,nan,0.001\n"
                                "100,1.25,0.5,0.25,0.0005\n")
    assert record.final_energy == 1.25
    again = RunRecord.from_columns(record.columns())
    np.testing.assert_array_equal(again.columns()["mae_full"], record.columns()["mae_full"])
    with pytest.raises(ValueError):
        RunRecord().final_energy


def test_filtered_energy_removes_spikes():
    record = RunRecord()
    for i, e in enumerate([1.0, 1.0, 50.0, 1.0, 1.0, 0.9, 0.8]):
        record.append(i, e, 0.0, 0.0, 0.1)
    np.testing.assert_array_equal(record.filtered_energy(3), [1.0, 1.0, 1.0, 1.0, 1.0, 0.9, 0.8])
    assert RunRecord().filtered_energy().size == 0
    with pytest.raises(ValueError):
        record.filtered_energy(0)


def test_record_repr():
    record = RunRecord()
    record.append(0, 1.0, 0.5, 0.5, 0.1)
    assert repr(record) == "<deepelastica.RunRecord with 1 row>"
    record.best_iteration, record.best_mae = 0, 0.5
    assert repr(record) == "<deepelastica.RunRecord with 1 row, best MAE 0.5 at iteration 0>"


def test_draw_record():
    record = RunRecord()
    for i in range(5):
        record.append(i * 10, 1.0 / (i + 1), 0.1 * i, 0.05 * i, 0.001)
    record.best_iteration = 0
    plt.figure()
    record.draw()
    plt.close("all")
