#!/usr/bin/python3

########################################################################
# Copyright (c) 2024 Contributors to the Eclipse Foundation
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
# SPDX-License-Identifier: Apache-2.0
########################################################################

import csv
import dataclasses
import io
import json
import os

import numpy as np
import pytest  # type: ignore

from wtbcpolarlib import channelsim
from wtbcpolarlib.dmsmodel import load_model_file
from wtbcpolarlib.errors import ValidationError
from wtbcpolarlib.polarcore import CodeConfig, named_rng

test_path = os.path.dirname(os.path.abspath(__file__))
models_path = test_path + "/../../models"


def test_transmit_noiseless_receivers():
    model = load_model_file(models_path + "/noiseless.json")
    x = named_rng(0, "x").integers(0, 2, size=(4, 2048))

    y1, y2, z = channelsim.transmit(x, model, named_rng(0, "channel"))

    assert np.array_equal(y1, x)
    assert np.array_equal(y2, x)
    erased = z == 2
    assert erased.mean() == pytest.approx(0.5, abs=0.02)
    assert np.array_equal(z[~erased], x[~erased])


def test_transmit_erasure_frequencies():
    model = load_model_file(models_path + "/bec_triple.yaml")
    x = np.zeros((8, 4096), dtype=np.int64)

    y1, y2, z = channelsim.transmit(x, model, named_rng(3, "channel"))

    assert np.mean(y1 == 2) == pytest.approx(0.4, abs=0.02)
    assert np.mean(y2 == 2) == pytest.approx(0.3, abs=0.02)
    assert np.mean(z == 2) == pytest.approx(0.6, abs=0.02)
    assert not np.any(y1 == 1)


def test_transmit_rejects_non_binary_input():
    model = load_model_file(models_path + "/noiseless.json")
    with pytest.raises(ValidationError):
        channelsim.transmit(np.array([[0, 2]]), model, named_rng(0, "channel"))


def test_noiseless_trials_have_no_errors():
    config = channelsim.ExperimentConfig(model_path=models_path + "/noiseless.json",
                                         code=CodeConfig(n=8, blocks=2, relax=True), trials=20, seed=5)

    report = channelsim.run_trials(config)

    assert report.errors == {1: 0, 2: 0}
    assert report.error_rate(1) == 0.0
    assert report.model == "noiseless"
    assert report.rates["R_S1"] > 0.0
    assert report.overhead["key_total"] >= report.overhead["key_fixed"]


def test_trials_are_reproducible():
    model = load_model_file(models_path + "/bec_triple.yaml")
    config = channelsim.ExperimentConfig(model=model, code=CodeConfig(n=8, blocks=2), trials=10, seed=9)

    first = channelsim.run_trials(config).to_dict()
    second = channelsim.run_trials(config).to_dict()

    del first["timing"], second["timing"]
    assert first == second
    assert first["format"] == "wtbc-experiment"
    assert first["case"] == "A"


@pytest.mark.parametrize("changes", [{"trials": 0}, {"corner": 3}, {"model_path": ""}])
def test_invalid_experiment(changes):
    settings = {"model_path": models_path + "/noiseless.json", **changes}
    with pytest.raises(ValidationError):
        channelsim.run_trials(channelsim.ExperimentConfig(**settings))


def test_reports_to_csv():
    config = channelsim.ExperimentConfig(model_path=models_path + "/noiseless.json",
                                         code=CodeConfig(n=8, blocks=1), trials=2, measure_timing=False)
    report = channelsim.run_trials(config)

    rows = list(csv.DictReader(io.StringIO(channelsim.reports_to_csv([report, report]))))

    assert len(rows) == 2
    assert tuple(rows[0]) == channelsim.CSV_FIELDS
    assert rows[0]["errors_rx1"] == "0"
    assert json.loads(report.to_text())["timing"] == {"runtime_s": 0.0}


def test_transmit_total_erasure_and_seed():
    model = load_model_file(models_path + "/bec_triple.yaml")
    x = named_rng(1, "x").integers(0, 2, size=(2, 64))

    first = channelsim.transmit(x, model, named_rng(7, "channel"))
    again = channelsim.transmit(x, model, named_rng(7, "channel"))

    assert all(np.array_equal(a, b) for a, b in zip(first, again))
    blind = model.channel.copy()
    blind[:, :, :, :] = 0.0
    blind[:, 2, 2, 2] = 1.0
    erased = channelsim.transmit(x, dataclasses.replace(model, channel=blind), named_rng(7, "channel"))
    assert all(np.all(outputs == 2) for outputs in erased)


def test_longer_codes_are_as_reliable():
    # GIVEN the erasure model, which needs relaxed chaining at these block lengths
    model = load_model_file(models_path + "/bec_triple.yaml")
    reports = {}

    # WHEN the same chain of four blocks is simulated at n = 128 and n = 512
    for n in (128, 512):
        config = channelsim.ExperimentConfig(model=model, code=CodeConfig(n=n, blocks=4, method="de", relax=True),
                                             corner=1, trials=25, seed=12, measure_timing=False)
        reports[n] = channelsim.run_trials(config)

    # THEN the longer code makes no more decoding errors at either receiver
    for receiver in (1, 2):
        assert reports[512].error_rate(receiver) <= reports[128].error_rate(receiver)
    assert reports[512].overhead["relax_lost_positions"] > 0
    assert reports[128].rates["R_S1"] > 0.0
