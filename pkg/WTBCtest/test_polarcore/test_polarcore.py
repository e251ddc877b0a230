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

import logging
import os

import numpy as np
import pytest  # type: ignore

from wtbcpolarlib import polarcore
from wtbcpolarlib.dmsmodel import build_model
from wtbcpolarlib.errors import LengthNotPowerOfTwo, StateSpaceTooLarge, ValidationError, ZeroEvidence

test_path = os.path.dirname(os.path.abspath(__file__))


def erasure_model(erasure: float):
    rows = [[1.0 - erasure, 0.0, erasure], [0.0, 1.0 - erasure, erasure]]
    return build_model({
        "alphabets": {"Y1": 3, "Y2": 3, "Z": 3},
        "p_vu1u2": [[[0.5, 0.0], [0.0, 0.0]], [[0.5, 0.0], [0.0, 0.0]]],
        "f_table": [[[0, 0], [0, 0]], [[1, 1], [1, 1]]],
        "channel": {"y1": rows, "y2": rows, "z": rows},
    })


def bsc_model(crossover: float):
    rows = [[1.0 - crossover, crossover], [crossover, 1.0 - crossover]]
    return build_model({
        "alphabets": {"Y1": 2, "Y2": 2, "Z": 2},
        "p_vu1u2": [[[0.5, 0.0], [0.0, 0.0]], [[0.5, 0.0], [0.0, 0.0]]],
        "f_table": [[[0, 0], [0, 0]], [[1, 1], [1, 1]]],
        "channel": {"y1": rows, "y2": rows, "z": rows},
    })


def test_kernel_of_length_two():
    assert polarcore.polar_transform([0, 1]).tolist() == [1, 1]
    assert polarcore.polar_transform([1, 0]).tolist() == [1, 0]
    assert polarcore.polar_transform([1, 1, 1, 1]).tolist() == [0, 0, 0, 1]
    assert polarcore.polar_transform(np.zeros(16)).tolist() == [0] * 16


def test_transform_is_involution():
    rng = np.random.default_rng(7)
    bits = rng.integers(0, 2, size=(20, 64), dtype=np.uint8)
    assert np.array_equal(polarcore.polar_transform(polarcore.polar_transform(bits)), bits)


def test_transform_leaves_input_untouched():
    bits = np.array([1, 0, 1, 1], dtype=np.uint8)
    polarcore.polar_transform(bits)
    assert bits.tolist() == [1, 0, 1, 1]


@pytest.mark.parametrize("length", [0, 3, 6, 12])
def test_transform_needs_power_of_two(length):
    with pytest.raises(LengthNotPowerOfTwo):
        polarcore.polar_transform(np.zeros(length))


def test_transform_permutation_matches_transform():
    bits = polarcore.index_bits(4)
    perm = polarcore.transform_permutation(4)
    assert np.array_equal(polarcore.index_bits(4)[perm], polarcore.polar_transform(bits))
    assert np.array_equal(polarcore.bits_to_index(bits), np.arange(16))


@pytest.mark.parametrize("changes", [
    {"n": 12},
    {"beta": 0.5},
    {"beta": 0.0},
    {"blocks": 0},
    {"method": "magic"},
    {"samples": 0},
    {"bins": 1},
    {"seed": -1},
    {"seed": 2 ** 64},
])
def test_invalid_code_config(changes):
    with pytest.raises(ValidationError):
        polarcore.CodeConfig(**changes).validate()


def test_code_config_delta():
    config = polarcore.CodeConfig(n=16, beta=0.25)
    assert config.delta == pytest.approx(0.25)
    assert config.m == 4


def test_named_streams():
    first = polarcore.named_rng(3, "messages", "0").random(4)
    again = polarcore.named_rng(3, "messages", "0").random(4)
    other = polarcore.named_rng(3, "messages", "1").random(4)
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_sc_conditional_two_symbols():
    p1 = np.array([0.9, 0.9])
    assert polarcore.sc_conditional(0, [], p1) == pytest.approx((0.82, 0.18))
    assert polarcore.sc_conditional(1, [0], p1) == pytest.approx((0.01 / 0.82, 0.81 / 0.82))
    assert polarcore.sc_conditional(1, [1], p1) == pytest.approx((0.5, 0.5))


def test_sc_conditional_rejects_bad_prefix():
    with pytest.raises(ValidationError):
        polarcore.sc_conditional(2, [0], np.full(4, 0.5))


def test_zero_evidence():
    with pytest.raises(ZeroEvidence):
        polarcore.sc_conditional(1, [0], np.array([1.0, 0.0]))


def test_path_conditionals_agree_with_single_queries():
    rng = np.random.default_rng(11)
    p1 = rng.uniform(0.1, 0.9, size=8)
    bits = rng.integers(0, 2, size=8)
    along = polarcore.sc_path_conditionals(bits, p1)
    for j in range(8):
        assert along[j] == pytest.approx(polarcore.sc_conditional(j, bits[:j].tolist(), p1)[1])


def test_sc_fill_hold_and_deterministic():
    modes = [polarcore.SCMode.HOLD, polarcore.SCMode.DETERMINISTIC] * 2
    known = np.array([True, False, True, False])
    values = np.array([1, 0, 1, 0], dtype=np.uint8)
    u = polarcore.sc_fill(known, values, modes, np.full(4, 0.5), np.random.default_rng(0))
    assert u[0] == 1 and u[2] == 1
    # Deterministic decisions at probability one half pick zero
    assert u[1] == 0 and u[3] == 0


def test_sc_fill_random_follows_certain_input():
    u = polarcore.sc_fill(np.zeros(4, dtype=bool), np.zeros(4, dtype=np.uint8),
                          [polarcore.SCMode.RANDOM] * 4, np.ones(4), np.random.default_rng(0))
    assert u.tolist() == [0, 0, 0, 1]


def test_sc_fill_needs_values_for_held_indices():
    with pytest.raises(ValidationError):
        polarcore.sc_fill(np.zeros(2, dtype=bool), np.zeros(2, dtype=np.uint8),
                          [polarcore.SCMode.HOLD] * 2, np.full(2, 0.5))


class OnesSampler:
    def __init__(self):
        self.seen = []

    def draw(self, index, p1):
        self.seen.append((index, p1))
        return 1


def test_sc_fill_with_sampler_object():
    sampler = OnesSampler()
    u = polarcore.sc_fill(np.zeros(4, dtype=bool), np.zeros(4, dtype=np.uint8),
                          [polarcore.SCMode.RANDOM] * 4, np.full(4, 0.5), sampler)
    assert u.tolist() == [1, 1, 1, 1]
    assert [index for index, _ in sampler.seen] == [0, 1, 2, 3]
    assert all(p1 == pytest.approx(0.5) for _, p1 in sampler.seen)


def test_sc_decode_noiseless():
    rng = np.random.default_rng(5)
    x = rng.integers(0, 2, size=32).astype(np.uint8)
    u = polarcore.sc_decode(x.astype(float), np.zeros(32, dtype=bool), np.zeros(32, dtype=np.uint8))
    assert np.array_equal(u, polarcore.polar_transform(x))


def test_bec_profile_small():
    assert polarcore.bec_profile(2, 0.5).tolist() == pytest.approx([0.75, 0.25])
    assert polarcore.bec_profile(1, 0.3).tolist() == pytest.approx([0.3])


def test_bec_profile_conserves_and_polarizes():
    unpolarized = []
    for n in (64, 256, 1024):
        profile = polarcore.bec_profile(n, 0.5)
        assert profile.mean() == pytest.approx(0.5)
        # BEC(0.5) is self-dual, so index j mirrors index n-1-j
        assert np.allclose(profile, 1.0 - profile[::-1])
        unpolarized.append(np.mean((profile > 0.01) & (profile < 0.99)))
    assert unpolarized[0] > unpolarized[1] > unpolarized[2]


@pytest.mark.parametrize("n", [2, 4, 8])
def test_exact_profile_matches_erasure_recursion(n):
    config = polarcore.CodeConfig(n=n)
    profile = polarcore.entropy_profile(erasure_model(0.5), "V", "Y1", config)
    assert np.allclose(profile.values, polarcore.bec_profile(n, 0.5), atol=1e-9)
    assert profile.tag == "V|Y1"
    assert profile.method == "exact"


def test_exact_profile_without_side_information():
    config = polarcore.CodeConfig(n=8)
    profile = polarcore.entropy_profile(erasure_model(0.3), "V", "", config)
    assert np.allclose(profile.values, 1.0)


def test_exact_profile_state_cap():
    config = polarcore.CodeConfig(n=8, exact_cap=1000)
    with pytest.raises(StateSpaceTooLarge):
        polarcore.entropy_profile(erasure_model(0.5), "V", "Y1", config)


def test_monte_carlo_profile_agrees_with_recursion():
    config = polarcore.CodeConfig(n=8, method="mc", samples=10000, seed=1)
    profile = polarcore.entropy_profile(erasure_model(0.5), "V", "Y1", config)
    assert np.max(np.abs(profile.values - polarcore.bec_profile(8, 0.5))) < 0.03
    assert profile.samples == 10000


def test_monte_carlo_warns_about_few_samples(caplog: pytest.LogCaptureFixture):
    config = polarcore.CodeConfig(n=8, method="mc", samples=20, seed=2)
    polarcore.entropy_profile(erasure_model(0.5), "V", "Y1", config)
    assert any(name == "wtbcpolarlib.polarcore" and level == logging.WARNING
               and message.startswith("SampleCountTooSmall")
               for name, level, message in caplog.record_tuples)


def test_density_evolution_exact_on_erasures():
    config = polarcore.CodeConfig(n=16, method="de")
    profile = polarcore.entropy_profile(erasure_model(0.4), "V", "Y1", config)
    assert np.allclose(profile.values, polarcore.bec_profile(16, 0.4), atol=1e-9)


def test_density_evolution_close_to_exact_on_bsc():
    exact = polarcore.entropy_profile(bsc_model(0.11), "V", "Y1", polarcore.CodeConfig(n=4))
    evolved = polarcore.entropy_profile(bsc_model(0.11), "V", "Y1", polarcore.CodeConfig(n=4, method="de"))
    assert np.max(np.abs(exact.values - evolved.values)) < 0.02
    assert exact.values.sum() == pytest.approx(4 * 0.4999, abs=0.01)


def test_profile_text_round_trip():
    profile = polarcore.entropy_profile(erasure_model(0.5), "V", "Y1", polarcore.CodeConfig(n=4))
    again = polarcore.EntropyProfile.from_text(profile.to_text())
    assert again.tag == profile.tag
    assert np.allclose(again.values, profile.values)


def test_profile_text_rejects_other_formats():
    with pytest.raises(ValidationError):
        polarcore.EntropyProfile.from_text('{"format": "something-else", "version": 1}')


def test_unknown_layer():
    with pytest.raises(ValidationError):
        polarcore.entropy_profile(erasure_model(0.5), "X", "Y1", polarcore.CodeConfig(n=2))


def test_binary_entropy_edges():
    assert polarcore.binary_entropy(np.array([0.0, 0.5, 1.0])).tolist() == pytest.approx([0.0, 1.0, 0.0])


def test_running_stats_match_numpy():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(3, 100))
    stats = polarcore.RunningStats(3)
    stats.update(data[:, :30])
    stats.update(data[:, 30:])
    assert np.allclose(stats.mean, data.mean(axis=1))
    assert np.allclose(stats.m2 / (stats.count - 1), data.var(axis=1, ddof=1))
