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

import dataclasses
import logging
import os

import numpy as np
import pytest  # type: ignore

from wtbcpolarlib import analysis
from wtbcpolarlib.chainingcodec import KeyRing, compile_layout
from wtbcpolarlib.dmsmodel import build_model, information_quantities, load_model_file
from wtbcpolarlib.errors import StateSpaceTooLarge, ValidationError
from wtbcpolarlib.polarcore import CodeConfig
from wtbcpolarlib.setbuilder import design_code

test_path = os.path.dirname(os.path.abspath(__file__))
models_path = test_path + "/../../models"


def erasure_model(e1: float, e2: float, ez: float):
    def rows(e):
        return [[1.0 - e, 0.0, e], [0.0, 1.0 - e, e]]

    return build_model({
        "alphabets": {"Y1": 3, "Y2": 3, "Z": 3},
        "p_vu1u2": [[[0.5, 0.0], [0.0, 0.0]], [[0.5, 0.0], [0.0, 0.0]]],
        "f_table": [[[0, 0], [0, 0]], [[1, 1], [1, 1]]],
        "channel": {"y1": rows(e1), "y2": rows(e2), "z": rows(ez)},
    })


def bec_triple_report():
    return information_quantities(load_model_file(models_path + "/bec_triple.yaml"))


def assert_rates(rates, expected):
    assert [rates.r_s1, rates.r_s2, rates.r_w1, rates.r_w2] == pytest.approx(expected, abs=1e-12)


def test_corner_point_serving_receiver1_first():
    rates = analysis.corner_point(bec_triple_report(), 1)
    assert_rates(rates, [0.2, 0.0, 0.4, 0.0])
    assert not rates.negative


def test_corner_point_with_penalty(caplog: pytest.LogCaptureFixture):
    # Serving Receiver 2 first costs Receiver 1 the gap I(V;Y2) - I(V;Y1)
    rates = analysis.corner_point(bec_triple_report(), 2)
    assert_rates(rates, [-0.1, 0.3, 0.0, 0.4])
    assert rates.negative
    assert any(level == logging.WARNING and "negative components" in message
               for _, level, message in caplog.record_tuples)


def test_corner_point_needs_valid_corner():
    with pytest.raises(ValidationError):
        analysis.corner_point(bec_triple_report(), 0)


def test_in_region():
    report = bec_triple_report()
    first = analysis.corner_point(report, 1)
    assert analysis.in_region(first, report, 1)
    assert not analysis.in_region(analysis.RateTuple(0.3, 0.0, 0.4, 0.0), report, 1)
    assert not analysis.in_region(analysis.RateTuple(0.2, 0.0, 0.5, 0.0), report, 1)


def test_time_share():
    report = bec_triple_report()
    mixed = analysis.time_share(analysis.corner_point(report, 1), analysis.corner_point(report, 2), 0.5)
    assert_rates(mixed, [0.05, 0.15, 0.2, 0.2])
    with pytest.raises(ValidationError):
        analysis.time_share(mixed, mixed, 1.5)


def test_rate_tuple_helpers():
    rates = analysis.RateTuple(0.1, 0.2, 0.3, 0.4)
    assert rates.swapped() == analysis.RateTuple(0.2, 0.1, 0.4, 0.3)
    assert rates.distance(rates.swapped())["R_S1"] == pytest.approx(0.1)


def test_joint_decoding_gap_is_logged(caplog: pytest.LogCaptureFixture):
    caplog.set_level(logging.INFO)
    bounds = analysis.region_bounds(bec_triple_report())

    assert bounds.confidential["R_S2"] - bounds.successive["R_S2"] == pytest.approx(0.1)
    assert ("wtbcpolarlib.analysis", logging.INFO,
            "Joint decoding enlarges the R_S2 bound by 0.100000 over successive decoding") in caplog.record_tuples
    assert set(bounds.as_dict()) == {"confidential_only", "corner_regions", "successive_decoding",
                                     "marton_without_eavesdropper"}


def test_marton_region_without_eavesdropper():
    # GIVEN an eavesdropper that sees only erasures
    report = information_quantities(erasure_model(0.4, 0.3, 1.0))

    # WHEN the region is evaluated
    bounds = analysis.region_bounds(report)

    # THEN the confidential region equals Marton's region
    assert bounds.confidential["R_S1"] == pytest.approx(bounds.marton["R_1"])
    assert bounds.confidential["R_S2"] == pytest.approx(bounds.marton["R_2"])
    assert bounds.confidential["R_S1+R_S2"] == pytest.approx(bounds.marton["R_1+R_2"])


def test_superposition_marton_sum():
    report = information_quantities(load_model_file(models_path + "/superposition.yaml"))
    marton = analysis.marton_bounds(report)
    assert marton["R_1"] == pytest.approx(1.0)
    assert marton["R_2"] == pytest.approx(1.0)
    # V and the shared U1 = U2 cannot both be counted twice
    assert marton["R_1+R_2"] == pytest.approx(1.0)


def test_bound_report():
    bounds = analysis.bound_report(16, 0.25, 4)
    assert bounds.delta == pytest.approx(0.25)
    assert bounds.delta_star == pytest.approx(analysis.delta_star(16, 0.25))
    assert bounds.chain_secrecy == pytest.approx(4 * bounds.delta_secrecy)
    assert bounds.as_dict()["ell"] == 3
    assert analysis.delta_star(16, 0.0) == 0.0
    assert analysis.delta_secrecy(16, 0.0, 0.0) == 0.0


def test_total_variation():
    assert analysis.total_variation([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.5)
    assert analysis.total_variation(np.eye(2) / 2, np.eye(2) / 2) == 0.0
    with pytest.raises(ValidationError):
        analysis.total_variation([1.0], [0.5, 0.5])


def test_empirical_rates_of_bec_triple():
    design = design_code(load_model_file(models_path + "/bec_triple.yaml"), CodeConfig(n=8, blocks=2), 1)
    layout = compile_layout(design)

    rates, ledger = analysis.empirical_rates(design, layout)

    assert_rates(rates, [0.25, 0.0, 0.5, 0.0])
    assert ledger["key_chain"] == 0.0
    assert ledger["key_side_upsilon"] == pytest.approx(0.5)
    assert ledger["key_total"] == pytest.approx(0.5)
    assert ledger["sc_randomness"] == 0.0


def test_empirical_rates_follow_user_labels():
    # Receiver 1 is the stronger one, so internally it is served through corner 2
    design = design_code(erasure_model(0.3, 0.4, 0.6), CodeConfig(n=8, blocks=2), 1)
    layout = compile_layout(design)

    rates, _ = analysis.empirical_rates(design, layout)

    assert design.swapped
    assert design.corner == 2
    assert rates.r_s2 == 0.0 and rates.r_w2 == 0.0
    assert rates.r_s1 == pytest.approx(0.25)


def rate_gap(rates: analysis.RateTuple, corner: analysis.RateTuple) -> float:
    return sum(abs(a - b) for a, b in zip((rates.r_s1, rates.r_s2, rates.r_w1, rates.r_w2),
                                          (corner.r_s1, corner.r_s2, corner.r_w1, corner.r_w2)))


def test_empirical_rates_approach_corner_point():
    model = load_model_file(models_path + "/bec_triple.yaml")
    corner = analysis.corner_point(bec_triple_report(), 1)
    gaps = []
    for n in (8, 16, 32):
        design = design_code(model, CodeConfig(n=n, blocks=2, method="de", relax=True), 1)
        rates, _ = analysis.empirical_rates(design, compile_layout(design))
        gaps.append(rate_gap(rates, corner))

    # Secure and private sets of 4, 5 and 11 positions at n = 8, 16 and 32
    assert gaps == pytest.approx([0.15, 0.13125, 0.084375])
    assert gaps[0] > gaps[1] > gaps[2]


def test_key_overhead_shrinks_with_chain_length():
    model = load_model_file(models_path + "/bec_triple.yaml")
    overhead = {}
    for blocks in (2, 4):
        design = design_code(model, CodeConfig(n=16, blocks=blocks, method="de", relax=True), 1)
        _, ledger = analysis.empirical_rates(design, compile_layout(design))
        overhead[blocks] = ledger["key_fixed"]

    assert overhead[2] > 0.0
    assert overhead[4] == pytest.approx(overhead[2] / 2)


def toy_layout(model=None, **options):
    model = model or load_model_file(models_path + "/bec_toy.yaml")
    design = design_code(model, CodeConfig(n=2, blocks=2, **options), 1)
    return design, compile_layout(design)


def test_exact_tv_of_toy_code():
    design, layout = toy_layout()

    report = analysis.exact_tv(design, layout)

    assert report.states == 64
    assert report.tv == pytest.approx(0.0, abs=1e-12)
    assert report.as_dict()["within_bound"]


def test_exact_leakage_of_toy_code():
    # GIVEN one confidential bit u0 and one private bit u1 per block
    design, layout = toy_layout()

    # WHEN the eavesdropper observes both blocks through BEC(0.7)
    report = analysis.exact_leakage(design, layout)

    # THEN u0 = v0 + v1 leaks exactly when both symbols arrive, 0.09 bits per block
    assert report.confidential_bits == 2
    assert report.leakage == pytest.approx(0.18, abs=1e-9)
    assert report.as_dict()["within_bound"]


def test_side_information_view_of_leakage():
    # GIVEN a code whose first position is resolved by Receiver 1 from side information
    design, layout = toy_layout(erasure_model(0.5, 0.1, 0.7))
    assert layout.key_lengths["side_v_1"] == 1
    assert layout.key_lengths["side_v_2"] == 0

    # WHEN the side information is padded with uniform keys
    padded = analysis.exact_leakage(design, layout)

    # THEN u0 leaks when both symbols of either block arrive, and the padded side information adds nothing
    assert padded.confidential_bits == 1
    assert padded.leakage == pytest.approx(1.0 - 0.91 ** 2, abs=1e-9)
    assert padded.leakage_with_side_info == pytest.approx(padded.leakage, abs=1e-9)
    assert padded.states == 2 ** 4 * 3 ** 4

    # WHEN the pads are all zero, the side information is the confidential bit itself
    zeros = KeyRing({name: np.zeros(length, dtype=np.uint8) for name, length in layout.key_lengths.items()})
    unpadded = analysis.exact_leakage(design, layout, keys=zeros)

    assert unpadded.leakage == pytest.approx(padded.leakage, abs=1e-9)
    assert unpadded.leakage_with_side_info == pytest.approx(1.0, abs=1e-9)
    assert unpadded.states == 2 ** 3 * 3 ** 4


def test_padded_positions_do_not_count():
    design, layout = toy_layout()
    report = analysis.exact_leakage(design, layout, padding=[("A", 0, 0), ("A", 1, 0)])
    assert report.confidential_bits == 0
    assert report.leakage == 0.0


def test_no_leakage_without_confidential_bits():
    # A noiseless eavesdropper leaves no room for confidential messages
    model = build_model({
        "alphabets": {"Y1": 2, "Y2": 2, "Z": 2},
        "p_vu1u2": [[[0.5, 0.0], [0.0, 0.0]], [[0.5, 0.0], [0.0, 0.0]]],
        "f_table": [[[0, 0], [0, 0]], [[1, 1], [1, 1]]],
        "channel": {"y1": [[1.0, 0.0], [0.0, 1.0]], "y2": [[1.0, 0.0], [0.0, 1.0]],
                    "z": [[1.0, 0.0], [0.0, 1.0]]},
    })
    design, layout = toy_layout(model, relax=True)

    report = analysis.exact_leakage(design, layout)

    assert report.confidential_bits == 0
    assert report.leakage == 0.0


def test_exact_methods_respect_state_cap():
    design, layout = toy_layout()
    design = dataclasses.replace(design, config=dataclasses.replace(design.config, exact_cap=32))
    with pytest.raises(StateSpaceTooLarge):
        analysis.exact_tv(design, layout)
    with pytest.raises(StateSpaceTooLarge):
        analysis.exact_leakage(design, layout)


def test_forced_sampler():
    sampler = analysis.ForcedSampler([1, 0])
    assert sampler.draw(0, 0.25) == 1
    assert sampler.draw(1, 0.25) == 0
    assert sampler.weight == pytest.approx(0.25 * 0.75)
    with pytest.raises(ValidationError):
        sampler.draw(2, 0.5)
