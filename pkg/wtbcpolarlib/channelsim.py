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

"""
Broadcast channel sampling and end-to-end reliability trials.
"""

import csv
import io
import json
import logging
import time

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from wtbcpolarlib.analysis import empirical_rates
from wtbcpolarlib.chainingcodec import (compile_layout, decode_receiver1, decode_receiver2, draw_messages,
                                        encode_chain, generate_keys)
from wtbcpolarlib.dmsmodel import JointModel, load_model_file
from wtbcpolarlib.errors import ValidationError, ZeroEvidence
from wtbcpolarlib.polarcore import CodeConfig, named_rng
from wtbcpolarlib.setbuilder import design_code

log = logging.getLogger(__name__)

REPORT_FORMAT = "wtbc-experiment"
REPORT_VERSION = 1
CSV_FIELDS = ("model", "corner", "n", "blocks", "trials", "seed", "situation", "case",
              "errors_rx1", "errors_rx2", "error_rate_rx1", "error_rate_rx2",
              "R_S1", "R_S2", "R_W1", "R_W2", "key_overhead")


def transmit(x_blocks: np.ndarray, model: JointModel,
             rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (Y1, Y2, Z) symbol by symbol from p(y1, y2, z | x)"""
    x = np.asarray(x_blocks, dtype=np.int64)
    if np.any((x < 0) | (x > 1)):
        raise ValidationError("Channel inputs must be binary")
    shape = model.channel.shape[1:]
    cdf = np.cumsum(model.channel.reshape(2, -1), axis=1)
    draws = rng.random(x.shape)
    index = np.minimum((draws[..., None] >= cdf[x]).sum(axis=-1), cdf.shape[1] - 1)
    y1, y2, z = np.unravel_index(index, shape)
    return y1.astype(np.int64), y2.astype(np.int64), z.astype(np.int64)


@dataclass(frozen=True)
class ExperimentConfig:
    model_path: str = ""
    code: CodeConfig = field(default_factory=CodeConfig)
    corner: int = 1
    trials: int = 100
    seed: int = 0
    measure_rates: bool = True
    measure_timing: bool = True
    model: Optional[JointModel] = field(default=None, repr=False)

    def validate(self) -> "ExperimentConfig":
        if self.trials < 1:
            log.error("Trial count must be at least 1, got %d", self.trials)
            raise ValidationError(f"Trial count must be at least 1, got {self.trials}")
        if self.corner not in (1, 2):
            raise ValidationError(f"Corner must be 1 or 2, got {self.corner}")
        if self.model is None and not self.model_path:
            raise ValidationError("No model given")
        self.code.validate()
        return self


@dataclass
class ExperimentReport:
    model: str
    corner: int
    n: int
    blocks: int
    trials: int
    seed: int
    situation: str
    case: str
    errors: Dict[int, int]
    rates: Dict[str, float] = field(default_factory=dict)
    overhead: Dict[str, float] = field(default_factory=dict)
    runtime: float = 0.0

    def error_rate(self, receiver: int) -> float:
        return self.errors[receiver] / self.trials

    def to_dict(self) -> Dict[str, Any]:
        """Report content; the runtime lives under "timing" so the rest is reproducible"""
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "model": self.model,
            "corner": self.corner,
            "n": self.n,
            "blocks": self.blocks,
            "trials": self.trials,
            "seed": self.seed,
            "situation": self.situation,
            "case": self.case,
            "errors": {f"rx{r}": count for r, count in sorted(self.errors.items())},
            "error_rates": {f"rx{r}": self.error_rate(r) for r in sorted(self.errors)},
            "rates": self.rates,
            "overhead": self.overhead,
            "timing": {"runtime_s": self.runtime},
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> Dict[str, Any]:
        row = {"model": self.model, "corner": self.corner, "n": self.n, "blocks": self.blocks,
               "trials": self.trials, "seed": self.seed, "situation": self.situation, "case": self.case,
               "errors_rx1": self.errors[1], "errors_rx2": self.errors[2],
               "error_rate_rx1": self.error_rate(1), "error_rate_rx2": self.error_rate(2),
               "key_overhead": self.overhead.get("key_total", "")}
        row.update({name: self.rates.get(name, "") for name in ("R_S1", "R_S2", "R_W1", "R_W2")})
        return row


def reports_to_csv(reports) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(report.csv_row())
    return out.getvalue()


def run_trials(config: ExperimentConfig) -> ExperimentReport:
    """
    Messages, encoding, channel and both decoders per trial. Each trial has
    its own named random streams, so results do not depend on trial order.
    """
    config.validate()
    started = time.perf_counter()
    model = config.model if config.model is not None else load_model_file(config.model_path)
    design = design_code(model, config.code, config.corner)
    layout = compile_layout(design)
    normalized = design.model

    errors = {1: 0, 2: 0}
    for trial in range(config.trials):
        tag = str(trial)
        messages = draw_messages(layout, named_rng(config.seed, "messages", tag))
        keys = generate_keys(layout, named_rng(config.seed, "keys", tag))
        try:
            sent = encode_chain(messages, layout, keys, normalized, named_rng(config.seed, "encoder", tag))
        except ZeroEvidence as error:
            log.warning("Trial %d: encoder hit %s, counted as an error at both receivers", trial, error.message)
            errors[1] += 1
            errors[2] += 1
            continue
        y1, y2, _ = transmit(sent.x, normalized, named_rng(config.seed, "channel", tag))
        for receiver, decode, outputs in ((1, decode_receiver1, y1), (2, decode_receiver2, y2)):
            try:
                estimate = decode(sent.side_info_for(receiver), keys.for_receiver(receiver), outputs,
                                  layout, normalized)
                failed = messages.restricted(layout.owned_layers(receiver)).mismatch(estimate)
            except ZeroEvidence:
                failed = True
            if failed:
                errors[design.user_receiver(receiver)] += 1
        if log.isEnabledFor(logging.DEBUG):
            log.debug("Trial %d done, errors so far %s", trial, errors)

    rates: Dict[str, float] = {}
    overhead: Dict[str, float] = {}
    if config.measure_rates:
        rate_tuple, ledger = empirical_rates(design, layout)
        rates = rate_tuple.as_dict()
        overhead = ledger
    runtime = time.perf_counter() - started if config.measure_timing else 0.0
    report = ExperimentReport(model=model.name, corner=config.corner, n=config.code.n, blocks=layout.blocks,
                              trials=config.trials, seed=config.seed, situation=str(design.situation),
                              case=design.case.label.value, errors=errors, rates=rates, overhead=overhead,
                              runtime=runtime)
    log.info("%d trials at n=%d, L=%d: error rates Rx1 %.4f, Rx2 %.4f", config.trials, config.code.n,
             layout.blocks, report.error_rate(1), report.error_rate(2))
    return report
