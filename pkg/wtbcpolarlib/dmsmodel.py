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
Joint model of the source and the broadcast channel.

The model covers the seven random variables V, U1, U2, X, Y1, Y2 and Z,
where (V, U1, U2) is drawn from a table, X = f(V, U1, U2) is deterministic
and (Y1, Y2, Z) is produced by a memoryless channel from X.
All information quantities are computed in bits by exact summation.
"""

import enum
import itertools
import logging
import re

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Tuple, Union

import numpy as np
import yaml
from scipy.stats import entropy

from wtbcpolarlib.errors import (NegativeProbability, NonDeterministicX,
                                 RowSumError, ValidationError)

log = logging.getLogger(__name__)

VARIABLES = ("V", "U1", "U2", "X", "Y1", "Y2", "Z")
BINARY_VARIABLES = ("V", "U1", "U2", "X")
OUTPUT_VARIABLES = ("Y1", "Y2", "Z")

ROW_SUM_TOLERANCE = 1e-9
TIE_TOLERANCE = 1e-9

_TOKEN = re.compile(r"U1|U2|Y1|Y2|V|X|Z")
_QUANTITY = re.compile(r"^\s*([HI])\((.*)\)\s*$")

VariableSpec = Union[str, Iterable[str]]


def parse_variables(spec: VariableSpec) -> Tuple[str, ...]:
    """Turn "VU1Z", "V,U1,Z" or ["V", "U1", "Z"] into ("V", "U1", "Z")"""
    if isinstance(spec, str):
        compact = re.sub(r"[\s,]", "", spec)
        names = _TOKEN.findall(compact)
        if "".join(names) != compact:
            raise ValidationError(f"Cannot parse variable list '{spec}'")
    else:
        names = list(spec)
    result = []
    for name in names:
        if name not in VARIABLES:
            raise ValidationError(f"Unknown variable {name}")
        if name not in result:
            result.append(name)
    return tuple(result)


@dataclass(frozen=True)
class JointModel:
    """
    Validated joint distribution.

    p_vu1u2 has shape (2, 2, 2), f_table has shape (2, 2, 2) with entries in {0, 1},
    channel has shape (2, |Y1|, |Y2|, |Z|) and holds p(y1, y2, z | x).
    """

    p_vu1u2: np.ndarray
    f_table: np.ndarray
    channel: np.ndarray
    name: str = "model"
    swapped: bool = False

    @property
    def sizes(self) -> Dict[str, int]:
        return {"V": 2, "U1": 2, "U2": 2, "X": 2,
                "Y1": self.channel.shape[1], "Y2": self.channel.shape[2], "Z": self.channel.shape[3]}

    @cached_property
    def joint(self) -> np.ndarray:
        select = np.zeros((2, 2, 2, 2))
        v, u1, u2 = np.indices((2, 2, 2))
        select[v, u1, u2, self.f_table] = 1.0
        return np.einsum("abc,abcx,xpqr->abcxpqr", self.p_vu1u2, select, self.channel)

    def marginal(self, names: VariableSpec) -> np.ndarray:
        """Marginal table with one axis per requested variable, in the requested order"""
        wanted = parse_variables(names)
        axes = [VARIABLES.index(name) for name in wanted]
        dropped = tuple(i for i in range(len(VARIABLES)) if i not in axes)
        table = self.joint.sum(axis=dropped)
        kept = sorted(axes)
        return np.transpose(table, [kept.index(a) for a in axes])

    def entropy(self, names: VariableSpec) -> float:
        wanted = parse_variables(names)
        if not wanted:
            return 0.0
        return float(entropy(self.marginal(wanted).ravel(), base=2))

    def conditional_entropy(self, target: VariableSpec, given: VariableSpec = ()) -> float:
        given_names = parse_variables(given)
        both = parse_variables(parse_variables(target) + given_names)
        return self.entropy(both) - self.entropy(given_names)

    def mutual_information(self, first: VariableSpec, second: VariableSpec, given: VariableSpec = ()) -> float:
        given_names = parse_variables(given)
        return (self.conditional_entropy(first, given_names)
                - self.conditional_entropy(first, parse_variables(second) + given_names))

    def side_shape(self, given: VariableSpec) -> Tuple[int, ...]:
        sizes = self.sizes
        return tuple(sizes[name] for name in parse_variables(given))

    def pair_table(self, target: str, given: VariableSpec) -> np.ndarray:
        """Joint p(target, side) as a (2, m) table, side flattened in C order"""
        given_names = parse_variables(given)
        if target in given_names:
            raise ValidationError(f"{target} cannot condition on itself")
        return self.marginal((target,) + given_names).reshape(2, -1)

    def posterior(self, target: str, given: VariableSpec) -> np.ndarray:
        """P(target = 1 | side) per flattened side symbol, 0.5 for impossible side symbols"""
        table = self.pair_table(target, given)
        mass = table.sum(axis=0)
        return np.divide(table[1], mass, out=np.full(mass.shape, 0.5), where=mass > 0)

    def side_index(self, given: VariableSpec, sequences: Mapping[str, np.ndarray], length: int) -> np.ndarray:
        """Flatten per-symbol side values of the given variables into posterior indices"""
        given_names = parse_variables(given)
        if not given_names:
            return np.zeros(length, dtype=np.int64)
        return np.ravel_multi_index(tuple(np.asarray(sequences[name]) for name in given_names),
                                    self.side_shape(given_names))

    def channel_input(self, v: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        return self.f_table[v, u1, u2].astype(np.uint8)

    def swapped_roles(self) -> "JointModel":
        """Exchange the roles of the receivers: Y1 <-> Y2 and U1 <-> U2"""
        return JointModel(p_vu1u2=np.transpose(self.p_vu1u2, (0, 2, 1)),
                          f_table=np.transpose(self.f_table, (0, 2, 1)),
                          channel=np.transpose(self.channel, (0, 2, 1, 3)),
                          name=self.name,
                          swapped=not self.swapped)


def _as_probabilities(value: Any, shape: Tuple[int, ...], what: str) -> np.ndarray:
    try:
        table = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        log.error("Cannot read %s as probabilities: %s", what, exc)
        raise ValidationError(f"Cannot read {what} as probabilities") from exc
    if table.shape != shape:
        log.error("%s has shape %s, expected %s", what, table.shape, shape)
        raise ValidationError(f"{what} has shape {table.shape}, expected {shape}")
    if np.any(table < 0):
        log.error("Negative probability in %s", what)
        raise NegativeProbability(f"Negative probability in {what}")
    return table


def _check_rows(table: np.ndarray, axes: Tuple[int, ...], what: str):
    sums = table.sum(axis=axes)
    bad = np.abs(sums - 1.0) > ROW_SUM_TOLERANCE
    if np.any(bad):
        worst = float(np.max(np.abs(sums - 1.0)))
        log.error("Rows of %s do not sum to one (largest deviation %g)", what, worst)
        raise RowSumError(f"Rows of {what} do not sum to one", {"deviation": worst})


def _read_f_table(value: Any) -> np.ndarray:
    raw = np.array(value, dtype=float)
    if raw.shape == (2, 2, 2, 2):
        if np.any(raw < 0):
            raise NegativeProbability("Negative probability in f_table")
        _check_rows(raw, (3,), "f_table")
        if np.any(raw.max(axis=3) < 1.0 - ROW_SUM_TOLERANCE):
            log.error("X is not a deterministic function of (V, U1, U2)")
            raise NonDeterministicX("X is not a deterministic function of (V, U1, U2)")
        return raw.argmax(axis=3).astype(np.int64)
    if raw.shape != (2, 2, 2):
        log.error("f_table has shape %s, expected (2, 2, 2)", raw.shape)
        raise ValidationError(f"f_table has shape {raw.shape}, expected (2, 2, 2)")
    if not np.all(np.isin(raw, (0.0, 1.0))):
        log.error("f_table entries must be 0 or 1")
        raise NonDeterministicX("X is not a deterministic function of (V, U1, U2)")
    return raw.astype(np.int64)


def _read_channel(value: Any, sizes: Mapping[str, int]) -> np.ndarray:
    if not isinstance(value, dict):
        raise ValidationError("channel must be a mapping with either 'joint' or 'y1', 'y2', 'z'")
    shape = (2, sizes["Y1"], sizes["Y2"], sizes["Z"])
    if "joint" in value:
        table = _as_probabilities(value["joint"], shape, "channel")
        _check_rows(table, (1, 2, 3), "channel")
        return table
    rows = {}
    for key, name in (("y1", "Y1"), ("y2", "Y2"), ("z", "Z")):
        if key not in value:
            raise ValidationError(f"channel is missing the '{key}' table")
        rows[key] = _as_probabilities(value[key], (2, sizes[name]), f"channel.{key}")
        _check_rows(rows[key], (1,), f"channel.{key}")
    return np.einsum("xa,xb,xc->xabc", rows["y1"], rows["y2"], rows["z"])


def build_model(spec: Mapping[str, Any], name: str = "model") -> JointModel:
    """Validate an already parsed model description"""
    for key in ("alphabets", "p_vu1u2", "f_table", "channel"):
        if key not in spec:
            log.error("Model description lacks '%s'", key)
            raise ValidationError(f"Model description lacks '{key}'")
    alphabets = {str(k).upper(): v for k, v in dict(spec["alphabets"]).items()}
    sizes: Dict[str, int] = {}
    for variable in BINARY_VARIABLES:
        if int(alphabets.get(variable, 2)) != 2:
            raise ValidationError(f"Alphabet of {variable} must be binary")
    for variable in OUTPUT_VARIABLES:
        if variable not in alphabets:
            raise ValidationError(f"Alphabet size of {variable} not declared")
        sizes[variable] = int(alphabets[variable])
        if sizes[variable] < 1:
            raise ValidationError(f"Alphabet of {variable} is empty")

    p_vu1u2 = _as_probabilities(spec["p_vu1u2"], (2, 2, 2), "p_vu1u2")
    _check_rows(p_vu1u2, (0, 1, 2), "p_vu1u2")
    f_table = _read_f_table(spec["f_table"])
    channel = _read_channel(spec["channel"], sizes)
    model = JointModel(p_vu1u2=p_vu1u2, f_table=f_table, channel=channel, name=str(spec.get("name", name)))
    log.info("Loaded model %s with |Y1|=%d, |Y2|=%d, |Z|=%d", model.name, sizes["Y1"], sizes["Y2"], sizes["Z"])
    return model


def load_model(text: str, name: str = "model") -> JointModel:
    """Parse a JSON or YAML model description"""
    try:
        spec = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        log.error("Model description does not parse: %s", exc)
        raise ValidationError("Model description does not parse") from exc
    if not isinstance(spec, dict):
        raise ValidationError("Model description must be a mapping")
    return build_model(spec, name)


def load_model_file(path: str) -> JointModel:
    log.info("Reading model from %s", path)
    with open(path, "r", encoding="utf-8") as model_file:
        text = model_file.read()
    return load_model(text, name=re.sub(r"\.(json|ya?ml)$", "", path.split("/")[-1]))


@dataclass(frozen=True)
class InfoReport:
    """
    Entropies of every subset of the seven variables.

    Conditional entropies and mutual informations are derived by the chain rule,
    so any quantity the rate formulas need can be read with value("H(U1|VZ)")
    or value("I(U1;U2|V)").
    """

    subset_entropies: Mapping[FrozenSet[str], float] = field(repr=False)
    swapped: bool = False

    def entropy(self, names: VariableSpec) -> float:
        return self.subset_entropies[frozenset(parse_variables(names))]

    def h(self, target: VariableSpec, given: VariableSpec = ()) -> float:
        given_names = parse_variables(given)
        return self.entropy(parse_variables(target) + given_names) - self.entropy(given_names)

    def i(self, first: VariableSpec, second: VariableSpec, given: VariableSpec = ()) -> float:
        given_names = parse_variables(given)
        return self.h(first, given_names) - self.h(first, parse_variables(second) + given_names)

    def value(self, expression: str) -> float:
        match = _QUANTITY.match(expression)
        if not match:
            raise ValidationError(f"Cannot evaluate '{expression}'")
        kind, body = match.groups()
        body, _, given = body.partition("|")
        if kind == "H":
            return self.h(body, given)
        first, sep, second = body.partition(";")
        if not sep:
            raise ValidationError(f"Cannot evaluate '{expression}'")
        return self.i(first, second, given)

    def as_dict(self) -> Dict[str, float]:
        names = ["H(V)", "H(V|Z)", "H(V|Y1)", "H(V|Y2)"]
        for k, kb in ((1, 2), (2, 1)):
            names += [f"H(U{k}|V)", f"H(U{k}|VZ)", f"H(U{k}|VY{k})",
                      f"H(U{kb}|VU{k})", f"H(U{kb}|VU{k}Z)", f"H(U{kb}|VY{kb})"]
        names += ["I(V;Z)", "I(V;Y1)", "I(V;Y2)", "I(U1;U2|V)",
                  "I(U1;Y1|V)", "I(U2;Y2|V)", "I(U1;Z|V)", "I(U2;Z|V)"]
        return {name: self.value(name) for name in dict.fromkeys(names)}


def information_quantities(model: JointModel) -> InfoReport:
    subset_entropies: Dict[FrozenSet[str], float] = {}
    for size in range(len(VARIABLES) + 1):
        for subset in itertools.combinations(VARIABLES, size):
            subset_entropies[frozenset(subset)] = model.entropy(subset)
    report = InfoReport(subset_entropies=subset_entropies, swapped=model.swapped)
    if log.isEnabledFor(logging.DEBUG):
        log.debug("Information quantities of %s: %s", model.name, report.as_dict())
    return report


class SituationIndex(int, enum.Enum):
    """Ordering of I(V;Z) against I(V;Y1) <= I(V;Y2)"""
    S1 = 1
    S2 = 2
    S3 = 3


@dataclass(frozen=True)
class Situation:
    index: SituationIndex
    swapped: bool = False

    @property
    def name(self) -> str:
        return self.index.name

    def __str__(self) -> str:
        return self.name + (" (receivers swapped)" if self.swapped else "")


def situation_from_values(i_vz: float, i_vy1: float, i_vy2: float) -> Situation:
    swapped = False
    if i_vy1 > i_vy2 + TIE_TOLERANCE:
        i_vy1, i_vy2 = i_vy2, i_vy1
        swapped = True
        log.info("I(V;Y1) > I(V;Y2), exchanging the roles of the receivers")
    elif abs(i_vy1 - i_vy2) <= TIE_TOLERANCE:
        log.warning("TieBreak: I(V;Y1) and I(V;Y2) are equal within %g", TIE_TOLERANCE)

    if abs(i_vz - i_vy1) <= TIE_TOLERANCE or abs(i_vz - i_vy2) <= TIE_TOLERANCE:
        log.warning("TieBreak: I(V;Z) equals a legitimate receiver's I(V;Y), using the lower situation")
    if i_vz <= i_vy1 + TIE_TOLERANCE:
        index = SituationIndex.S1
    elif i_vz <= i_vy2 + TIE_TOLERANCE:
        index = SituationIndex.S2
    else:
        index = SituationIndex.S3
    log.info("Situation %s from I(V;Z)=%.6f, I(V;Y1)=%.6f, I(V;Y2)=%.6f", index.name, i_vz, i_vy1, i_vy2)
    return Situation(index=index, swapped=swapped)


def classify_situation(report: InfoReport) -> Situation:
    return situation_from_values(report.i("V", "Z"), report.i("V", "Y1"), report.i("V", "Y2"))


def check_marton_feasibility(report: InfoReport) -> bool:
    left = report.i("U1", "Y1", "V") + report.i("U2", "Y2", "V")
    right = report.i("U1", "U2", "V")
    feasible = left >= right - TIE_TOLERANCE
    if not feasible:
        log.warning("Marton condition fails: I(U1;Y1|V)+I(U2;Y2|V)=%.6f < I(U1;U2|V)=%.6f", left, right)
    return feasible


def normalize_roles(model: JointModel) -> Tuple[JointModel, InfoReport, Situation]:
    """Classify the situation and swap the receivers when I(V;Y1) > I(V;Y2)"""
    report = information_quantities(model)
    situation = classify_situation(report)
    if situation.swapped:
        model = model.swapped_roles()
        report = information_quantities(model)
    return model, report, situation
