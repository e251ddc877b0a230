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
Index-set system of the chained construction.

Entropy profiles are thresholded into high/low entropy sets, the high set of
the inner layer is partitioned by what the eavesdropper and each receiver
can decode, the partition sizes select one of six chaining cases, and the
chaining plans name every subset used by the encoder and the decoders.

All indices are 0-based. "Any subset of" is resolved lowest index first.
"""

import enum
import json
import logging

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from wtbcpolarlib.dmsmodel import (InfoReport, JointModel, Situation, SituationIndex,
                                   check_marton_feasibility, normalize_roles)
from wtbcpolarlib.errors import InadmissibleCombination, InfeasiblePlan, ValidationError
from wtbcpolarlib.polarcore import CodeConfig, EntropyProfile, entropy_profile, named_rng

log = logging.getLogger(__name__)

PLAN_FORMAT = "wtbc-chaining-plan"
PLAN_VERSION = 1

Indices = Tuple[int, ...]


def _sorted(values: Iterable[int]) -> Indices:
    return tuple(sorted(int(v) for v in set(values)))


def _minus(first: Iterable[int], *others: Iterable[int]) -> Indices:
    removed = set()
    for other in others:
        removed.update(other)
    return _sorted(v for v in first if v not in removed)


def _take(pool: Sequence[int], count: int) -> Indices:
    return tuple(pool[:max(count, 0)])


@dataclass(frozen=True)
class IndexSets:
    layer: str
    conditioning: Tuple[str, ...]
    high: Indices
    low: Indices
    delta: float
    n: int

    @property
    def tag(self) -> str:
        return f"{self.layer}|{''.join(self.conditioning)}"

    @property
    def remainder_fraction(self) -> float:
        return (self.n - len(self.high) - len(self.low)) / self.n


def threshold_sets(profile: EntropyProfile, delta: float) -> IndexSets:
    """H = {j: h[j] >= 1 - delta}, L = {j: h[j] <= delta}"""
    if not 0.0 < delta < 0.5:
        raise ValidationError(f"delta must lie in (0, 0.5), got {delta}")
    values = np.asarray(profile.values)
    sets = IndexSets(layer=profile.layer, conditioning=tuple(profile.conditioning),
                     high=_sorted(np.flatnonzero(values >= 1.0 - delta)),
                     low=_sorted(np.flatnonzero(values <= delta)),
                     delta=delta, n=profile.n)
    log.debug("Sets %s: |H|=%d |L|=%d unpolarized fraction %.3f",
              sets.tag, len(sets.high), len(sets.low), sets.remainder_fraction)
    return sets


@dataclass(frozen=True)
class InnerPartition:
    g: Indices
    c: Indices
    g0: Indices
    g1: Indices
    g2: Indices
    g12: Indices
    c0: Indices
    c1: Indices
    c2: Indices
    c12: Indices

    def sizes(self) -> Dict[str, int]:
        return {name: len(getattr(self, name)) for name in
                ("g", "c", "g0", "g1", "g2", "g12", "c0", "c1", "c2", "c12")}


def make_partition(high_v: Iterable[int], high_vz: Iterable[int],
                   low_vy1: Iterable[int], low_vy2: Iterable[int]) -> InnerPartition:
    high_v = set(high_v)
    low1, low2 = set(low_vy1), set(low_vy2)
    g = _sorted(set(high_vz) & high_v)
    c = _sorted(high_v - set(g))

    def cells(base: Indices) -> Tuple[Indices, Indices, Indices, Indices]:
        # 0: both receivers decode, 1: only receiver 2, 2: only receiver 1, 12: neither
        return (_sorted(j for j in base if j in low1 and j in low2),
                _sorted(j for j in base if j not in low1 and j in low2),
                _sorted(j for j in base if j in low1 and j not in low2),
                _sorted(j for j in base if j not in low1 and j not in low2))

    g0, g1, g2, g12 = cells(g)
    c0, c1, c2, c12 = cells(c)
    return InnerPartition(g=g, c=c, g0=g0, g1=g1, g2=g2, g12=g12, c0=c0, c1=c1, c2=c2, c12=c12)


def partition_inner(index_sets: Mapping[str, IndexSets]) -> InnerPartition:
    for tag in ("V|", "V|Z", "V|Y1", "V|Y2"):
        if tag not in index_sets:
            raise ValidationError(f"Index sets for {tag} are missing")
    return make_partition(index_sets["V|"].high, index_sets["V|Z"].high,
                          index_sets["V|Y1"].low, index_sets["V|Y2"].low)


class CaseLabel(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"


# Sign patterns of (|G1|-|C2|, |G2|-|C1|, |G0|-|C12|)
_CASE_PATTERNS = {
    CaseLabel.A: (">", ">", ">="),
    CaseLabel.B: (">", ">", "<"),
    CaseLabel.C: (">=", "<=", ">"),
    CaseLabel.D: ("<", "<", ">"),
    CaseLabel.E: (">", "<", "<"),
    CaseLabel.F: ("<", "<", "<"),
}

_ALLOWED_SITUATIONS = {
    CaseLabel.A: {SituationIndex.S1},
    CaseLabel.B: {SituationIndex.S1, SituationIndex.S2, SituationIndex.S3},
    CaseLabel.C: {SituationIndex.S1, SituationIndex.S2},
    CaseLabel.D: {SituationIndex.S1, SituationIndex.S2, SituationIndex.S3},
    CaseLabel.E: {SituationIndex.S2, SituationIndex.S3},
    CaseLabel.F: {SituationIndex.S3},
}

_RELAXED = {">": ">=", "<": "<=", ">=": ">=", "<=": "<="}


def _holds(value: int, operator: str) -> bool:
    return {">": value > 0, "<": value < 0, ">=": value >= 0, "<=": value <= 0}[operator]


@dataclass(frozen=True)
class Case:
    label: CaseLabel
    situation: Situation
    boundary_tie: bool = False
    shortfall: int = 0


def _size_chain_holds(s1: int, s2: int, s0: int, situation: SituationIndex) -> bool:
    if situation == SituationIndex.S1:
        return s1 >= s2 >= -s0
    if situation == SituationIndex.S2:
        return s1 >= -s0 > s2
    return -s0 > s1 >= s2


def _violation(value: int, operator: str) -> int:
    """Positions by which a size difference misses a relaxed sign relation"""
    if _RELAXED[operator] == ">=":
        return max(0, -value)
    return max(0, value)


def nearest_admissible_case(signs: Sequence[int], situation: Situation) -> Tuple[CaseLabel, int]:
    """Admissible case whose sign pattern is missed by the fewest positions, first in order on ties"""
    candidates = [(sum(_violation(s, op) for s, op in zip(signs, pattern)), position, label)
                  for position, (label, pattern) in enumerate(_CASE_PATTERNS.items())
                  if situation.index in _ALLOWED_SITUATIONS[label]]
    shortfall, _, label = min(candidates)
    return label, shortfall


def classify_case(partition: InnerPartition, situation: Situation, relax: bool = False) -> Case:
    """
    Chaining case of the partition sizes under `situation`.

    With `relax` a size pattern that fits no admissible case is resolved as
    the nearest admissible case; the missing positions are kept as shortfall
    and end up frozen by the plans.
    """
    sizes = partition.sizes()
    signs = (sizes["g1"] - sizes["c2"], sizes["g2"] - sizes["c1"], sizes["g0"] - sizes["c12"])
    exact = [label for label, pattern in _CASE_PATTERNS.items()
             if all(_holds(s, op) for s, op in zip(signs, pattern))]
    tie = False
    shortfall = 0
    if exact and (situation.index in _ALLOWED_SITUATIONS[exact[0]] or not relax):
        label = exact[0]
    else:
        relaxed = [label for label, pattern in _CASE_PATTERNS.items()
                   if all(_holds(s, _RELAXED[op]) for s, op in zip(signs, pattern))
                   and situation.index in _ALLOWED_SITUATIONS[label]]
        if relaxed:
            label = relaxed[0]
            tie = True
            log.warning("BoundaryTie: size pattern %s resolved as case %s", signs, label.value)
        elif relax:
            label, shortfall = nearest_admissible_case(signs, situation)
            log.warning("Relaxed case: size pattern %s resolved as case %s under %s, %d positions short",
                        signs, label.value, situation.name, shortfall)
        else:
            log.error("Size pattern %s matches no case under %s", signs, situation.name)
            raise InadmissibleCombination(f"Size pattern {signs} matches no case under {situation.name}",
                                          {"signs": list(signs), "situation": situation.name})
    if situation.index not in _ALLOWED_SITUATIONS[label]:
        log.error("Case %s is not admissible under %s", label.value, situation.name)
        raise InadmissibleCombination(f"Case {label.value} is not admissible under {situation.name}",
                                      {"case": label.value, "situation": situation.name})
    if not _size_chain_holds(*signs, situation.index):
        log.warning("Set sizes %s do not follow the ordering of %s at this block length",
                    signs, situation.name)
    log.info("Case %s under %s", label.value, situation.name)
    return Case(label=label, situation=situation, boundary_tie=tie, shortfall=shortfall)


@dataclass(frozen=True)
class ChainingPlan:
    """
    Inner-layer chaining sets of one corner point.

    The split tuples give the sizes of the three parts of each repeated
    sequence: part 1 and 2 are repeated inside the inner layer, part 3 is
    carried by an outer layer. gamma_rx1 and gamma_rx2 are the two views of
    the C12 sequence, one per receiver.
    """

    corner: int
    case: CaseLabel
    partition: InnerPartition
    r1: Indices
    r1p: Indices
    r2: Indices
    r2p: Indices
    r12: Indices
    r12p: Indices
    rs: Indices
    i: Indices
    rl: Indices
    theta_split: Tuple[int, int, int]
    psi_split: Tuple[int, int, int]
    gamma_rx1_split: Tuple[int, int, int]
    gamma_rx2_split: Tuple[int, int, int]
    frozen: Indices = ()
    relax_loss: Dict[str, int] = field(default_factory=dict)

    @property
    def pi1(self) -> Indices:
        g1 = set(self.partition.g1)
        return _sorted(j for j in self.i if j in g1)

    @property
    def pi2(self) -> Indices:
        g2 = set(self.partition.g2)
        return _sorted(j for j in self.i if j in g2 and j not in self.frozen)

    @property
    def delta1(self) -> Indices:
        theta_used = self.theta_split[0] + self.theta_split[1]
        gamma_used = self.gamma_rx1_split[0] + self.gamma_rx1_split[1]
        return tuple(self.partition.c1[theta_used:]) + tuple(self.partition.c12[gamma_used:])

    @property
    def delta2(self) -> Indices:
        psi_used = self.psi_split[0] + self.psi_split[1]
        gamma_used = self.gamma_rx2_split[0] + self.gamma_rx2_split[1]
        return tuple(self.partition.c2[psi_used:]) + tuple(self.partition.c12[gamma_used:])

    def message_area(self, block: int, blocks: int) -> Indices:
        """Inner positions holding confidential bits in a block"""
        first, last = block == 0, block == blocks - 1
        area = set(self.i)
        if first:
            area.update(self.r2 + self.r2p + self.rs + self.rl)
        if last:
            area.update(self.r1 + self.r1p)
        if first and last:
            area.update(self.r12 + self.r12p)
        return _minus(area, self.frozen)

    def message_area_sizes(self, blocks: int) -> Dict[str, int]:
        sizes = {"first": len(self.message_area(0, blocks)), "last": len(self.message_area(blocks - 1, blocks))}
        if blocks > 2:
            sizes["middle"] = len(self.message_area(1, blocks))
        return sizes

    def to_dict(self) -> Dict[str, object]:
        sets = {name: list(getattr(self, name)) for name in
                ("r1", "r1p", "r2", "r2p", "r12", "r12p", "rs", "i", "rl", "frozen",
                 "pi1", "pi2", "delta1", "delta2")}
        return {
            "corner": self.corner,
            "case": self.case.value,
            "partition": {name: list(getattr(self.partition, name)) for name in self.partition.sizes()},
            "sets": sets,
            "splits": {"theta": list(self.theta_split), "psi": list(self.psi_split),
                       "gamma_rx1": list(self.gamma_rx1_split), "gamma_rx2": list(self.gamma_rx2_split)},
            "relax_loss": dict(self.relax_loss),
        }


def build_plan(partition: InnerPartition, case: Case, corner: int, relax: bool = False) -> ChainingPlan:
    """
    Choose every inner chaining set for corner point `corner`.

    One allocator serves all six cases: each repetition takes what the case
    sizes allow and passes its overflow to the next candidate set.
    """
    if corner not in (1, 2):
        raise ValidationError(f"Corner must be 1 or 2, got {corner}")
    p = partition
    r12 = _take(p.g0, min(len(p.c12), len(p.g0)))
    r1 = _take(p.g2, min(len(p.c1), len(p.g2)))
    r2 = _take(p.g1, min(len(p.c2), len(p.g1)))
    theta_over = len(p.c1) - len(r1)
    psi_over = len(p.c2) - len(r2)
    gamma_over = len(p.c12) - len(r12)
    g0_rest = _minus(p.g0, r12)

    r12p = _take(g0_rest, min(theta_over, psi_over, len(g0_rest)))
    g0_rest = _minus(g0_rest, r12p)
    if corner == 1:
        extension = _take(g0_rest, min(theta_over - len(r12p), len(g0_rest)))
        r1 = r1 + extension
        g0_rest = _minus(g0_rest, extension)

    g1_rest = _minus(p.g1, r2)
    r2p = _take(g1_rest, min(gamma_over, len(g1_rest)))
    g1_rest = _minus(g1_rest, r2p)
    g2_rest = _minus(p.g2, r1)
    if corner == 1:
        r1p_size = min(gamma_over, len(g2_rest))
    else:
        r1p_size = min(gamma_over, len(g2_rest), max(0, len(g2_rest) - len(g1_rest)))
    r1p = _take(g2_rest, r1p_size)
    g2_rest = _minus(g2_rest, r1p)

    frozen: Indices = ()
    relax_loss: Dict[str, int] = {}
    if case.shortfall:
        relax_loss["case_shortfall"] = case.shortfall
    if len(g2_rest) > len(g1_rest):
        shortage = len(g2_rest) - len(g1_rest)
        if not relax:
            log.error("R_S needs %d positions but only %d remain in G1", len(g2_rest), len(g1_rest))
            raise InfeasiblePlan("|R_S| = |G2 \\ (R1 u R1')| does not fit into G1 \\ (R2 u R2')",
                                 {"needed": len(g2_rest), "available": len(g1_rest)})
        frozen = tuple(g2_rest[len(g2_rest) - shortage:])
        relax_loss["pi2_frozen"] = shortage
        log.warning("Relaxed plan: %d positions of G2 frozen, R_S does not fit", shortage)
    rs = _take(g1_rest, len(g2_rest) - len(frozen))
    g1_rest = _minus(g1_rest, rs)

    used = set(r1 + r1p + r12 + r12p + r2 + r2p + rs)
    if corner == 1:
        i = _minus(p.g0 + p.g2, used)
        rl = _sorted(p.g12 + g1_rest)
    else:
        i = _minus(p.g0 + p.g1 + p.g2, used)
        rl = p.g12

    theta_split = (len(r1), len(r12p), len(p.c1) - len(r1) - len(r12p))
    psi_split = (len(r2), len(r12p), len(p.c2) - len(r2) - len(r12p))
    gamma_rx1_split = (len(r12), len(r1p), len(p.c12) - len(r12) - len(r1p))
    gamma_rx2_split = (len(r12), len(r2p), len(p.c12) - len(r12) - len(r2p))
    plan = ChainingPlan(corner=corner, case=case.label, partition=p, r1=r1, r1p=r1p, r2=r2, r2p=r2p,
                        r12=r12, r12p=r12p, rs=rs, i=i, rl=rl, theta_split=theta_split, psi_split=psi_split,
                        gamma_rx1_split=gamma_rx1_split, gamma_rx2_split=gamma_rx2_split,
                        frozen=frozen, relax_loss=relax_loss)
    _check_split(theta_split, "Theta")
    _check_split(psi_split, "Psi")
    log.info("Inner plan corner %d case %s: |R1|=%d |R1'|=%d |R2|=%d |R2'|=%d |R12|=%d |R12'|=%d "
             "|R_S|=%d |I|=%d |R_L|=%d |D1|=%d |D2|=%d", corner, case.label.value, len(r1), len(r1p),
             len(r2), len(r2p), len(r12), len(r12p), len(rs), len(i), len(rl),
             len(plan.delta1), len(plan.delta2))
    return plan


def _check_split(split: Tuple[int, int, int], name: str):
    if min(split) < 0:
        log.error("Negative %s part sizes %s", name, split)
        raise InfeasiblePlan(f"Negative {name} part sizes {split}")


def expected_carry_sizes(partition: InnerPartition, situation: Situation, corner: int) -> Dict[str, int]:
    """Closed-form sizes of the inner sequences an outer layer has to carry"""
    s = partition.sizes()
    if corner == 1:
        return {"delta1": max(0, s["c1"] + s["c12"] - s["g0"] - s["g2"]),
                "delta2": max(0, s["c2"] + s["c12"] - s["g0"] - s["g1"])}
    if situation.index == SituationIndex.S3:
        return {"delta1": max(0, s["c1"] + s["c12"] - s["g0"] - s["g2"]),
                "delta2": max(0, s["c2"] + s["c12"] - s["g0"] - s["g1"])}
    return {"pi1+delta1": max(0, s["g1"] + s["c1"] - s["g2"] - s["c2"])}


@dataclass(frozen=True)
class OuterPlan:
    """
    Outer-layer sets. The primary layer belongs to receiver `corner` and is
    built given V, the secondary layer belongs to the other receiver and is
    built given V and the primary layer.
    """

    corner: int
    f0: Indices
    fk: Indices
    j0: Indices
    jk: Indices
    d: Indices
    lk: Indices
    q0: Indices
    qk: Indices
    b0: Indices
    bk: Indices
    o: Indices
    nk: Indices
    m: Indices
    o_source: Indices
    carry_primary: Indices
    carry_secondary: Indices
    frozen_inner: Indices = ()
    frozen_primary: Indices = ()
    frozen_secondary: Indices = ()
    relax_loss: Dict[str, int] = field(default_factory=dict)

    @property
    def primary(self) -> int:
        return self.corner

    @property
    def secondary(self) -> int:
        return 3 - self.corner

    def to_dict(self) -> Dict[str, object]:
        names = ("f0", "fk", "j0", "jk", "d", "lk", "q0", "qk", "b0", "bk", "o", "nk", "m", "o_source",
                 "carry_primary", "carry_secondary", "frozen_inner", "frozen_primary", "frozen_secondary")
        return {"corner": self.corner, "sets": {name: list(getattr(self, name)) for name in names},
                "relax_loss": dict(self.relax_loss)}


def _fit(pool: Indices, wanted: Sequence[int], what: str, relax: bool,
         relax_loss: Dict[str, int]) -> Tuple[Indices, Indices, Indices]:
    """Take len(wanted) cells from pool; returns (cells, carried, dropped)"""
    if len(wanted) <= len(pool):
        return _take(pool, len(wanted)), tuple(wanted), ()
    if not relax:
        log.error("%s needs %d positions, only %d available", what, len(wanted), len(pool))
        raise InfeasiblePlan(f"{what} needs {len(wanted)} positions, only {len(pool)} available",
                             {"set": what, "needed": len(wanted), "available": len(pool)})
    dropped = tuple(wanted[len(pool):])
    relax_loss[what] = relax_loss.get(what, 0) + len(dropped)
    log.warning("Relaxed plan: %d positions of %s cannot be repeated", len(dropped), what)
    return tuple(pool), tuple(wanted[:len(pool)]), dropped


def build_outer_plan(index_sets: Mapping[str, IndexSets], plan: ChainingPlan, situation: Situation,
                     corner: int, relax: bool = False) -> OuterPlan:
    k, kb = corner, 3 - corner
    relax_loss: Dict[str, int] = {}

    high = set(index_sets[f"U{k}|V"].high)
    high_z = set(index_sets[f"U{k}|VZ"].high) & high
    low_y = set(index_sets[f"U{k}|VY{k}"].low)
    f0 = _sorted(high_z & low_y)
    fk = _sorted(high_z - low_y)
    j0 = _sorted((high - high_z) & low_y)
    jk = _sorted((high - high_z) - low_y)

    frozen_inner: List[int] = []
    d, _, frozen_primary = _fit(f0, jk, f"J{k}", relax, relax_loss)
    carry_primary = plan.delta1 if k == 1 else plan.delta2
    lk, carry_primary, dropped = _fit(_minus(f0, d), carry_primary, f"L{k}", relax, relax_loss)
    frozen_inner.extend(dropped)

    high_s = set(index_sets[f"U{kb}|VU{k}"].high)
    high_sz = set(index_sets[f"U{kb}|VU{k}Z"].high) & high_s
    low_sy = set(index_sets[f"U{kb}|VY{kb}"].low)
    high_v = set(index_sets[f"U{kb}|V"].high)
    q0 = _sorted(high_sz & low_sy)
    qk = _sorted(high_sz - low_sy)
    b0 = _sorted((high_s - high_sz) & low_sy)
    bk = _sorted((high_s - high_sz) - low_sy)
    o_wanted = _sorted((high_v - high_s) - low_sy)

    o, o_source, uncovered = _fit(q0, o_wanted, f"O{kb}", relax, relax_loss)
    if uncovered:
        log.warning("Relaxed plan: %d positions of O%d move to side information", len(uncovered), kb)
    nk, _, frozen_secondary = _fit(_minus(q0, o), bk, f"B{kb}", relax, relax_loss)
    carry_secondary = plan.delta2 if k == 1 else plan.pi1 + plan.delta1
    m, carry_secondary, dropped = _fit(_minus(q0, o, nk), carry_secondary, f"M{kb}", relax, relax_loss)
    frozen_inner.extend(dropped)

    expected = expected_carry_sizes(plan.partition, situation, corner)
    realised = len(plan.delta1) if k == 1 else len(plan.delta2)
    realised_secondary = len(plan.delta2) if k == 1 else len(plan.pi1) + len(plan.delta1)
    for name, size in expected.items():
        actual = realised if (k == 1 and name == "delta1") or (k == 2 and name == "delta2") else realised_secondary
        if size != actual:
            log.warning("Carried %s has %d positions, closed form gives %d", name, actual, size)

    outer = OuterPlan(corner=corner, f0=f0, fk=fk, j0=j0, jk=jk, d=d, lk=lk,
                      q0=q0, qk=qk, b0=b0, bk=bk, o=o, nk=nk, m=m, o_source=o_source,
                      carry_primary=carry_primary, carry_secondary=carry_secondary,
                      frozen_inner=_sorted(frozen_inner), frozen_primary=_sorted(frozen_primary),
                      frozen_secondary=_sorted(frozen_secondary), relax_loss=relax_loss)
    log.info("Outer plan corner %d: |F0|=%d |F%d|=%d |J0|=%d |J%d|=%d |L%d|=%d; "
             "|Q0|=%d |Q%d|=%d |B0|=%d |B%d|=%d |O|=%d |N|=%d |M|=%d",
             corner, len(f0), k, len(fk), len(j0), k, len(jk), k, len(lk),
             len(q0), kb, len(qk), len(b0), kb, len(bk), len(o), len(nk), len(m))
    return outer


def required_profiles(corner: int) -> List[Tuple[str, str]]:
    """(layer, conditioning) pairs a corner point needs"""
    k, kb = corner, 3 - corner
    return [("V", ""), ("V", "Z"), ("V", "Y1"), ("V", "Y2"),
            (f"U{k}", "V"), (f"U{k}", "VZ"), (f"U{k}", f"VY{k}"),
            (f"U{kb}", "V"), (f"U{kb}", f"VU{k}"), (f"U{kb}", f"VU{k}Z"), (f"U{kb}", f"VY{kb}")]


@dataclass(frozen=True)
class CodeDesign:
    """Everything the codec needs for one corner point, in normalized receiver roles"""

    model: JointModel
    report: InfoReport
    situation: Situation
    config: CodeConfig
    corner: int
    profiles: Dict[str, EntropyProfile]
    sets: Dict[str, IndexSets]
    partition: InnerPartition
    case: Case
    plan: ChainingPlan
    outer: OuterPlan

    @property
    def swapped(self) -> bool:
        return self.situation.swapped

    def user_receiver(self, receiver: int) -> int:
        """Receiver label of the input model for a normalized receiver"""
        return 3 - receiver if self.swapped else receiver

    def to_text(self) -> str:
        return json.dumps({
            "format": PLAN_FORMAT,
            "version": PLAN_VERSION,
            "model": self.model.name,
            "n": self.config.n,
            "delta": self.config.delta,
            "situation": self.situation.name,
            "receivers_swapped": self.swapped,
            "corner": self.user_receiver(self.corner),
            "sets": {tag: {"high": list(s.high), "low": list(s.low)} for tag, s in sorted(self.sets.items())},
            "inner": self.plan.to_dict(),
            "outer": self.outer.to_dict(),
        }, indent=2)


def design_code(model: JointModel, config: CodeConfig, corner: int,
                profiles: Optional[Mapping[str, EntropyProfile]] = None) -> CodeDesign:
    """
    Profiles, sets and plans for corner point `corner` of the input model.

    The receivers are exchanged internally when I(V;Y1) > I(V;Y2); the corner
    is given in the labels of the input model.
    """
    config.validate()
    if corner not in (1, 2):
        raise ValidationError(f"Corner must be 1 or 2, got {corner}")
    model, report, situation = normalize_roles(model)
    check_marton_feasibility(report)
    corner = 3 - corner if situation.swapped else corner

    computed: Dict[str, EntropyProfile] = dict(profiles or {})
    for layer, conditioning in required_profiles(corner):
        tag = f"{layer}|{conditioning}"
        if tag not in computed:
            computed[tag] = entropy_profile(model, layer, conditioning, config,
                                            rng=named_rng(config.seed, "profile", tag))
    sets = {tag: threshold_sets(profile, config.delta) for tag, profile in computed.items()}
    partition = partition_inner(sets)
    log.info("Inner partition sizes: %s", partition.sizes())
    case = classify_case(partition, situation, relax=config.relax)
    plan = build_plan(partition, case, corner, relax=config.relax)
    outer = build_outer_plan(sets, plan, situation, corner, relax=config.relax)
    return CodeDesign(model=model, report=report, situation=situation, config=config, corner=corner,
                      profiles=computed, sets=sets, partition=partition, case=case, plan=plan, outer=outer)
