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
Rate region arithmetic, empirical rates of a code, the distribution
approximation and secrecy bounds, and exact small-instance verification of
both by enumeration.

All logarithms are base 2.
"""

import itertools
import logging
import math

from dataclasses import dataclass
from functools import reduce
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy.stats import entropy

from wtbcpolarlib.chainingcodec import CHAIN_KEYS, ChainLayout, KeyRing, LayerSpec, MessageSet, encode_chain
from wtbcpolarlib.dmsmodel import InfoReport
from wtbcpolarlib.errors import StateSpaceTooLarge, ValidationError, ZeroEvidence
from wtbcpolarlib.polarcore import SCMode, index_bits, polar_transform, sc_path_conditionals
from wtbcpolarlib.setbuilder import CodeDesign

log = logging.getLogger(__name__)

# Number of encoding layers in the distribution approximation bound
LAYER_COUNT = 3
TOLERANCE = 1e-9


@dataclass(frozen=True)
class RateTuple:
    r_s1: float
    r_s2: float
    r_w1: float
    r_w2: float

    @property
    def negative(self) -> bool:
        return min(self.r_s1, self.r_s2, self.r_w1, self.r_w2) < -TOLERANCE

    def as_dict(self) -> Dict[str, float]:
        return {"R_S1": self.r_s1, "R_S2": self.r_s2, "R_W1": self.r_w1, "R_W2": self.r_w2}

    def swapped(self) -> "RateTuple":
        return RateTuple(self.r_s2, self.r_s1, self.r_w2, self.r_w1)

    def distance(self, other: "RateTuple") -> Dict[str, float]:
        mine, theirs = self.as_dict(), other.as_dict()
        return {name: abs(mine[name] - theirs[name]) for name in mine}


def _max_common(report: InfoReport) -> float:
    return max(report.i("V", "Y1"), report.i("V", "Y2"), report.i("V", "Z"))


def corner_point(report: InfoReport, k: int) -> RateTuple:
    """
    Rates obtained by serving Receiver k first, then the other receiver.

    The inner-layer penalty of the other receiver is H(V|Y_kb) - min{H(V|Y), H(V|Z)}
    with Y the stronger receiver, written here as max{I(V;Y1), I(V;Y2), I(V;Z)} - I(V;Y_kb)
    so it does not depend on the receiver labels.
    """
    if k not in (1, 2):
        raise ValidationError(f"Corner must be 1 or 2, got {k}")
    kb = 3 - k
    uk, ukb = f"U{k}", f"U{kb}"
    r_sk = report.h(("V", uk), "Z") - report.h(("V", uk), f"Y{k}")
    r_wk = report.entropy(("V", uk)) - report.h(("V", uk), "Z")
    penalty = _max_common(report) - report.i("V", f"Y{kb}")
    r_skb = report.h(ukb, ("V", uk, "Z")) - report.h(ukb, ("V", f"Y{kb}")) - penalty
    r_wkb = report.h(ukb, ("V", uk)) - report.h(ukb, ("V", uk, "Z"))
    rates = (r_sk, r_skb, r_wk, r_wkb) if k == 1 else (r_skb, r_sk, r_wkb, r_wk)
    result = RateTuple(r_s1=rates[0], r_s2=rates[1], r_w1=rates[2], r_w2=rates[3])
    if result.negative:
        log.warning("Corner point %d has negative components %s", k, result.as_dict())
    return result


@dataclass(frozen=True)
class RegionBounds:
    """Right-hand sides of the region inequalities for one distribution"""

    confidential: Dict[str, float]
    corners: Dict[int, Dict[str, float]]
    successive: Dict[str, float]
    marton: Dict[str, float]

    def as_dict(self) -> Dict[str, object]:
        return {"confidential_only": self.confidential,
                "corner_regions": {f"k={k}": bounds for k, bounds in self.corners.items()},
                "successive_decoding": self.successive,
                "marton_without_eavesdropper": self.marton}


def marton_bounds(report: InfoReport) -> Dict[str, float]:
    """Marton's region for the same distribution when the eavesdropper is removed"""
    return {
        "R_1": report.i(("V", "U1"), "Y1"),
        "R_2": report.i(("V", "U2"), "Y2"),
        "R_1+R_2": (min(report.i("V", "Y1"), report.i("V", "Y2")) + report.i("U1", "Y1", "V")
                    + report.i("U2", "Y2", "V") - report.i("U1", "U2", "V")),
    }


def _corner_region(report: InfoReport, k: int) -> Dict[str, float]:
    kb = 3 - k
    uk, ukb = f"U{k}", f"U{kb}"
    common = _max_common(report)
    shared = report.i(ukb, uk, "V")
    return {
        f"R_S{k}": report.i(("V", uk), f"Y{k}") - report.i(("V", uk), "Z"),
        f"R_S{kb}": report.i(("V", ukb), f"Y{kb}") - shared - report.i(ukb, "Z", ("V", uk)) - common,
        f"R_S{k}+R_W{k}": report.i(("V", uk), f"Y{k}"),
        f"R_S{kb}+R_W{kb}": report.i(("V", ukb), f"Y{kb}") - shared - common + report.i("V", "Z"),
    }


def region_bounds(report: InfoReport) -> RegionBounds:
    confidential = {
        "R_S1": report.i(("V", "U1"), "Y1") - report.i(("V", "U1"), "Z"),
        "R_S2": report.i(("V", "U2"), "Y2") - report.i(("V", "U2"), "Z"),
        "R_S1+R_S2": (report.i(("V", "U1"), "Y1") + report.i(("V", "U2"), "Y2") - report.i("U1", "U2", "V")
                      - report.i(("V", "U1", "U2"), "Z") - _max_common(report)),
    }
    successive = {
        "R_S1": report.i("V", "Y2") + report.i("U1", "Y1", "V") - report.i(("V", "U1"), "Z"),
        "R_S2": report.i("V", "Y1") + report.i("U2", "Y2", "V") - report.i(("V", "U2"), "Z"),
    }
    bounds = RegionBounds(confidential=confidential, corners={1: _corner_region(report, 1), 2: _corner_region(report, 2)},
                          successive=successive, marton=marton_bounds(report))
    for name in ("R_S1", "R_S2"):
        gap = confidential[name] - successive[name]
        if gap > TOLERANCE:
            log.info("Joint decoding enlarges the %s bound by %.6f over successive decoding", name, gap)
    return bounds


def in_region(rates: RateTuple, report: InfoReport, k: int, tolerance: float = TOLERANCE) -> bool:
    """Whether a rate tuple satisfies every inequality of corner region k"""
    values = rates.as_dict()
    for name, bound in _corner_region(report, k).items():
        left = sum(values[term] for term in name.split("+"))
        if left > bound + tolerance:
            log.debug("%s = %.6f exceeds %.6f", name, left, bound)
            return False
    return True


def time_share(first: RateTuple, second: RateTuple, alpha: float) -> RateTuple:
    """alpha * first + (1 - alpha) * second"""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"Time-sharing weight must lie in [0, 1], got {alpha}")
    a, b = first.as_dict(), second.as_dict()
    mixed = {name: alpha * a[name] + (1.0 - alpha) * b[name] for name in a}
    return RateTuple(mixed["R_S1"], mixed["R_S2"], mixed["R_W1"], mixed["R_W2"])


def empirical_rates(design: CodeDesign, layout: ChainLayout) -> Tuple[RateTuple, Dict[str, float]]:
    """
    Message rates the code actually carries, in bits per channel use, plus a
    ledger of secret-key and SC randomness overheads.
    """
    total = layout.n * layout.blocks
    positions = layout.message_positions()
    sums = {(r, kind): 0 for r in (1, 2) for kind in ("S", "W")}
    for (layer, _, kind), values in positions.items():
        sums[(layout.layers[layer].owner, kind)] += len(values)
    rates = RateTuple(r_s1=sums[(1, "S")] / total, r_s2=sums[(2, "S")] / total,
                      r_w1=sums[(1, "W")] / total, r_w2=sums[(2, "W")] / total)
    if design.swapped:
        rates = rates.swapped()

    chain = sum(length for name, length in layout.key_lengths.items() if not name.startswith("side_"))
    upsilon = sum(len(view.needed) for view in layout.views.values())
    phi = sum(layout.blocks * len(view.phi) for view in layout.views.values())
    random_positions = sum(int(np.sum(spec.modes == SCMode.RANDOM)) for spec in layout.layers.values())
    inner_s = sum(len(design.plan.message_area(block, layout.blocks)) for block in range(layout.blocks))
    lost = sum(design.plan.relax_loss.values()) + sum(design.outer.relax_loss.values())
    ledger = {
        "key_chain": chain / total,
        "key_side_upsilon": upsilon / total,
        "key_side_phi": phi / total,
        "key_fixed": (chain + upsilon) / total,
        "key_total": (chain + upsilon + phi) / total,
        "sc_randomness": random_positions * layout.blocks / total,
        "inner_confidential": inner_s / total,
        "relax_lost_positions": float(lost),
    }
    log.info("Empirical rates %s, key overhead %.4f bits per channel use", rates.as_dict(), ledger["key_total"])
    return rates, ledger


@dataclass(frozen=True)
class BoundReport:
    n: int
    beta: float
    blocks: int
    delta: float
    delta_star: float
    delta_secrecy: float
    ell: int = LAYER_COUNT

    @property
    def chain_secrecy(self) -> float:
        return self.blocks * self.delta_secrecy

    def as_dict(self) -> Dict[str, float]:
        return {"n": self.n, "beta": self.beta, "blocks": self.blocks, "ell": self.ell, "delta_n": self.delta,
                "delta_star_n": self.delta_star, "delta_secrecy_n": self.delta_secrecy,
                "L_delta_secrecy_n": self.chain_secrecy}


def delta_star(n: int, delta: float, ell: int = LAYER_COUNT) -> float:
    root = math.sqrt(ell * n * delta * 2.0 * math.log(2.0))
    inner = 2.0 * root * (ell * n - math.log2(root)) + delta if root > 0 else delta
    return 3.0 * n * math.sqrt(inner) + math.sqrt(3.0) * math.sqrt(n * delta * 2.0 * math.log(2.0))


def delta_secrecy(n: int, delta: float, star: float) -> float:
    if star <= 0:
        return 3.0 * n * delta
    return 3.0 * n * delta + 2.0 * star * (3.0 * n - math.log2(star))


def bound_report(n: int, beta: float, blocks: int, ell: int = LAYER_COUNT) -> BoundReport:
    delta = float(2.0 ** (-(n ** beta)))
    star = delta_star(n, delta, ell)
    return BoundReport(n=n, beta=beta, blocks=blocks, delta=delta, delta_star=star,
                       delta_secrecy=delta_secrecy(n, delta, star), ell=ell)


def total_variation(q: np.ndarray, p: np.ndarray) -> float:
    q = np.asarray(q, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    if q.shape != p.shape:
        raise ValidationError("Distributions must have the same support")
    return 0.5 * float(np.abs(q - p).sum())


def _factor(mode: int, frozen: bool, bit: int, p1: float) -> float:
    if frozen:
        return float(bit == 0)
    if mode == SCMode.HOLD:
        return 0.5
    if mode == SCMode.DETERMINISTIC:
        return float(bit == int(p1 > 0.5))
    return p1 if bit else 1.0 - p1


def _layer_weights(spec: LayerSpec, bits: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """q of every candidate sequence (rows of bits) given per-symbol posteriors"""
    weights = np.ones(bits.shape[0])
    for row, candidate in enumerate(bits):
        try:
            cond = sc_path_conditionals(candidate, p1)
        except ZeroEvidence:
            cond = np.full(candidate.shape, 0.5)
        for pos, bit in enumerate(candidate):
            weights[row] *= _factor(spec.modes[pos], pos in spec.frozen, int(bit), float(cond[pos]))
    return weights


@dataclass(frozen=True)
class TVReport:
    tv: float
    bounds: BoundReport
    states: int

    def as_dict(self) -> Dict[str, float]:
        return {"tv": self.tv, "states": self.states, **self.bounds.as_dict(),
                "within_bound": self.tv <= self.bounds.delta_star}


def exact_tv(design: CodeDesign, layout: ChainLayout) -> TVReport:
    """
    Total variation between the encoder-induced distribution of one block of
    (A, T1, T2) and the target distribution, by full enumeration.

    Held positions are taken as uniform and independent inside a block.
    """
    n = layout.n
    states = 2 ** (3 * n)
    if states > design.config.exact_cap:
        log.error("Exact total variation needs %d states, cap is %d", states, design.config.exact_cap)
        raise StateSpaceTooLarge(f"Exact total variation needs {states} states", {"cap": design.config.exact_cap})
    model = design.model
    k, kb = layout.corner, 3 - layout.corner
    primary, secondary = layout.layers[f"T{k}"], layout.layers[f"T{kb}"]
    bits = index_bits(n)
    symbols = polar_transform(bits)

    posterior_v = np.full(n, model.posterior("V", ())[0])
    posterior_k = model.posterior(f"U{k}", "V")
    posterior_kb = model.posterior(f"U{kb}", ("V", f"U{k}")).reshape(2, 2)

    q_a = _layer_weights(layout.layers["A"], bits, posterior_v)
    q = np.zeros((2 ** n, 2 ** n, 2 ** n))
    for a in range(2 ** n):
        if q_a[a] == 0:
            continue
        v = symbols[a]
        q_k = _layer_weights(primary, bits, posterior_k[v])
        for tk in range(2 ** n):
            if q_k[tk] == 0:
                continue
            q_kb = _layer_weights(secondary, bits, posterior_kb[v, symbols[tk]])
            q[a, tk] = q_a[a] * q_k[tk] * q_kb

    p_vu = model.p_vu1u2 if k == 1 else np.transpose(model.p_vu1u2, (0, 2, 1))
    p = np.ones((2 ** n, 2 ** n, 2 ** n))
    for t in range(n):
        p *= p_vu[symbols[:, t][:, None, None], symbols[:, t][None, :, None], symbols[:, t][None, None, :]]
    tv = total_variation(q, p)
    report = TVReport(tv=tv, bounds=bound_report(n, design.config.beta, layout.blocks), states=states)
    log.info("Exact total variation %.6g against bound %.6g", tv, report.bounds.delta_star)
    return report


class ForcedSampler:
    """Replays a fixed sequence of SC random decisions and accumulates their probability"""

    def __init__(self, coins: Iterable[int]):
        self.coins = list(coins)
        self.used = 0
        self.weight = 1.0

    def draw(self, index: int, p1: float) -> int:  # pylint: disable=unused-argument
        if self.used >= len(self.coins):
            raise ValidationError("Ran out of forced SC decisions")
        bit = self.coins[self.used]
        self.used += 1
        self.weight *= p1 if bit else 1.0 - p1
        return bit


@dataclass(frozen=True)
class LeakageReport:
    leakage: float
    leakage_with_side_info: float
    confidential_bits: int
    states: int
    bounds: BoundReport

    def as_dict(self) -> Dict[str, float]:
        return {"leakage": self.leakage, "leakage_with_side_info": self.leakage_with_side_info,
                "confidential_bits": self.confidential_bits, "states": self.states, **self.bounds.as_dict(),
                "within_bound": self.leakage <= self.bounds.chain_secrecy}


def _mutual_information(joint: np.ndarray) -> float:
    total = joint.sum()
    joint = joint / total
    return float(entropy(joint.sum(axis=1), base=2) + entropy(joint.sum(axis=0), base=2)
                 - entropy(joint.ravel(), base=2))


def _fold_bits(bits: Iterable[int]) -> int:
    index = 0
    for bit in bits:
        index = (index << 1) | int(bit)
    return index


def exact_leakage(design: CodeDesign, layout: ChainLayout, keys: Optional[KeyRing] = None,
                  padding: Iterable[Tuple[str, int, int]] = ()) -> LeakageReport:
    """
    I(S1 S2; Z over all blocks) by enumerating every message, chaining key,
    side-information pad and SC random decision.

    The second view adds the padded side information of both receivers to
    what the eavesdropper observes. Keys given in `keys` are held fixed
    instead of enumerated, side keys included. Confidential positions listed
    in `padding` are treated as uniform padding.
    """

    model = design.model
    positions = layout.message_positions()
    message_keys = sorted(positions)
    message_bits = sum(len(positions[key]) for key in message_keys)
    key_names = [name for name in sorted(layout.key_lengths) if not name.startswith("side_")]
    side_names = [name for name in sorted(layout.key_lengths) if name.startswith("side_")]
    if keys is not None:
        enumerated_keys = []
        enumerated_pads = [name for name in side_names if name not in keys.keys]
    else:
        enumerated_keys = [name for name in key_names if name == "o_u" or layout.chain_keys or name not in CHAIN_KEYS]
        enumerated_pads = side_names
    key_bits = sum(layout.key_lengths[name] for name in enumerated_keys + enumerated_pads)
    side_length = sum(layout.key_lengths[name] for name in side_names)
    coins = sum(int(np.sum(spec.modes == SCMode.RANDOM)) for spec in layout.layers.values()) * layout.blocks
    padded = set(padding)
    secret = [(key, j) for key in message_keys if key[2] == "S"
              for j, pos in enumerate(positions[key]) if (key[0], key[1], pos) not in padded]
    z_size = model.channel.shape[3]
    outputs = z_size ** (layout.n * layout.blocks)
    states = 2 ** (message_bits + key_bits + coins) * outputs
    if states > design.config.exact_cap:
        log.error("Exact leakage needs %d states, cap is %d", states, design.config.exact_cap)
        raise StateSpaceTooLarge(f"Exact leakage needs {states} states", {"cap": design.config.exact_cap})

    p_z = model.channel.sum(axis=(1, 2))
    # joint[secret, padded side information, eavesdropper outputs]
    joint = np.zeros((2 ** len(secret), 2 ** side_length, outputs))
    for free in itertools.product((0, 1), repeat=message_bits + key_bits):
        free = np.array(free, dtype=np.uint8)
        segments, start = {}, 0
        for key in message_keys:
            segments[key] = free[start:start + len(positions[key])]
            start += len(positions[key])
        messages = MessageSet(segments=segments, positions=positions)
        ring = {}
        if keys is not None:
            ring.update({name: keys.keys[name] for name in key_names + side_names if name in keys.keys})
        for name in key_names + side_names:
            if name in enumerated_keys or name in enumerated_pads:
                ring[name] = free[start:start + layout.key_lengths[name]]
                start += layout.key_lengths[name]
            elif name not in ring:
                ring[name] = np.zeros(layout.key_lengths[name], dtype=np.uint8)
        secret_index = _fold_bits(segments[key][j] for key, j in secret)
        for coin_values in itertools.product((0, 1), repeat=coins):
            sampler = ForcedSampler(coin_values)
            try:
                sent = encode_chain(messages, layout, KeyRing(ring), model, sampler)
            except ZeroEvidence:
                if sampler.weight == 0:
                    continue
                raise
            if sampler.weight == 0:
                continue
            z_law = reduce(np.kron, (p_z[symbol] for symbol in sent.x.ravel()))
            side_index = _fold_bits(bit for _, bits in sorted(sent.side_info.items()) for bit in bits)
            joint[secret_index, side_index] += sampler.weight * z_law

    if len(secret):
        leakage = max(0.0, _mutual_information(joint.sum(axis=1)))
        with_side_info = max(0.0, _mutual_information(joint.reshape(joint.shape[0], -1)))
    else:
        leakage = with_side_info = 0.0
    report = LeakageReport(leakage=leakage, leakage_with_side_info=with_side_info, confidential_bits=len(secret),
                           states=states, bounds=bound_report(layout.n, design.config.beta, layout.blocks))
    log.info("Exact leakage %.6g bits, %.6g bits with side information, %d confidential bits, bound %.6g",
             leakage, with_side_info, len(secret), report.bounds.chain_secrecy)
    return report
