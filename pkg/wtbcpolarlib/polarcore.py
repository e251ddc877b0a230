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
Polar transform, successive-cancellation primitives and per-index
conditional entropy profiles.

Sequences are indexed in natural order. The transform multiplies by the
m-fold Kronecker power of [[1, 0], [1, 1]] over GF(2), which is its own
inverse. Every SC routine works on per-symbol posteriors
p1[t] = P(A_t = 1 | side_t) obtained from the joint model.
"""

import enum
import json
import logging
import zlib

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import xlogy
from scipy.stats import entropy

from wtbcpolarlib.dmsmodel import JointModel, parse_variables
from wtbcpolarlib.errors import (LengthNotPowerOfTwo, StateSpaceTooLarge,
                                 ValidationError, ZeroEvidence)

log = logging.getLogger(__name__)

PROFILE_METHODS = ("exact", "mc", "de")
LAYER_VARIABLES = ("V", "U1", "U2")
PROFILE_FORMAT = "wtbc-entropy-profile"
PROFILE_VERSION = 1
MC_BATCH = 2048
MC_CI_WIDTH = 0.05


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CodeConfig:
    """Block length, polarization threshold and chaining parameters of one code"""

    n: int = 8
    beta: float = 0.45
    blocks: int = 2
    method: str = "exact"
    samples: int = 10000
    seed: int = 0
    exact_cap: int = 2 ** 24
    bins: int = 256
    chain_keys: bool = True
    relax: bool = False

    @property
    def delta(self) -> float:
        return float(2.0 ** (-(self.n ** self.beta)))

    @property
    def m(self) -> int:
        return self.n.bit_length() - 1

    def validate(self) -> "CodeConfig":
        if not is_power_of_two(self.n):
            log.error("Block length %s is not a power of two", self.n)
            raise LengthNotPowerOfTwo(f"Block length {self.n} is not a power of two")
        if not 0.0 < self.beta < 0.5:
            raise ValidationError(f"beta must lie in (0, 0.5), got {self.beta}")
        if self.blocks < 1:
            raise ValidationError(f"Number of blocks must be at least 1, got {self.blocks}")
        if self.method not in PROFILE_METHODS:
            raise ValidationError(f"Unknown profile method {self.method}, expected one of {PROFILE_METHODS}")
        if self.samples < 1:
            raise ValidationError("Monte-Carlo sample count must be at least 1")
        if self.bins < 2:
            raise ValidationError("Density evolution needs at least 2 bins")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("Seed must be a 64-bit unsigned integer")
        return self


def named_rng(seed: int, *names: str) -> np.random.Generator:
    """Independent generator for a named purpose, derived from the run seed"""
    words = [seed & 0xFFFFFFFF, seed >> 32] + [zlib.crc32(name.encode("utf-8")) for name in names]
    return np.random.default_rng(np.random.SeedSequence(words))


def polar_transform(bits: Any) -> np.ndarray:
    """Apply the transform along the last axis; applying it twice gives the input back"""
    u = np.array(bits, dtype=np.uint8)
    n = u.shape[-1] if u.ndim else 0
    if not is_power_of_two(n):
        log.error("Cannot transform a sequence of length %d", n)
        raise LengthNotPowerOfTwo(f"Sequence length {n} is not a power of two")
    lead = u.shape[:-1]
    h = n // 2
    while h >= 1:
        view = u.reshape(lead + (n // (2 * h), 2, h))
        view[..., 0, :] ^= view[..., 1, :]
        h //= 2
    return u


def index_bits(n: int) -> np.ndarray:
    """All 2^n binary sequences as rows, bit 0 most significant"""
    return ((np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def bits_to_index(bits: np.ndarray) -> np.ndarray:
    n = bits.shape[-1]
    return (np.asarray(bits, dtype=np.int64) << np.arange(n - 1, -1, -1)).sum(axis=-1)


@lru_cache(maxsize=16)
def transform_permutation(n: int) -> np.ndarray:
    """perm[x] is the integer index of polar_transform(x), bit 0 most significant"""
    return bits_to_index(polar_transform(index_bits(n)))


class SCMode(enum.IntEnum):
    HOLD = 0
    DETERMINISTIC = 1
    RANDOM = 2


class RngSampler:
    """Draws SC random decisions from a numpy generator"""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def draw(self, index: int, p1: float) -> int:  # pylint: disable=unused-argument
        return int(self._rng.random() < p1)


Decider = Callable[[int, np.ndarray], np.ndarray]


def _walk(p1: np.ndarray, decide: Decider, offset: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    SC recursion over the butterfly.

    p1 has shape (n, batch). decide(j, p) receives P(U_j = 1 | past, side) for
    every batch member and returns the chosen bits. Returns (u, x) of shape (n, batch).
    """
    n = p1.shape[0]
    if n == 1:
        bit = np.asarray(decide(offset, p1[0]), dtype=np.uint8).reshape(p1.shape[1:])
        return bit[None], bit[None]
    half = n // 2
    pa, pb = p1[:half], p1[half:]
    pc = np.clip(pa + pb - 2.0 * pa * pb, 0.0, 1.0)
    ua, c = _walk(pc, decide, offset)
    like_a = np.where(c == 0, pa, 1.0 - pa)
    num1 = pb * like_a
    den = num1 + (1.0 - pb) * (1.0 - like_a)
    if np.any(den <= 0.0):
        log.debug("Zero evidence at indices %d..%d", offset + half, offset + n - 1)
        raise ZeroEvidence(f"Conditioning event has probability zero at index {offset + half}")
    ub, xb = _walk(np.clip(num1 / den, 0.0, 1.0), decide, offset + half)
    return np.concatenate([ua, ub]), np.concatenate([c ^ xb, xb])


class _Found(Exception):
    def __init__(self, p1: float):
        super().__init__()
        self.p1 = p1


def sc_conditional(j: int, prefix: Sequence[int], p1: np.ndarray) -> Tuple[float, float]:
    """(P(U_j = 0 | prefix, side), P(U_j = 1 | prefix, side)) for a 0-based index j"""
    p1 = np.asarray(p1, dtype=float)
    n = p1.shape[0]
    if not 0 <= j < n or len(prefix) != j:
        raise ValidationError(f"Index {j} with a prefix of length {len(prefix)} does not fit n={n}")

    def decide(index: int, prob: np.ndarray) -> np.ndarray:
        if index == j:
            raise _Found(float(prob[0]))
        return np.array([prefix[index]], dtype=np.uint8)

    try:
        _walk(p1[:, None], decide)
    except _Found as found:
        return 1.0 - found.p1, found.p1
    raise ValidationError(f"Index {j} never visited")


def sc_path_conditionals(bits: Sequence[int], p1: np.ndarray) -> np.ndarray:
    """P(U_j = 1 | u^{0:j-1}, side) for every j along a fixed sequence u"""
    bits = np.asarray(bits, dtype=np.uint8)
    out = np.zeros(len(bits))

    def decide(index: int, prob: np.ndarray) -> np.ndarray:
        out[index] = prob[0]
        return bits[index:index + 1]

    _walk(np.asarray(p1, dtype=float)[:, None], decide)
    return out


def sc_fill(known_mask: np.ndarray, known_values: np.ndarray, modes: Sequence[int],
            p1: np.ndarray, rng: Union[np.random.Generator, Any, None] = None) -> np.ndarray:
    """
    Complete a polar-domain sequence in index order.

    HOLD indices copy known_values, DETERMINISTIC indices take the argmax of the
    SC conditional, RANDOM indices are drawn from it. rng is a numpy generator
    or any object with a draw(index, p1) method.
    """
    modes = np.asarray(modes)
    known_mask = np.asarray(known_mask, dtype=bool)
    if np.any((modes == SCMode.HOLD) & ~known_mask):
        raise ValidationError("Every held index needs a known value")
    if rng is None or isinstance(rng, np.random.Generator):
        sampler = RngSampler(rng if rng is not None else np.random.default_rng())
    else:
        sampler = rng

    def decide(index: int, prob: np.ndarray) -> np.ndarray:
        mode = modes[index]
        if mode == SCMode.HOLD:
            return np.array([known_values[index]], dtype=np.uint8)
        if mode == SCMode.DETERMINISTIC:
            return np.array([prob[0] > 0.5], dtype=np.uint8)
        return np.array([sampler.draw(index, float(prob[0]))], dtype=np.uint8)

    u, _ = _walk(np.asarray(p1, dtype=float)[:, None], decide)
    return u[:, 0]


def sc_decode(p1: np.ndarray, known_mask: np.ndarray, known_values: np.ndarray) -> np.ndarray:
    """Successive argmax decisions for every index not covered by known_mask"""
    known_mask = np.asarray(known_mask, dtype=bool)

    def decide(index: int, prob: np.ndarray) -> np.ndarray:
        if known_mask[index]:
            return np.array([known_values[index]], dtype=np.uint8)
        return np.array([prob[0] > 0.5], dtype=np.uint8)

    u, _ = _walk(np.asarray(p1, dtype=float)[:, None], decide)
    return u[:, 0]


@dataclass(frozen=True)
class EntropyProfile:
    """H(A_j | A^{0:j-1}, side^n) for every index j of one layer and conditioning"""

    layer: str
    conditioning: Tuple[str, ...]
    values: np.ndarray
    method: str
    samples: int = 0

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def tag(self) -> str:
        return f"{self.layer}|{''.join(self.conditioning)}"

    def to_text(self) -> str:
        return json.dumps({
            "format": PROFILE_FORMAT,
            "version": PROFILE_VERSION,
            "layer": self.layer,
            "conditioning": list(self.conditioning),
            "method": self.method,
            "samples": self.samples,
            "n": self.n,
            "values": [float(v) for v in self.values],
        }, indent=2)

    @classmethod
    def from_text(cls, text: str) -> "EntropyProfile":
        record = json.loads(text)
        if record.get("format") != PROFILE_FORMAT or record.get("version") != PROFILE_VERSION:
            raise ValidationError("Not a supported entropy profile file")
        values = np.array(record["values"], dtype=float)
        if values.shape[0] != record["n"]:
            raise ValidationError("Profile length disagrees with its n field")
        return cls(layer=record["layer"], conditioning=tuple(record["conditioning"]),
                   values=values, method=record["method"], samples=int(record["samples"]))


def binary_entropy(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return -(xlogy(q, q) + xlogy(1.0 - q, 1.0 - q)) / np.log(2.0)


def bec_profile(n: int, erasure: float) -> np.ndarray:
    """Closed-form profile of a uniform input observed through BEC(erasure)"""
    if not is_power_of_two(n):
        raise LengthNotPowerOfTwo(f"Sequence length {n} is not a power of two")
    if n == 1:
        return np.array([erasure], dtype=float)
    half = n // 2
    return np.concatenate([bec_profile(half, 2.0 * erasure - erasure * erasure),
                           bec_profile(half, erasure * erasure)])


def sufficient_pair_table(table: np.ndarray) -> np.ndarray:
    """Merge side symbols with equal posteriors and drop impossible ones"""
    mass = table.sum(axis=0)
    keep = mass > 0
    table, mass = table[:, keep], mass[keep]
    posterior = np.round(table[1] / mass, 12)
    _, inverse = np.unique(posterior, return_inverse=True)
    merged = np.zeros((2, int(inverse.max()) + 1 if inverse.size else 1))
    np.add.at(merged[0], inverse, table[0])
    np.add.at(merged[1], inverse, table[1])
    return merged


def _exact_profile(table: np.ndarray, n: int, cap: int) -> np.ndarray:
    merged = sufficient_pair_table(table)
    sides = merged.shape[1]
    states = (2 * sides) ** n
    if states > cap:
        log.error("Exact profile needs %d states, cap is %d", states, cap)
        raise StateSpaceTooLarge(f"Exact profile needs {states} states, cap is {cap}",
                                 {"states": states, "cap": cap})
    joint = merged
    for _ in range(n - 1):
        joint = np.multiply.outer(joint, merged)
    axes = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    joint = joint.transpose(axes).reshape(2 ** n, sides ** n)
    polar = np.empty_like(joint)
    polar[transform_permutation(n)] = joint

    values = np.empty(n)
    previous = float(entropy(polar.sum(axis=0), base=2))
    for j in range(n):
        prefix = polar.reshape(2 ** (j + 1), 2 ** (n - j - 1), -1).sum(axis=1)
        current = float(entropy(prefix.ravel(), base=2))
        values[j] = current - previous
        previous = current
    return values


class RunningStats:
    """Per-index streaming mean and variance, merged batch by batch"""

    def __init__(self, size: int):
        self.count = 0
        self.mean = np.zeros(size)
        self.m2 = np.zeros(size)

    def update(self, batch: np.ndarray):
        """batch has shape (size, batch_count)"""
        count = batch.shape[1]
        if count == 0:
            return
        mean = batch.mean(axis=1)
        m2 = ((batch - mean[:, None]) ** 2).sum(axis=1)
        total = self.count + count
        delta = mean - self.mean
        self.mean = self.mean + delta * count / total
        self.m2 = self.m2 + m2 + delta ** 2 * self.count * count / total
        self.count = total

    def ci_width(self) -> np.ndarray:
        if self.count < 2:
            return np.full(self.mean.shape, np.inf)
        return 2.0 * 1.96 * np.sqrt(self.m2 / (self.count - 1) / self.count)


def _mc_profile(table: np.ndarray, n: int, samples: int, rng: np.random.Generator, tag: str) -> np.ndarray:
    sides = table.shape[1]
    mass = table.sum(axis=0)
    posterior = np.divide(table[1], mass, out=np.full(mass.shape, 0.5), where=mass > 0)
    cells = table.ravel() / table.sum()
    stats = RunningStats(n)
    remaining = samples
    while remaining > 0:
        batch = min(MC_BATCH, remaining)
        remaining -= batch
        drawn = rng.choice(cells.size, size=(batch, n), p=cells)
        symbols, side = drawn // sides, drawn % sides
        u = polar_transform(symbols.astype(np.uint8))
        loss = np.zeros((n, batch))

        def decide(index: int, prob: np.ndarray, u=u, loss=loss) -> np.ndarray:
            bit = u[:, index]
            chosen = np.where(bit == 1, prob, 1.0 - prob)
            loss[index] = -np.log2(np.clip(chosen, 1e-300, 1.0))
            return bit

        _walk(posterior[side].T, decide)
        stats.update(loss)
    width = float(np.max(stats.ci_width()))
    if width > MC_CI_WIDTH:
        log.warning("SampleCountTooSmall: confidence interval width %.4f for %s with %d samples",
                    width, tag, samples)
    return stats.mean


def _quantize(q: np.ndarray, w: np.ndarray, bins: int) -> Tuple[np.ndarray, np.ndarray]:
    keep = w > 0
    q, w = q[keep], w[keep]
    index = np.minimum((q * bins).astype(np.int64), bins - 1)
    weight = np.bincount(index, weights=w, minlength=bins)
    moment = np.bincount(index, weights=w * q, minlength=bins)
    used = weight > 0
    return moment[used] / weight[used], weight[used]


def _de_minus(q: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    qa, qb = q[:, None], q[None, :]
    return (qa + qb - 2.0 * qa * qb).ravel(), np.outer(w, w).ravel()


def _de_plus(q: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    qa, qb = q[:, None], q[None, :]
    weight = np.outer(w, w)
    pc = qa + qb - 2.0 * qa * qb
    zero_num = qa * qb
    one_num = qb * (1.0 - qa)
    zero = np.divide(zero_num, 1.0 - pc, out=np.full(pc.shape, 0.5), where=(1.0 - pc) > 0)
    one = np.divide(one_num, pc, out=np.full(pc.shape, 0.5), where=pc > 0)
    values = np.concatenate([zero.ravel(), one.ravel()])
    weights = np.concatenate([(weight * (1.0 - pc)).ravel(), (weight * pc).ravel()])
    return np.clip(values, 0.0, 1.0), weights


def _de_profile(table: np.ndarray, n: int, bins: int) -> np.ndarray:
    mass = table.sum(axis=0)
    keep = mass > 0
    q = table[1, keep] / mass[keep]
    w = mass[keep] / mass.sum()
    values = []

    def recurse(q: np.ndarray, w: np.ndarray, size: int):
        if size == 1:
            values.append(float(np.sum(w * binary_entropy(q))))
            return
        recurse(*_quantize(*_de_minus(q, w), bins), size // 2)
        recurse(*_quantize(*_de_plus(q, w), bins), size // 2)

    recurse(*_quantize(q, w, bins), n)
    return np.array(values)


def entropy_profile(model: JointModel, layer: str, conditioning: Union[str, Sequence[str]],
                    config: CodeConfig, rng: Optional[np.random.Generator] = None) -> EntropyProfile:
    """Per-index conditional entropies of the transform of `layer` given the side variables"""
    given = parse_variables(conditioning)
    if layer not in LAYER_VARIABLES:
        raise ValidationError(f"Layer must be one of {LAYER_VARIABLES}, got {layer}")
    table = model.pair_table(layer, given)
    tag = f"{layer}|{''.join(given)}"
    samples = 0
    if config.method == "exact":
        values = _exact_profile(table, config.n, config.exact_cap)
    elif config.method == "mc":
        rng = rng if rng is not None else named_rng(config.seed, "profile", tag)
        values = _mc_profile(table, config.n, config.samples, rng, tag)
        samples = config.samples
    elif config.method == "de":
        values = _de_profile(table, config.n, config.bins)
    else:
        raise ValidationError(f"Unknown profile method {config.method}")
    values = np.clip(values, 0.0, 1.0)
    log.debug("Profile %s (%s): mean entropy %.4f", tag, config.method, float(values.mean()))
    return EntropyProfile(layer=layer, conditioning=given, values=values, method=config.method, samples=samples)


def posterior_sequence(model: JointModel, layer: str, conditioning: Sequence[str],
                       sequences: Dict[str, np.ndarray], n: int) -> np.ndarray:
    """Per-symbol P(layer = 1 | side) for observed side sequences"""
    given = parse_variables(conditioning)
    return model.posterior(layer, given)[model.side_index(given, sequences, n)]
