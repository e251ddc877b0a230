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
Chained multi-block encoder and the two receiver decoders.

The chaining plans are compiled into a layout of copy rules over three
polar-domain layers: "A" (inner layer, V), "T1" and "T2" (outer layers, U1
and U2). A rule says that a position of a layer in block i holds the XOR of
positions of adjacent blocks, each optionally masked by a secret key. A rule
position without any source inside the chain carries message bits instead.

Receiver 1 decodes blocks forward, Receiver 2 backward. Everything one
receiver cannot decode from its channel output in the first block it visits
travels as encrypted side information, together with the randomized
positions it cannot decode in any block.
"""

import logging

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2

from wtbcpolarlib.dmsmodel import JointModel
from wtbcpolarlib.errors import PlanMismatch, ValidationError
from wtbcpolarlib.polarcore import (RngSampler, SCMode, polar_transform, posterior_sequence,
                                    sc_decode, sc_fill)
from wtbcpolarlib.setbuilder import CodeDesign

log = logging.getLogger(__name__)

LAYERS = ("A", "T1", "T2")
MESSAGE_KINDS = ("W", "S")

Indices = Tuple[int, ...]


@dataclass(frozen=True)
class Source:
    layer: str
    offset: int
    pos: int
    key: str = ""
    key_pos: int = 0


@dataclass(frozen=True)
class CopyRule:
    name: str
    sources: Tuple[Source, ...]

    def active(self, block: int, blocks: int) -> Tuple[Source, ...]:
        return tuple(s for s in self.sources if 0 <= block + s.offset < blocks)


@dataclass(frozen=True)
class LayerSpec:
    """
    One polar-domain layer.

    hold positions are set by messages, copies or freezing; every other
    position is completed by SC encoding given `conditioning`, argmax on
    `deterministic` and randomly elsewhere.
    """

    name: str
    variable: str
    conditioning: Tuple[str, ...]
    hold: Indices
    deterministic: Indices
    private: FrozenSet[int]
    frozen: FrozenSet[int]
    rules: Mapping[int, CopyRule]
    owner: int
    n: int

    @cached_property
    def modes(self) -> np.ndarray:
        modes = np.full(self.n, SCMode.RANDOM, dtype=np.int64)
        modes[list(self.deterministic)] = SCMode.DETERMINISTIC
        modes[list(self.hold)] = SCMode.HOLD
        return modes

    @cached_property
    def hold_set(self) -> FrozenSet[int]:
        return frozenset(self.hold)

    def message_positions(self, block: int, blocks: int) -> Dict[str, Indices]:
        positions: Dict[str, List[int]] = {"W": [], "S": []}
        for pos in self.hold:
            if pos in self.frozen:
                continue
            rule = self.rules.get(pos)
            if rule is not None and rule.active(block, blocks):
                continue
            positions["W" if pos in self.private else "S"].append(pos)
        return {kind: tuple(values) for kind, values in positions.items()}


@dataclass(frozen=True)
class ReceiverView:
    """What one receiver resolves, decodes and reads from side information in one layer"""

    receiver: int
    layer: str
    low: FrozenSet[int]
    needed: Indices
    phi: Indices
    decode_conditioning: Tuple[str, ...]

    @property
    def side_length(self) -> Tuple[int, int]:
        return len(self.needed), len(self.phi)


@dataclass(frozen=True)
class ChainLayout:
    corner: int
    blocks: int
    n: int
    chain_keys: bool
    layers: Dict[str, LayerSpec]
    views: Dict[Tuple[int, str], ReceiverView]
    key_lengths: Dict[str, int]

    def receiver_layers(self, receiver: int) -> Tuple[str, str]:
        return "A", f"T{receiver}"

    def owned_layers(self, receiver: int) -> Tuple[str, ...]:
        return tuple(name for name in LAYERS if self.layers[name].owner == receiver)

    def first_block(self, receiver: int) -> int:
        return 0 if receiver == 1 else self.blocks - 1

    def decoding_order(self, receiver: int) -> Sequence[int]:
        return range(self.blocks) if receiver == 1 else range(self.blocks - 1, -1, -1)

    def side_key_name(self, receiver: int, layer: str) -> str:
        return f"side_{'v' if layer == 'A' else 'u'}_{receiver}"

    def side_info_length(self, receiver: int, layer: str) -> int:
        upsilon, phi = self.views[(receiver, layer)].side_length
        return upsilon + self.blocks * phi

    @cached_property
    def reverse_rules(self) -> Dict[Tuple[str, int], List[Tuple[str, int, CopyRule, Source]]]:
        """(source layer, source position) -> rules reading it"""
        index: Dict[Tuple[str, int], List[Tuple[str, int, CopyRule, Source]]] = {}
        for name, spec in self.layers.items():
            for pos, rule in spec.rules.items():
                for source in rule.sources:
                    index.setdefault((source.layer, source.pos), []).append((name, pos, rule, source))
        return index

    def message_positions(self) -> Dict[Tuple[str, int, str], Indices]:
        positions = {}
        for name, spec in self.layers.items():
            for block in range(self.blocks):
                for kind, values in spec.message_positions(block, self.blocks).items():
                    positions[(name, block, kind)] = values
        return positions


def _mask_sources(keyed: Mapping[int, Tuple[str, int]], layer: str, offset: int,
                  positions: Iterable[int]) -> Tuple[Source, ...]:
    return tuple(Source(layer, offset, pos, *keyed.get(pos, ("", 0))) for pos in positions)


def compile_layout(design: CodeDesign, blocks: Optional[int] = None) -> ChainLayout:
    """Turn the chaining plans of a design into copy rules per layer"""
    blocks = design.config.blocks if blocks is None else blocks
    if blocks < 1:
        raise ValidationError(f"Number of blocks must be at least 1, got {blocks}")
    n = design.config.n
    k, kb = design.corner, 3 - design.corner
    plan, outer, part, sets = design.plan, design.outer, design.plan.partition, design.sets

    # keyed[(layer, offset)][pos] = (key, index inside the key)
    keyed: Dict[Tuple[str, int], Dict[int, Tuple[str, int]]] = {}
    if k == 1:
        keyed[("A", 1)] = {pos: ("theta_v", j) for j, pos in enumerate(part.c1)}
        keyed[("A", 1)].update({pos: ("gamma_v", j) for j, pos in enumerate(part.c12)})
    else:
        keyed[("A", -1)] = {pos: ("psi_v", j) for j, pos in enumerate(part.c2)}
        keyed[("A", -1)].update({pos: ("gamma_v", j) for j, pos in enumerate(part.c12)})

    def source(layer: str, offset: int, pos: int) -> Source:
        return _mask_sources(keyed.get((layer, offset), {}), layer, offset, (pos,))[0]

    rules: Dict[str, Dict[int, CopyRule]] = {name: {} for name in LAYERS}
    inner = rules["A"]
    theta1, psi1, gamma1 = len(plan.r1), len(plan.r2), len(plan.r12)
    for j, pos in enumerate(plan.r1):
        inner[pos] = CopyRule("R1", (source("A", 1, part.c1[j]),))
    for j, pos in enumerate(plan.r1p):
        inner[pos] = CopyRule("R1'", (source("A", 1, part.c12[gamma1 + j]),))
    for j, pos in enumerate(plan.r2):
        inner[pos] = CopyRule("R2", (source("A", -1, part.c2[j]),))
    for j, pos in enumerate(plan.r2p):
        inner[pos] = CopyRule("R2'", (source("A", -1, part.c12[gamma1 + j]),))
    for j, pos in enumerate(plan.r12):
        inner[pos] = CopyRule("R12", (source("A", -1, part.c12[j]), source("A", 1, part.c12[j])))
    for j, pos in enumerate(plan.r12p):
        inner[pos] = CopyRule("R12'", (source("A", -1, part.c2[psi1 + j]), source("A", 1, part.c1[theta1 + j])))
    for pos, target in zip(plan.rs, plan.pi2):
        inner[pos] = CopyRule("RS", (source("A", -1, target),))
    for pos in plan.rl:
        inner[pos] = CopyRule("RL", (source("A", -1, pos),))

    primary, secondary = f"T{k}", f"T{kb}"
    forward_p = 1 if k == 1 else -1
    forward_s = 1 if kb == 1 else -1
    outer_key = "theta_u" if k == 1 else "psi_u"
    for pos in outer.fk:
        rules[primary][pos] = CopyRule(f"F{k}", (Source(primary, -1, pos),))
    for j, pos in enumerate(outer.d):
        rules[primary][pos] = CopyRule("D", (Source(primary, forward_p, outer.jk[j], outer_key, j),))
    for pos, target in zip(outer.lk, outer.carry_primary):
        rules[primary][pos] = CopyRule(f"L{k}", (Source("A", forward_p, target),))
    for pos in outer.qk:
        rules[secondary][pos] = CopyRule(f"Q{kb}", (Source(secondary, -1, pos),))
    for j, (pos, target) in enumerate(zip(outer.o, outer.o_source)):
        rules[secondary][pos] = CopyRule("O", (Source(secondary, forward_s, target, "o_u", j),))
    for pos, target in zip(outer.nk, outer.bk):
        rules[secondary][pos] = CopyRule("N", (Source(secondary, forward_s, target),))
    for pos, target in zip(outer.m, outer.carry_secondary):
        rules[secondary][pos] = CopyRule(f"M{kb}", (Source("A", forward_s, target),))

    layers = {
        "A": LayerSpec(name="A", variable="V", conditioning=(), hold=sets["V|"].high,
                       deterministic=sets["V|"].low, private=frozenset(part.c),
                       frozen=frozenset(plan.frozen) | frozenset(outer.frozen_inner),
                       rules=inner, owner=k, n=n),
        primary: LayerSpec(name=primary, variable=f"U{k}", conditioning=("V",),
                           hold=sets[f"U{k}|V"].high, deterministic=sets[f"U{k}|V"].low,
                           private=frozenset(outer.j0 + outer.jk), frozen=frozenset(outer.frozen_primary),
                           rules=rules[primary], owner=k, n=n),
        secondary: LayerSpec(name=secondary, variable=f"U{kb}", conditioning=("V", f"U{k}"),
                             hold=sets[f"U{kb}|VU{k}"].high, deterministic=sets[f"U{kb}|VU{k}"].low,
                             private=frozenset(outer.b0 + outer.bk), frozen=frozenset(outer.frozen_secondary),
                             rules=rules[secondary], owner=kb, n=n),
    }
    for name, spec in layers.items():
        stray = set(spec.rules) - spec.hold_set
        if stray:
            log.error("Layer %s has copy rules outside its held positions: %s", name, sorted(stray))
            raise PlanMismatch(f"Layer {name} has copy rules outside its held positions")

    views = {}
    for receiver in (1, 2):
        for name in ("A", f"T{receiver}"):
            spec = layers[name]
            if name == "A":
                low = frozenset(sets[f"V|Y{receiver}"].low)
                conditioning: Tuple[str, ...] = (f"Y{receiver}",)
            else:
                low = frozenset(sets[f"U{receiver}|VY{receiver}"].low)
                conditioning = ("V", f"Y{receiver}")
            extra = frozenset(outer.o_source) if name == secondary else frozenset()
            needed = tuple(sorted((spec.hold_set | extra) - low - spec.frozen))
            phi = tuple(j for j in range(n) if j not in spec.hold_set and j not in extra and j not in low)
            views[(receiver, name)] = ReceiverView(receiver=receiver, layer=name, low=low, needed=needed,
                                                   phi=phi, decode_conditioning=conditioning)

    key_lengths = {
        "theta_v" if k == 1 else "psi_v": len(part.c1) if k == 1 else len(part.c2),
        "gamma_v": len(part.c12),
        outer_key: len(outer.d),
        "o_u": len(outer.o),
    }
    layout = ChainLayout(corner=k, blocks=blocks, n=n, chain_keys=design.config.chain_keys,
                         layers=layers, views=views, key_lengths=key_lengths)
    for receiver in (1, 2):
        for name in layout.receiver_layers(receiver):
            key_lengths[layout.side_key_name(receiver, name)] = layout.side_info_length(receiver, name)
    if log.isEnabledFor(logging.DEBUG):
        for (receiver, name), view in views.items():
            log.debug("Receiver %d layer %s: %d resolved, %d decoded, %d randomized positions",
                      receiver, name, len(view.needed), len(view.low), len(view.phi))
    return layout


@dataclass(frozen=True)
class KeyRing:
    """Secret keys shared by the transmitter and the legitimate receivers"""

    keys: Dict[str, np.ndarray]

    def bit(self, name: str, index: int) -> int:
        if not name:
            return 0
        return int(self.keys[name][index])

    def total_bits(self, names: Optional[Iterable[str]] = None) -> int:
        names = self.keys.keys() if names is None else names
        return int(sum(len(self.keys[name]) for name in names))

    def for_receiver(self, receiver: int) -> "KeyRing":
        other = 3 - receiver
        return KeyRing({name: bits for name, bits in self.keys.items() if not name.endswith(f"_{other}")})


CHAIN_KEYS = ("theta_v", "psi_v", "gamma_v", "theta_u", "psi_u")


def generate_keys(layout: ChainLayout, rng: np.random.Generator) -> KeyRing:
    keys = {}
    for name, length in sorted(layout.key_lengths.items()):
        bits = rng.integers(0, 2, size=length, dtype=np.uint8)
        if name in CHAIN_KEYS and not layout.chain_keys:
            bits = np.zeros(length, dtype=np.uint8)
        keys[name] = bits
    log.debug("Generated keys: %s", {name: len(bits) for name, bits in keys.items()})
    return KeyRing(keys)


@dataclass(frozen=True)
class MessageSet:
    """
    Message bits per (layer, block, kind), kind "W" for private and "S" for
    confidential bits, each aligned with the positions that carry it.
    """

    segments: Dict[Tuple[str, int, str], np.ndarray]
    positions: Dict[Tuple[str, int, str], Indices]

    @cached_property
    def _lookup(self) -> Dict[Tuple[str, int, int], int]:
        lookup = {}
        for key, bits in self.segments.items():
            layer, block, _ = key
            for pos, bit in zip(self.positions[key], bits):
                lookup[(layer, block, pos)] = int(bit)
        return lookup

    def bit(self, layer: str, block: int, pos: int) -> int:
        try:
            return self._lookup[(layer, block, pos)]
        except KeyError:
            raise PlanMismatch(f"No message bit for layer {layer} block {block} position {pos}") from None

    def total_bits(self, kind: Optional[str] = None, layers: Optional[Iterable[str]] = None) -> int:
        layers = LAYERS if layers is None else tuple(layers)
        return int(sum(len(bits) for (layer, _, k), bits in self.segments.items()
                       if layer in layers and (kind is None or k == kind)))

    def restricted(self, layers: Iterable[str]) -> "MessageSet":
        layers = tuple(layers)
        keep = [key for key in self.segments if key[0] in layers]
        return MessageSet({key: self.segments[key] for key in keep}, {key: self.positions[key] for key in keep})

    def concatenated(self, kind: str, layers: Optional[Iterable[str]] = None) -> np.ndarray:
        layers = LAYERS if layers is None else tuple(layers)
        parts = [self.segments[key] for key in sorted(self.segments) if key[0] in layers and key[2] == kind]
        return np.concatenate(parts).astype(np.uint8) if parts else np.zeros(0, dtype=np.uint8)

    def receiver_view(self, receiver: int, layout: ChainLayout) -> Dict[str, np.ndarray]:
        """
        Messages of one receiver, with the private bits split into the part
        that is repeated in an adjacent block and the rest.
        """
        layers = layout.owned_layers(receiver)
        repeated_sources = {(s.layer, s.pos) for spec in layout.layers.values()
                            for rule in spec.rules.values() for s in rule.sources}
        repeated, rest = [], []
        for key in sorted(self.segments):
            layer, _, kind = key
            if layer not in layers or kind != "W":
                continue
            for pos, bit in zip(self.positions[key], self.segments[key]):
                (repeated if (layer, pos) in repeated_sources else rest).append(int(bit))
        return {"W_repeated": np.array(repeated, dtype=np.uint8), "W_rest": np.array(rest, dtype=np.uint8),
                "S": self.concatenated("S", layers)}

    def mismatch(self, other: "MessageSet") -> bool:
        """True if any segment the other set holds differs from this one"""
        for key, bits in other.segments.items():
            if key not in self.segments or not np.array_equal(self.segments[key], bits):
                return True
        return False


def draw_messages(layout: ChainLayout, rng: np.random.Generator) -> MessageSet:
    positions = layout.message_positions()
    segments = {key: rng.integers(0, 2, size=len(values), dtype=np.uint8)
                for key, values in sorted(positions.items())}
    return MessageSet(segments=segments, positions=positions)


@dataclass(frozen=True)
class ChainTransmission:
    """
    Encoder output. polar[layer] and the symbol sequences have shape (L, n);
    side_info maps (receiver, layer) to the encrypted side information bits.
    """

    polar: Dict[str, np.ndarray]
    v: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    x: np.ndarray
    side_info: Dict[Tuple[int, str], np.ndarray]
    audit: Dict[Tuple[str, int, int], str] = field(repr=False)

    def side_info_for(self, receiver: int) -> Dict[str, np.ndarray]:
        return {layer: bits for (r, layer), bits in self.side_info.items() if r == receiver}

    def segment(self, layer: str, block: int, positions: Sequence[int]) -> np.ndarray:
        return self.polar[layer][block, list(positions)]

    def rule_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for origin in self.audit.values():
            counts[origin] = counts.get(origin, 0) + 1
        return counts

    def to_dict(self) -> Dict[str, Any]:
        return {
            "polar": {layer: values.tolist() for layer, values in self.polar.items()},
            "V": self.v.tolist(), "U1": self.u1.tolist(), "U2": self.u2.tolist(), "X": self.x.tolist(),
            "side_info": {f"{layer}@rx{r}": bits.tolist() for (r, layer), bits in sorted(self.side_info.items())},
            "origins": self.rule_counts(),
        }


class _ChainEncoder:
    """Resolves every position of every block on demand, each exactly once"""

    def __init__(self, layout: ChainLayout, model: JointModel, messages: MessageSet, keys: KeyRing, sampler: Any):
        self.layout = layout
        self.model = model
        self.messages = messages
        self.keys = keys
        self.sampler = sampler
        shape = (layout.blocks, layout.n)
        self.values = {name: np.zeros(shape, dtype=np.uint8) for name in LAYERS}
        self.known = {name: np.zeros(shape, dtype=bool) for name in LAYERS}
        self.filled = set()
        self.audit: Dict[Tuple[str, int, int], str] = {}

    def _set(self, layer: str, block: int, pos: int, value: int, origin: str) -> int:
        key = (layer, block, pos)
        if key in self.audit:
            log.error("Position %s written twice (%s, then %s)", key, self.audit[key], origin)
            raise PlanMismatch(f"Position {key} written twice")
        self.audit[key] = origin
        self.values[layer][block, pos] = value
        self.known[layer][block, pos] = True
        return value

    def resolve(self, layer: str, block: int, pos: int) -> int:
        if self.known[layer][block, pos]:
            return int(self.values[layer][block, pos])
        spec = self.layout.layers[layer]
        if pos in spec.frozen:
            return self._set(layer, block, pos, 0, "frozen")
        if pos not in spec.hold_set:
            self.fill(layer, block)
            return int(self.values[layer][block, pos])
        rule = spec.rules.get(pos)
        active = rule.active(block, self.layout.blocks) if rule is not None else ()
        if not active:
            return self._set(layer, block, pos, self.messages.bit(layer, block, pos), "message")
        value = 0
        for source in active:
            value ^= self.resolve(source.layer, block + source.offset, source.pos)
            value ^= self.keys.bit(source.key, source.key_pos)
        return self._set(layer, block, pos, value, f"copy:{rule.name}")

    def symbols(self, variable: str, block: int) -> np.ndarray:
        layer = "A" if variable == "V" else f"T{variable[1]}"
        self.fill(layer, block)
        return polar_transform(self.values[layer][block])

    def fill(self, layer: str, block: int):
        if (layer, block) in self.filled:
            return
        spec = self.layout.layers[layer]
        for pos in spec.hold:
            self.resolve(layer, block, pos)
        sequences = {name: self.symbols(name, block) for name in spec.conditioning}
        p1 = posterior_sequence(self.model, spec.variable, spec.conditioning, sequences, self.layout.n)
        u = sc_fill(self.known[layer][block], self.values[layer][block], spec.modes, p1, self.sampler)
        for pos in range(self.layout.n):
            if not self.known[layer][block, pos]:
                origin = "deterministic" if spec.modes[pos] == SCMode.DETERMINISTIC else "random"
                self._set(layer, block, pos, int(u[pos]), origin)
        self.filled.add((layer, block))


def _check_messages(messages: MessageSet, layout: ChainLayout):
    expected = layout.message_positions()
    for key, positions in expected.items():
        if tuple(messages.positions.get(key, ())) != positions or len(messages.segments.get(key, ())) != len(positions):
            log.error("Message segment %s does not match the layout", key)
            raise PlanMismatch(f"Message segment {key} does not match the layout",
                               {"segment": list(key), "expected": len(positions)})


def _check_keys(keys: KeyRing, layout: ChainLayout, names: Optional[Iterable[str]] = None):
    for name in layout.key_lengths if names is None else names:
        length = layout.key_lengths[name]
        if name not in keys.keys or len(keys.keys[name]) != length:
            log.error("Key %s must hold %d bits", name, length)
            raise PlanMismatch(f"Key {name} must hold {length} bits", {"key": name, "length": length})


def encode_chain(messages: MessageSet, layout: ChainLayout, keys: KeyRing, model: JointModel,
                 rng: Any = None) -> ChainTransmission:
    """
    Encode L blocks. rng is a numpy generator or an object with a
    draw(index, p1) method supplying the randomized SC decisions.
    """
    _check_messages(messages, layout)
    _check_keys(keys, layout)
    if rng is None or isinstance(rng, np.random.Generator):
        sampler = RngSampler(rng if rng is not None else np.random.default_rng())
    else:
        sampler = rng
    encoder = _ChainEncoder(layout, model, messages, keys, sampler)
    for block in range(layout.blocks):
        for name in LAYERS:
            encoder.fill(name, block)
    if len(encoder.audit) != len(LAYERS) * layout.blocks * layout.n:
        raise PlanMismatch("Some positions were never assigned")

    polar = encoder.values
    v = polar_transform(polar["A"])
    u1 = polar_transform(polar["T1"])
    u2 = polar_transform(polar["T2"])
    x = model.channel_input(v, u1, u2)

    side_info = {}
    for receiver in (1, 2):
        first = layout.first_block(receiver)
        for name in layout.receiver_layers(receiver):
            view = layout.views[(receiver, name)]
            parts = [polar[name][first, list(view.needed)]]
            parts += [polar[name][block, list(view.phi)] for block in range(layout.blocks)]
            plain = np.concatenate(parts).astype(np.uint8)
            side_info[(receiver, name)] = plain ^ keys.keys[layout.side_key_name(receiver, name)]
    if log.isEnabledFor(logging.DEBUG):
        log.debug("Encoded %d blocks, position origins %s", layout.blocks,
                  ChainTransmission(polar, v, u1, u2, x, side_info, encoder.audit).rule_counts())
    return ChainTransmission(polar=polar, v=v, u1=u1, u2=u2, x=x, side_info=side_info, audit=encoder.audit)


def _decode(receiver: int, side_info: Mapping[str, np.ndarray], keys: KeyRing, y_blocks: np.ndarray,
            layout: ChainLayout, model: JointModel) -> MessageSet:
    y_blocks = np.asarray(y_blocks)
    if y_blocks.shape != (layout.blocks, layout.n):
        raise PlanMismatch(f"Expected {layout.blocks} output blocks of length {layout.n}, got shape {y_blocks.shape}")
    back = -1 if receiver == 1 else 1
    first = layout.first_block(receiver)
    names = layout.receiver_layers(receiver)
    _check_keys(keys, layout, [layout.side_key_name(receiver, name) for name in names])
    shape = (layout.blocks, layout.n)
    est = {name: np.zeros(shape, dtype=np.uint8) for name in names}
    decoded = {name: set() for name in names}

    plain = {}
    for name in names:
        key = keys.keys[layout.side_key_name(receiver, name)]
        bits = np.asarray(side_info[name], dtype=np.uint8)
        if bits.shape != key.shape:
            raise PlanMismatch(f"Side information for layer {name} must hold {len(key)} bits")
        plain[name] = bits ^ key

    def source_value(source: Source, block: int) -> Optional[int]:
        target = block + source.offset
        if source.layer not in est or target not in decoded[source.layer]:
            return None
        return int(est[source.layer][target, source.pos]) ^ keys.bit(source.key, source.key_pos)

    def resolve(name: str, block: int, pos: int) -> int:
        rule = layout.layers[name].rules.get(pos)
        active = rule.active(block, layout.blocks) if rule is not None else ()
        if active and all(s.offset == back for s in active):
            values = [source_value(s, block) for s in active]
            if None not in values:
                return int(np.bitwise_xor.reduce(values))
        for dst_layer, dst_pos, dst_rule, source in layout.reverse_rules.get((name, pos), ()):
            dst_block = block + back
            if source.offset != -back or dst_layer not in est or dst_block not in decoded[dst_layer]:
                continue
            if not 0 <= dst_block < layout.blocks:
                continue
            value = int(est[dst_layer][dst_block, dst_pos]) ^ keys.bit(source.key, source.key_pos)
            others = [source_value(s, dst_block) for s in dst_rule.active(dst_block, layout.blocks) if s != source]
            if None in others:
                continue
            for other in others:
                value ^= other
            return value
        log.error("Receiver %d cannot resolve layer %s block %d position %d", receiver, name, block, pos)
        raise PlanMismatch(f"Receiver {receiver} cannot resolve layer {name} block {block} position {pos}")

    for block in layout.decoding_order(receiver):
        for name in names:
            view = layout.views[(receiver, name)]
            spec = layout.layers[name]
            upsilon_length, phi_length = view.side_length
            known_mask = np.zeros(layout.n, dtype=bool)
            known_values = np.zeros(layout.n, dtype=np.uint8)
            known_mask[list(spec.frozen)] = True
            if block == first:
                known_values[list(view.needed)] = plain[name][:upsilon_length]
            else:
                for pos in view.needed:
                    known_values[pos] = resolve(name, block, pos)
            known_mask[list(view.needed)] = True
            start = upsilon_length + block * phi_length
            known_values[list(view.phi)] = plain[name][start:start + phi_length]
            known_mask[list(view.phi)] = True

            sequences = {f"Y{receiver}": y_blocks[block]}
            if "V" in view.decode_conditioning:
                sequences["V"] = polar_transform(est["A"][block])
            p1 = posterior_sequence(model, spec.variable, view.decode_conditioning, sequences, layout.n)
            est[name][block] = sc_decode(p1, known_mask, known_values)
            decoded[name].add(block)

    owned = layout.owned_layers(receiver)
    positions = {key: values for key, values in layout.message_positions().items() if key[0] in owned}
    segments = {key: est[key[0]][key[1], list(values)].astype(np.uint8) for key, values in positions.items()}
    return MessageSet(segments=segments, positions=positions)


def decode_receiver1(side_info: Mapping[str, np.ndarray], keys: KeyRing, y1_blocks: np.ndarray,
                     layout: ChainLayout, model: JointModel) -> MessageSet:
    """Estimates of the messages owned by Receiver 1, decoding blocks first to last"""
    return _decode(1, side_info, keys, y1_blocks, layout, model)


def decode_receiver2(side_info: Mapping[str, np.ndarray], keys: KeyRing, y2_blocks: np.ndarray,
                     layout: ChainLayout, model: JointModel) -> MessageSet:
    """Estimates of the messages owned by Receiver 2, decoding blocks last to first"""
    return _decode(2, side_info, keys, y2_blocks, layout, model)


def crypto_lemma_statistic(length: int) -> Tuple[float, float]:
    """
    Chi-square statistic and p-value of the table of (s, s xor key) over all
    segments s and keys of the given length. Every pair occurs exactly once,
    so the statistic is 0.
    """
    if not 0 <= length <= 16:
        raise ValidationError(f"Segment length must lie in [0, 16], got {length}")
    size = 2 ** length
    keys = np.arange(size, dtype=np.int64)
    statistic = 0.0
    for segment in range(size):
        counts = np.bincount(segment ^ keys, minlength=size)
        statistic += float(np.sum((counts - 1.0) ** 2))
    dof = max((size - 1) ** 2, 1)
    return statistic, float(chi2.sf(statistic, dof))
