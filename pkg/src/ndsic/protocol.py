"""Per-slot behavior of the CRA/SBA discovery variants.

Every slot has two mini-slots.  In the first, transmitters send HELLO in
one beam and receivers listen in one beam; a receiver that decodes a
HELLO from a sender it has not yet discovered records the sender and owes
it an acknowledgement.  In the second, each such receiver sends one ACK
back through the beam it listened on, addressed to all senders it just
discovered, while the first-phase transmitters listen.

Internally beams and modulations are 0-based array indices; the public
scalar API (:class:`SlotDecision`, :func:`choose_slot_decision`) is
1-based.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .deployment import BeamGeometry, NeighborGraph
from .errors import ConfigurationError, InvariantError
from .phy import PhyConfig, SicMode, decode_batch, received_power
from .rng import RngStream


class Base(str, enum.Enum):
    CRA = "CRA"
    SBA = "SBA"


class Role(str, enum.Enum):
    TRANSMIT = "TRANSMIT"
    RECEIVE = "RECEIVE"


@dataclass(frozen=True)
class Variant:
    """Beam-selection base, SIC mode and MPR order.

    ``h == 1`` means MPR is off.  ``mpr`` marks the SIC-MPR protocols even
    at ``h == 1`` (where they coincide with plain SIC).
    """

    base: Base
    sic: SicMode = SicMode.NONE
    h: int = 1
    mpr: bool = False

    def __post_init__(self):
        object.__setattr__(self, "base", Base(self.base))
        object.__setattr__(self, "sic", SicMode(self.sic))
        if int(self.h) != self.h or self.h < 1:
            raise ConfigurationError(f"h must be an integer >= 1, got {self.h}")
        if self.h > 1:
            object.__setattr__(self, "mpr", True)
        if self.mpr and self.sic is SicMode.NONE:
            raise ConfigurationError("MPR variants require SIC")

    @classmethod
    def parse(cls, name: str, h: int | None = None, sic: str | None = None) -> "Variant":
        """Build from names such as ``"SBA"``, ``"CRA-SIC"`` or ``"SBA-SIC-MPR"``."""
        parts = name.upper().replace("_", "-").split("-")
        try:
            base = Base(parts[0])
        except ValueError:
            raise ConfigurationError(f"unknown variant {name!r}") from None
        flags = parts[1:]
        if flags not in ([], ["SIC"], ["SIC", "MPR"]):
            raise ConfigurationError(f"unknown variant {name!r}")
        mpr = flags == ["SIC", "MPR"]
        if not flags:
            mode = SicMode.NONE
        else:
            mode = SicMode(sic) if sic else SicMode.PERFECT
            if mode is SicMode.NONE:
                raise ConfigurationError(f"{name} needs a SIC mode other than 'none'")
        if mpr:
            h = 2 if h is None else h
        elif h not in (None, 1):
            raise ConfigurationError(f"{name} does not use MPR; drop h={h}")
        return cls(base, mode, h or 1, mpr)

    @property
    def name(self) -> str:
        out = self.base.value
        if self.sic is not SicMode.NONE:
            out += "-SIC"
        if self.mpr:
            out += "-MPR"
        return out

    def with_base(self, base) -> "Variant":
        return Variant(Base(base), self.sic, self.h, self.mpr)

    def phy(self, phy: PhyConfig) -> PhyConfig:
        """``phy`` with this variant's SIC mode and modulation count."""
        from dataclasses import replace

        return replace(phy, sic_mode=self.sic, mpr_modulations=self.h)


@dataclass(frozen=True)
class SlotDecision:
    role: Role
    tx_beam: int
    rx_beam: int
    modulation: int = 1


@dataclass
class SlotDecisions:
    """Every node's choice for one slot, as arrays indexed by node id.

    ``beam`` is the beam the node actually uses (its transmit beam when
    ``transmit`` is set, otherwise its receive beam).
    """

    slot: int
    transmit: np.ndarray
    beam: np.ndarray
    modulation: np.ndarray

    def decision(self, node: int, variant: Variant, geom: BeamGeometry) -> SlotDecision:
        b = int(self.beam[node]) + 1
        if variant.base is Base.SBA:
            tx = sba_beam(self.slot, geom.beam_count)
            rx = geom.opposite(tx)
        else:
            tx = rx = b
        role = Role.TRANSMIT if self.transmit[node] else Role.RECEIVE
        return SlotDecision(role, tx, rx, int(self.modulation[node]) + 1)


def sba_beam(slot: int, beam_count: int) -> int:
    """Predefined 1-based SBA beam of a 1-based slot."""
    return (slot - 1) % beam_count + 1


class DecisionDraws:
    """Random sources for slot decisions, one generator per purpose.

    Each slot consumes a fixed number of draws from each generator
    regardless of outcomes, so results do not depend on processing order.
    """

    def __init__(self, rng: RngStream):
        self.role = rng.child("role").generator()
        self.beam = rng.child("beam").generator()
        self.modulation = rng.child("modulation").generator()
        self.ack_modulation = rng.child("ack-modulation").generator()


def decide_slot(
    variant: Variant, node_count: int, slot: int, p_t: float, geom: BeamGeometry, draws: DecisionDraws
) -> SlotDecisions:
    transmit = draws.role.random(node_count) < p_t
    if variant.base is Base.CRA:
        beam = draws.beam.integers(0, geom.beam_count, node_count)
    else:
        tx = sba_beam(slot, geom.beam_count) - 1
        rx = (tx + geom.beam_count // 2) % geom.beam_count
        beam = np.where(transmit, tx, rx)
    if variant.mpr and variant.h > 1:
        modulation = draws.modulation.integers(0, variant.h, node_count)
    else:
        modulation = np.zeros(node_count, dtype=np.int64)
    return SlotDecisions(slot, transmit, beam, modulation)


def choose_slot_decision(
    variant: Variant, node, slot: int, p_t: float, geom: BeamGeometry, rng: RngStream
) -> SlotDecision:
    """Decision of a single node; ``rng`` should be that node's slot stream."""
    gen = rng.generator()
    role = Role.TRANSMIT if gen.random() < p_t else Role.RECEIVE
    if variant.base is Base.CRA:
        tx = rx = int(gen.integers(1, geom.beam_count + 1))
    else:
        tx = sba_beam(slot, geom.beam_count)
        rx = geom.opposite(tx)
    mod = int(gen.integers(1, variant.h + 1)) if variant.mpr and variant.h > 1 else 1
    return SlotDecision(role, tx, rx, mod)


class LinkTable:
    """Directed neighbor links grouped by (source, beam) for fast lookup.

    For link ``e`` from ``src[e]`` to ``dst[e]``: ``beam[e]`` is the
    source's beam containing the destination, ``back_beam[e]`` the
    destination's beam containing the source, ``power[e]`` the received
    power.
    """

    def __init__(self, positions: np.ndarray, graph: NeighborGraph, geom: BeamGeometry, phy: PhyConfig):
        self.node_count = n = graph.node_count
        self.beam_count = nb = geom.beam_count
        edges = np.array(graph.edges(), dtype=np.int64).reshape(-1, 2)
        u, v = edges[:, 0], edges[:, 1]
        delta = positions[v] - positions[u]
        fwd = geom.beam_of_bearing(np.arctan2(delta[:, 1], delta[:, 0])) - 1
        # derive the reverse beam from the forward one so the pair is always consistent
        rev = (fwd + nb // 2) % nb
        dist = np.array([graph.distances[(a, b)] for a, b in edges.tolist()], dtype=float)
        pw = received_power(dist, phy) if len(dist) else np.empty(0)
        src = np.r_[u, v]
        dst = np.r_[v, u]
        beam = np.r_[fwd, rev]
        back = np.r_[rev, fwd]
        power = np.r_[pw, pw]
        key = src * nb + beam
        order = np.argsort(key, kind="stable")
        self.src, self.dst = src[order], dst[order]
        self.beam, self.back_beam, self.power = beam[order], back[order], power[order]
        counts = np.bincount(key[order], minlength=n * nb)
        self.offsets = np.r_[0, np.cumsum(counts)]

    def __len__(self):
        return len(self.src)

    def gather(self, nodes: np.ndarray, beams: np.ndarray) -> np.ndarray:
        """Indices of every link leaving ``nodes[i]`` through ``beams[i]``."""
        key = np.asarray(nodes) * self.beam_count + np.asarray(beams)
        start = self.offsets[key]
        length = self.offsets[key + 1] - start
        total = int(length.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        # concatenated aranges of each [start, start+length)
        ends = np.cumsum(length)
        shift = np.repeat(start - (ends - length), length)
        return np.arange(total) + shift

    def per_beam_degree(self, node: int) -> np.ndarray:
        lo, hi = node * self.beam_count, (node + 1) * self.beam_count
        return np.diff(self.offsets[lo : hi + 1])


class DiscoveryState:
    """Which neighbors each node has discovered.

    ``known[u, v]`` is set once ``u`` has discovered ``v``; entries are
    never cleared.
    """

    def __init__(self, node_count: int):
        self.known = np.zeros((node_count, node_count), dtype=bool)
        self.pair_count = 0

    def discovered(self, u: int) -> set:
        return set(np.flatnonzero(self.known[u]).tolist())

    def mark(self, who: np.ndarray, whom: np.ndarray) -> int:
        """Record discoveries; returns how many pairs were new."""
        if len(who) == 0:
            return 0
        fresh = ~self.known[who, whom]
        if not fresh.any():
            return 0
        # the same pair can appear twice within one call
        keys = np.unique(who[fresh] * self.known.shape[0] + whom[fresh])
        w, x = np.divmod(keys, self.known.shape[0])
        self.known[w, x] = True
        self.pair_count += len(keys)
        return len(keys)

    def per_beam_counts(self, u: int, links: LinkTable) -> np.ndarray:
        """Discovered neighbors of ``u`` counted per (0-based) beam."""
        sel = slice(links.offsets[u * links.beam_count], links.offsets[(u + 1) * links.beam_count])
        hit = self.known[u, links.dst[sel]]
        return np.bincount(links.beam[sel][hit], minlength=links.beam_count)


@dataclass
class HelloOutcome:
    arrivals: np.ndarray  # link ids whose HELLO reached its receiver
    decoded: np.ndarray  # subset of arrivals that decoded
    responder: np.ndarray  # (responder, addressee) pairs owed an ACK
    addressee: np.ndarray


@dataclass
class AckOutcome:
    arrivals: np.ndarray
    decoded: np.ndarray
    discovered: int


def _decode(links: LinkTable, e: np.ndarray, receivers: np.ndarray, modulation: np.ndarray, phy: PhyConfig):
    h = phy.mpr_modulations
    group = receivers * h + modulation[links.src[e]] if h > 1 else receivers
    return decode_batch(group, links.src[e], links.power[e], phy, lone_always=h > 1)


def mini_slot1(decisions: SlotDecisions, links: LinkTable, state: DiscoveryState, phy: PhyConfig) -> HelloOutcome:
    """HELLO phase; marks senders discovered by their receivers."""
    tx = decisions.transmit
    senders = np.flatnonzero(tx)
    e = links.gather(senders, decisions.beam[senders])
    rcv = links.dst[e]
    e = e[~tx[rcv] & (decisions.beam[rcv] == links.back_beam[e])]
    ok = _decode(links, e, links.dst[e], decisions.modulation, phy)
    hit = e[ok]
    r, s = links.dst[hit], links.src[hit]
    # stop mechanism: only senders not yet known get an ACK
    new = ~state.known[r, s]
    r, s = r[new], s[new]
    state.mark(r, s)
    return HelloOutcome(e, hit, r, s)


def mini_slot2(
    hello: HelloOutcome,
    decisions: SlotDecisions,
    links: LinkTable,
    state: DiscoveryState,
    phy: PhyConfig,
    ack_modulation: np.ndarray,
) -> AckOutcome:
    """ACK phase; a listener discovers a replier only if it is addressed."""
    responders = np.unique(hello.responder)
    e = links.gather(responders, decisions.beam[responders])
    lst = links.dst[e]
    e = e[decisions.transmit[lst] & (decisions.beam[lst] == links.back_beam[e])]
    ok = _decode(links, e, links.dst[e], ack_modulation, phy)
    hit = e[ok]
    rep, lis = links.src[hit], links.dst[hit]
    n = links.node_count
    addressed = np.isin(rep * n + lis, hello.responder * n + hello.addressee)
    found = state.mark(lis[addressed], rep[addressed])
    return AckOutcome(e, hit, found)


def check_slot_invariants(
    variant: Variant,
    geom: BeamGeometry,
    decisions: SlotDecisions,
    links: LinkTable,
    known_before: np.ndarray,
    state: DiscoveryState,
    hello: HelloOutcome,
    ack: AckOutcome,
):
    """Raise :class:`InvariantError` if a slot broke a protocol rule."""
    tx = decisions.transmit
    # half-duplex in both mini-slots
    if tx[links.dst[hello.arrivals]].any():
        raise InvariantError("a transmitter received a HELLO")
    if (~tx[links.dst[ack.arrivals]]).any():
        raise InvariantError("an ACK reached a node that did not transmit HELLO")
    if tx[hello.responder].any():
        raise InvariantError("a HELLO transmitter sent an ACK")
    if known_before[hello.responder, hello.addressee].any():
        raise InvariantError("ACK addressed to an already-discovered neighbor")
    if (known_before & ~state.known).any():
        raise InvariantError("a discovered set shrank")
    if state.pair_count != int(state.known.sum()):
        raise InvariantError("pair count out of sync with discovery matrix")
    if variant.base is Base.SBA:
        k = sba_beam(decisions.slot, geom.beam_count) - 1
        if (decisions.beam[tx] != k).any():
            raise InvariantError("SBA transmitters left the scheduled beam")
        if (decisions.beam[~tx] != (k + geom.beam_count // 2) % geom.beam_count).any():
            raise InvariantError("SBA receivers are not in the opposite beam")
