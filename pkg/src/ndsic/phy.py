"""Free-space received power and power-domain packet separation.

Two decoders live here.  ``sic_decode``/``mpr_sic_decode`` work on a
single receiver's list of :class:`ArrivingPacket` and are written for
clarity.  ``decode_batch`` evaluates the same rules for every receiver of
a mini-slot at once on flat numpy arrays; the engine uses it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .deployment import DEFAULT_WAVELENGTH, near_field_limit
from .errors import ConfigurationError, DomainError
from .rng import RngStream

DEFAULT_PBAR_SAMPLES = 100_000


class SicMode(str, enum.Enum):
    NONE = "none"
    PERFECT = "perfect"
    IMPERFECT = "imperfect"


class PacketKind(str, enum.Enum):
    HELLO = "HELLO"
    ACK = "ACK"


@dataclass(frozen=True)
class PhyConfig:
    beta: float = 4.0
    lambda0: float = DEFAULT_WAVELENGTH
    tx_power: float = 1.0
    gain_tx: float = 1.0
    gain_rx: float = 1.0
    noise_floor: float = 0.0
    xi: float = 0.0
    sic_mode: SicMode = SicMode.NONE
    mpr_modulations: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sic_mode", SicMode(self.sic_mode))
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not self.lambda0 > 0:
            raise ConfigurationError(f"lambda0 must be positive, got {self.lambda0}")
        if not 0.0 <= self.xi <= 1.0:
            raise ConfigurationError(f"xi must lie in [0, 1], got {self.xi}")
        if self.noise_floor < 0:
            raise ConfigurationError("noise_floor must be non-negative")
        if self.tx_power <= 0 or self.gain_tx <= 0 or self.gain_rx <= 0:
            raise ConfigurationError("tx_power and antenna gains must be positive")
        if int(self.mpr_modulations) != self.mpr_modulations or self.mpr_modulations < 1:
            raise ConfigurationError("mpr_modulations must be an integer >= 1")

    @property
    def residual(self) -> float:
        return self.xi if self.sic_mode is SicMode.IMPERFECT else 0.0

    @property
    def noise(self) -> float:
        return self.noise_floor if self.sic_mode is SicMode.IMPERFECT else 0.0


@dataclass(frozen=True)
class ArrivingPacket:
    sender: int
    power: float
    modulation: int = 1
    kind: PacketKind = PacketKind.HELLO
    addressees: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.power > 0:
            raise DomainError(f"packet power must be positive, got {self.power}")


@dataclass(frozen=True)
class ReceptionOutcome:
    decoded: tuple = ()
    dropped: frozenset = frozenset()


def received_power(d, phy: PhyConfig):
    """Far-field received power ``(lambda0 / (4 pi d))^2 * P_T G_T G_R``."""
    d_arr = np.asarray(d, dtype=float)
    # small slack so d == lambda0/(4 pi) computed elsewhere is accepted
    if np.any(d_arr < near_field_limit(phy.lambda0) * (1 - 1e-12)):
        raise DomainError("distance is inside the near field")
    s = (phy.lambda0 / (4.0 * np.pi * d_arr)) ** 2 * phy.tx_power * phy.gain_tx * phy.gain_rx
    return float(s) if np.ndim(s) == 0 else s


def _chain(powers, residual, noise, beta):
    """Decode mask for powers already sorted strongest first."""
    m = len(powers)
    # interference still on the air: sum of weaker packets, accumulated weakest first
    weaker = [0.0] * m
    acc = 0.0
    for i in range(m - 1, -1, -1):
        weaker[i] = acc
        acc += powers[i]
    ok = []
    cancelled = 0.0
    for i, s in enumerate(powers):
        if not s >= beta * (weaker[i] + residual * cancelled + noise):
            break
        ok.append(i)
        cancelled += powers[i]
    return ok


def _order(packets):
    return sorted(packets, key=lambda p: (-p.power, p.sender))


def sic_decode(packets, phy: PhyConfig) -> ReceptionOutcome:
    """Decode one receiver's collided packets by the SIR/SINR chain.

    Without SIC a lone packet decodes and any collision loses everything.
    With SIC, packets are peeled strongest first; the first packet below
    ``beta`` ends the chain and every weaker packet is dropped.
    """
    packets = list(packets)
    if not packets:
        return ReceptionOutcome()
    senders = {p.sender for p in packets}
    if phy.sic_mode is SicMode.NONE:
        if len(packets) == 1:
            return ReceptionOutcome((packets[0].sender,), frozenset())
        return ReceptionOutcome((), frozenset(senders))
    ordered = _order(packets)
    ok = _chain([p.power for p in ordered], phy.residual, phy.noise, phy.beta)
    decoded = tuple(ordered[i].sender for i in ok)
    return ReceptionOutcome(decoded, frozenset(senders - set(decoded)))


def mpr_sic_decode(packets, phy: PhyConfig) -> ReceptionOutcome:
    """Separate packets by modulation, then run SIC inside each group.

    Groups are orthogonal: a packet alone in its modulation always
    decodes, and other groups add no interference.
    """
    packets = list(packets)
    h = phy.mpr_modulations
    for p in packets:
        if not 1 <= p.modulation <= h:
            raise DomainError(f"modulation {p.modulation} outside [1, {h}]")
    if h == 1:
        return sic_decode(packets, phy)
    decoded, dropped = [], set()
    for mod in sorted({p.modulation for p in packets}):
        group = [p for p in packets if p.modulation == mod]
        if len(group) == 1:
            decoded.append(group[0].sender)
            continue
        out = sic_decode(group, phy)
        decoded.extend(out.decoded)
        dropped |= out.dropped
    return ReceptionOutcome(tuple(decoded), frozenset(dropped))


def decode_batch(group, sender, power, phy: PhyConfig, lone_always: bool = False) -> np.ndarray:
    """Vectorized decoding of many independent receptions.

    ``group`` labels which packets share a receiver (and modulation, for
    MPR); each group is decoded like ``sic_decode`` would.  With
    ``lone_always`` a packet alone in its group skips the noise test, as
    a lone packet in an MPR modulation group does.  Returns a boolean
    mask aligned with the inputs.
    """
    group = np.asarray(group)
    n = len(group)
    decoded = np.zeros(n, dtype=bool)
    if n == 0:
        return decoded
    sender = np.asarray(sender)
    power = np.asarray(power, dtype=float)
    order = np.lexsort((sender, -power, group))
    g = group[order]
    edge = np.empty(n, dtype=bool)
    edge[0] = True
    np.not_equal(g[1:], g[:-1], out=edge[1:])
    starts = np.flatnonzero(edge)
    sizes = np.diff(starts, append=n)
    rank = np.arange(n) - np.repeat(starts, sizes)

    single = sizes == 1
    if phy.sic_mode is SicMode.NONE or lone_always or phy.noise == 0:
        decoded[order[starts[single]]] = True
        if phy.sic_mode is SicMode.NONE or single.all():
            return decoded
        multi = ~single
    else:
        multi = np.ones_like(single)
    rows = np.repeat(np.cumsum(multi) - 1, sizes)
    in_multi = np.repeat(multi, sizes)
    width = int(sizes.max())
    mat = np.zeros((int(multi.sum()), width))
    mat[rows[in_multi], rank[in_multi]] = power[order][in_multi]
    # weaker-packet sums accumulated from the weakest end, as in _chain
    rev = np.cumsum(mat[:, ::-1], axis=1)[:, ::-1]
    weaker = np.zeros_like(mat)
    weaker[:, :-1] = rev[:, 1:]
    cancelled = np.zeros_like(mat)
    cancelled[:, 1:] = np.cumsum(mat, axis=1)[:, :-1]
    passed = mat >= phy.beta * (weaker + phy.residual * cancelled + phy.noise)
    ok = np.logical_and.accumulate(passed, axis=1)
    decoded[order[in_multi]] = ok[rows[in_multi], rank[in_multi]]
    return decoded


def max_unpack_count(phy: PhyConfig, r: float) -> int:
    """Upper bound on packets jointly decodable by perfect SIC.

    ``floor(2 + log_{1+beta}(16 pi^2 r^2 / (lambda0^2 beta)))``, never
    below one.
    """
    if r < near_field_limit(phy.lambda0) * (1 - 1e-12):
        raise DomainError("radius is inside the near field")
    arg = 16.0 * math.pi**2 * r**2 / (phy.lambda0**2 * phy.beta)
    if not arg > 0 or not math.isfinite(arg):
        return 1
    n0 = math.floor(2.0 + math.log(arg) / math.log1p(phy.beta))
    return max(1, n0)


def sample_sector_distances(gen: np.random.Generator, m: int, samples: int, r: float, lambda0: float):
    """Sorted distances of ``m`` points dropped area-uniformly in a sector.

    The radial density is proportional to ``d`` on ``[lambda0/(4 pi), r]``.
    Returns an array of shape ``(samples, m)``, nearest first.
    """
    d_min = near_field_limit(lambda0)
    u = gen.random((samples, m))
    d = np.sqrt(d_min**2 + u * (r**2 - d_min**2))
    d.sort(axis=1)
    return d


def unpack_prob_samples(d: np.ndarray, beta: float, r: float) -> np.ndarray:
    """Per-sample expected unpack probability for sorted distance rows.

    With ``P_j = 1 / (beta r^2 sum_{l>j} d_l^-2)`` for ``j < m`` and
    ``P_m = 1``, each row yields ``(1/m) sum_i i * prod_{j<=i} P_j``,
    clamped to ``[0, 1]``.
    """
    d = np.atleast_2d(d)
    m = d.shape[1]
    inv = 1.0 / d**2
    # tail[:, j] = sum of d_l^-2 over l = j+1 .. m (1-based), weakest first
    tail = np.cumsum(inv[:, ::-1], axis=1)[:, ::-1]
    p = np.ones_like(d)
    p[:, :-1] = 1.0 / (beta * r**2 * tail[:, 1:])
    prefix = np.cumprod(p, axis=1)
    weights = np.arange(1, m + 1)
    vals = (prefix * weights).sum(axis=1) / m
    return np.clip(vals, 0.0, 1.0)


@lru_cache(maxsize=1024)
def _pbar_cached(m, beta, r, lambda0, samples, seed, path):
    gen = RngStream(seed, path).child("pbar", m).generator()
    d = sample_sector_distances(gen, m, samples, r, lambda0)
    vals = unpack_prob_samples(d, beta, r)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0


def expected_unpack_prob(
    m: int, phy: PhyConfig, r: float, rng: RngStream, samples: int = DEFAULT_PBAR_SAMPLES
) -> float:
    """Monte Carlo estimate of the mean unpack probability among ``m`` packets.

    Returns exactly 1 for a lone packet and 0 beyond :func:`max_unpack_count`.
    """
    return expected_unpack_prob_with_error(m, phy, r, rng, samples)[0]


def expected_unpack_prob_with_error(m, phy, r, rng, samples=DEFAULT_PBAR_SAMPLES):
    """As :func:`expected_unpack_prob`, plus the standard error of the mean."""
    if m < 1:
        raise DomainError(f"packet count must be >= 1, got {m}")
    if m == 1:
        return 1.0, 0.0
    if m > max_unpack_count(phy, r):
        return 0.0, 0.0
    return _pbar_cached(int(m), float(phy.beta), float(r), float(phy.lambda0), int(samples), rng.seed, rng.path)


def pbar_table(phy: PhyConfig, r: float, rng: RngStream, samples: int = DEFAULT_PBAR_SAMPLES) -> dict:
    """``{m: expected_unpack_prob(m)}`` for every m in ``1..n0``."""
    n0 = max_unpack_count(phy, r)
    return {m: expected_unpack_prob(m, phy, r, rng, samples) for m in range(1, n0 + 1)}
