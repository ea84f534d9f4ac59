"""Closed-form discovery probabilities and expected discovery time.

For a node A and an undiscovered neighbor B in the same beam, the
per-slot discovery probability is ``P_R + P_T1 * P_T2``:

* ``P_R``  A listens and decodes B's HELLO;
* ``P_T1`` B listens and decodes A's HELLO;
* ``P_T2`` A then decodes B's ACK despite the other replies aimed at it.

Each variant plugs its own collision model into those three terms.
Combinatorial terms use the integer neighbor count ``K_int``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .config import SimConfig
from .deployment import avg_neighbors_analytic, per_beam_neighbors
from .errors import DomainError
from .phy import SicMode, max_unpack_count, pbar_table
from .protocol import Base, Variant
from .rng import RngStream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalysisParams:
    variant: Variant
    K: float
    p_t: float
    theta: float
    h: int = 1
    n0: int = 1
    pbar: dict = field(default_factory=lambda: {1: 1.0})
    beam_count: int | None = None

    def __post_init__(self):
        if not self.K > 0:
            raise DomainError(f"K must be positive, got {self.K}")
        if not 0.0 <= self.p_t <= 1.0:
            raise DomainError(f"p_t must lie in [0, 1], got {self.p_t}")
        if any(not 0.0 <= v <= 1.0 for v in self.pbar.values()):
            raise DomainError("pbar entries must lie in [0, 1]")
        if self.beam_count is None:
            object.__setattr__(self, "beam_count", round(2 * math.pi / self.theta))

    @property
    def k_int(self) -> int:
        return max(1, int(round(self.K)))

    def pbar_at(self, m: int) -> float:
        if m == 1:
            return 1.0
        return self.pbar.get(m, 0.0) if m <= self.n0 else 0.0


@dataclass(frozen=True)
class AnalysisResult:
    discovery_prob: tuple  # indexed by discovered count j
    expected_total_slots: float
    theory_curve: np.ndarray
    K: float
    k_int: int
    n_bar: float
    n0: int
    pbar: dict


def _binom_sum(n: int, q: float, top: int, pbar, offset: int) -> float:
    """sum_{m=0}^{top} C(n, m) q^m (1-q)^(n-m) * pbar(m + offset)."""
    total = 0.0
    for m in range(0, min(top, n) + 1):
        total += comb(n, m, exact=True) * q**m * (1.0 - q) ** (n - m) * pbar(m + offset)
    return total


def _clamp(x: float, what: str) -> float:
    if x > 1.0 or x < 0.0:
        log.debug("clamped %s=%.6g into [0, 1]", what, x)
    return min(1.0, max(0.0, x))


def _terms(params: AnalysisParams, j: int):
    """Return (P_R, P_T1, P_T2) for discovered count ``j``."""
    K = params.k_int
    pt = params.p_t
    v = params.variant
    align = params.theta / (2 * math.pi) if v.base is Base.CRA else 1.0
    tx = align * pt  # a given neighbor transmits toward us
    rx = align * (1 - pt)  # a given neighbor listens toward us

    if v.sic is SicMode.NONE:
        p_r = rx * tx * (1 - tx) ** (K - 1)
        p_t1 = tx * rx * (1 - tx) ** (K - 1)
        p_reply = rx * (1 - tx) ** (K - 1)
        p_t2 = (1 - _clamp(p_reply, "P_reply")) ** (K - 1 - j)
        return p_r, p_t1, p_t2

    h = params.h if v.mpr else 1
    n0 = params.n0
    pb = params.pbar_at
    q = tx / h  # a given neighbor transmits toward us in our modulation
    collide = _binom_sum(K - 1, q, n0 - 1, pb, 1)
    p_r = rx * tx * collide
    p_t1 = tx * rx * collide
    # replies aimed at us from the K-1 other neighbors: those that already know
    # us reply to a fresh sender in our direction, the rest reply to us
    known = (j / K) * rx * (K - j) * tx
    if v.mpr:
        known *= (1 / h) * _binom_sum(K - 2, q, n0 - 2, pb, 2) + (1 - 1 / h) * _binom_sum(K - 2, q, n0 - 1, pb, 1)
    else:
        known *= _binom_sum(K - 2, q, n0 - 2, pb, 2)
    fresh = ((K - j) / K) * rx * _binom_sum(K - 1, q, n0 - 1, pb, 1)
    p_reply = _clamp(known + fresh, "P_reply")
    p_t2 = _binom_sum(K - 1, p_reply / h, n0 - 1, pb, 1)
    return p_r, p_t1, p_t2


def discovery_prob(params: AnalysisParams, j: int) -> float:
    """Per-slot probability that a node discovers a given undiscovered
    neighbor in a beam where ``j`` neighbors are already discovered."""
    if not 0 <= j <= params.k_int - 1:
        raise DomainError(f"discovered count j={j} outside [0, {params.k_int - 1}]")
    p_r, p_t1, p_t2 = _terms(params, j)
    return _clamp(p_r + p_t1 * p_t2, "discovery probability")


def expected_total_slots(params: AnalysisParams) -> float:
    """Expected slots to find every neighbor in every beam.

    Sums the geometric waiting times ``1 / ((K - j) P(j))`` over the
    neighbors of one beam, then scales by the number of beams.  A zero
    probability gives ``inf``.
    """
    K = params.k_int
    total = 0.0
    for j in range(K):
        p = discovery_prob(params, j)
        if p <= 0.0:
            return math.inf
        total += 1.0 / ((K - j) * p)
    return params.beam_count * total


def beam_activity(params: AnalysisParams) -> float:
    """Fraction of slots in which a given beam pair can handshake.

    SBA serves each beam in one slot out of ``beam_count``; CRA already
    folds the alignment odds into its probabilities.
    """
    return 1.0 / params.beam_count if params.variant.base is Base.SBA else 1.0


def theory_curve(params: AnalysisParams, slots: int) -> np.ndarray:
    """Mean-field expected discovered fraction after each slot.

    ``D(t) = D(t-1) + a (K - D(t-1)) P(round(D(t-1)))`` from ``D(0) = 0``,
    with ``a`` the :func:`beam_activity`; returns ``D(t) / K``.
    """
    if slots < 1:
        raise DomainError("slots must be >= 1")
    K = params.k_int
    probs = [discovery_prob(params, j) for j in range(K)]
    a = beam_activity(params)
    d = 0.0
    out = np.empty(slots)
    for t in range(slots):
        j = min(K - 1, int(round(d)))
        d = d + a * (K - d) * probs[j]
        out[t] = d / K
    return out


def params_from_config(config: SimConfig, rng: RngStream | None = None) -> AnalysisParams:
    """Analysis inputs for ``config``: K from the boundary-corrected mean
    degree, n0 and the unpack-probability table from the PHY."""
    n_bar = avg_neighbors_analytic(config.arena)
    K = per_beam_neighbors(n_bar, config.theta)
    if max(1, round(K)) < 1 or round(K) < 1:
        raise DomainError(
            f"K={K:.3f} neighbors per beam rounds to 0; use more nodes, a wider beam or a larger radius"
        )
    phy = config.phy
    v = config.variant
    if v.sic is SicMode.NONE:
        n0, pbar = 1, {1: 1.0}
    else:
        n0 = max_unpack_count(phy, config.r)
        rng = rng or RngStream(config.seeds[0], ("analysis",))
        pbar = pbar_table(phy, config.r, rng, config.pbar_samples)
    return AnalysisParams(v, K, config.p_t, config.theta, v.h, n0, pbar, config.beam_count)


def analyze(config: SimConfig, slots: int | None = None, rng: RngStream | None = None) -> AnalysisResult:
    params = params_from_config(config, rng)
    slots = config.slot_budget if slots is None else slots
    probs = tuple(discovery_prob(params, j) for j in range(params.k_int))
    curve = theory_curve(params, slots) if slots >= 1 else np.empty(0)
    return AnalysisResult(
        probs,
        expected_total_slots(params),
        curve,
        params.K,
        params.k_int,
        avg_neighbors_analytic(config.arena),
        params.n0,
        dict(params.pbar),
    )
