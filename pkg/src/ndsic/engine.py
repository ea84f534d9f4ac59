"""Seeded slot loop and multi-seed aggregation."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .deployment import Node, build_neighbor_graph, place_nodes, near_field_limit, positions_array
from .protocol import (
    DecisionDraws,
    DiscoveryState,
    LinkTable,
    check_slot_invariants,
    decide_slot,
    mini_slot1,
    mini_slot2,
)
from .rng import RngStream


@dataclass(frozen=True)
class Metrics:
    """Outcome of one run.

    ``fraction_curve[t-1]`` is the fraction of directed neighbor pairs
    discovered after slot ``t``; ``slots_to_threshold`` maps each reached
    threshold to the first slot at which the curve met it.
    """

    fraction_curve: tuple
    slots_to_threshold: dict
    total_directed_pairs: int
    seed: int | None = None


@dataclass(frozen=True)
class AggregateMetrics:
    seeds: tuple
    mean_curve: np.ndarray
    std_curve: np.ndarray
    threshold_mean: dict
    threshold_std: dict
    threshold_reached: dict
    runs: tuple = field(repr=False, default=())

    @property
    def seed_count(self) -> int:
        return len(self.seeds)

    def slots_to(self, threshold: float) -> np.ndarray:
        """Per-seed slots to ``threshold`` (NaN where never reached), in seed order."""
        return np.array([m.slots_to_threshold.get(threshold, math.nan) for m in self.runs], dtype=float)

    def fraction_at(self, slot: int) -> np.ndarray:
        """Per-seed fraction after ``slot`` slots, in seed order."""
        out = []
        for m in self.runs:
            c = m.fraction_curve
            if not c:
                out.append(0.0)
            else:
                out.append(c[min(slot, len(c)) - 1])
        return np.array(out)


class Simulation:
    """One seeded run, advanced slot by slot."""

    def __init__(self, config: SimConfig, seed: int, check_invariants: bool = False):
        self.config = config
        self.seed = seed
        self.check_invariants = check_invariants
        rng = RngStream(seed, ("run",))
        if config.positions is not None:
            self.nodes = [Node(i, x, y) for i, (x, y) in enumerate(config.positions)]
        else:
            self.nodes = place_nodes(
                config.arena, rng.child("placement"), min_separation=near_field_limit(config.phy.lambda0)
            )
        self.positions = positions_array(self.nodes)
        self.graph = build_neighbor_graph(self.nodes, config.r)
        self.geom = config.geometry
        self.links = LinkTable(self.positions, self.graph, self.geom, config.phy)
        self.state = DiscoveryState(config.node_count)
        self.draws = DecisionDraws(rng.child("protocol"))
        self.total_pairs = len(self.links)
        self.slot = 0

    @property
    def fraction(self) -> float:
        if self.total_pairs == 0:
            return 1.0
        return self.state.pair_count / self.total_pairs

    def step(self):
        cfg = self.config
        self.slot += 1
        n = cfg.node_count
        decisions = decide_slot(cfg.variant, n, self.slot, cfg.p_t, self.geom, self.draws)
        if cfg.variant.h > 1:
            ack_mod = self.draws.ack_modulation.integers(0, cfg.variant.h, n)
        else:
            ack_mod = decisions.modulation
        before = self.state.known.copy() if self.check_invariants else None
        hello = mini_slot1(decisions, self.links, self.state, cfg.phy)
        ack = mini_slot2(hello, decisions, self.links, self.state, cfg.phy, ack_mod)
        if self.check_invariants:
            check_slot_invariants(cfg.variant, self.geom, decisions, self.links, before, self.state, hello, ack)
        return decisions, hello, ack


def run(
    config: SimConfig, seed: int | None = None, check_invariants: bool = False, stop_at_thresholds: bool = False
) -> Metrics:
    """Simulate until every directed pair is discovered or the budget ends.

    With ``stop_at_thresholds`` the run also ends once every threshold is
    met; the curve is then shorter but the threshold slots are unchanged.
    """
    seed = config.seeds[0] if seed is None else int(seed)
    sim = Simulation(config, seed, check_invariants)
    thresholds = sorted(set(config.thresholds))
    curve = []
    reached = {}
    if config.slot_budget > 0 and sim.total_pairs == 0:
        return Metrics((1.0,), {t: 1 for t in thresholds}, 0, seed)
    while sim.slot < config.slot_budget:
        sim.step()
        f = sim.fraction
        curve.append(f)
        for t in thresholds:
            if t not in reached and f >= t:
                reached[t] = sim.slot
        if sim.state.pair_count == sim.total_pairs:
            break
        if stop_at_thresholds and len(reached) == len(thresholds):
            break
    return Metrics(tuple(curve), reached, sim.total_pairs, seed)


def _run_one(args):
    config, seed, stop = args
    return run(config, seed, stop_at_thresholds=stop)


def aggregate(runs, thresholds) -> AggregateMetrics:
    runs = tuple(sorted(runs, key=lambda m: m.seed))
    length = max(len(m.fraction_curve) for m in runs)
    mat = np.ones((len(runs), length))
    for i, m in enumerate(runs):
        c = np.asarray(m.fraction_curve, dtype=float)
        mat[i, : len(c)] = c
        if len(c):
            # a finished run stays at its final value
            mat[i, len(c):] = c[-1]
    if length == 0:
        mean = std = np.empty(0)
    else:
        mean = mat.mean(axis=0)
        std = mat.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros(length)
    t_mean, t_std, t_reached = {}, {}, {}
    for t in thresholds:
        vals = np.array([m.slots_to_threshold[t] for m in runs if t in m.slots_to_threshold], dtype=float)
        t_reached[t] = len(vals)
        t_mean[t] = float(vals.mean()) if len(vals) else math.nan
        t_std[t] = float(vals.std(ddof=1)) if len(vals) > 1 else (0.0 if len(vals) else math.nan)
    return AggregateMetrics(tuple(m.seed for m in runs), mean, std, t_mean, t_std, t_reached, runs)


def run_many(config: SimConfig, seeds=None, jobs: int = 1, stop_at_thresholds: bool = False) -> AggregateMetrics:
    """Run every seed and aggregate; the result does not depend on seed order.

    ``stop_at_thresholds`` is passed to :func:`run`; the mean curve is then
    only meaningful up to the earliest stop.
    """
    seeds = tuple(config.seeds if seeds is None else seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    tasks = [(config, s, stop_at_thresholds) for s in sorted(set(int(s) for s in seeds))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_one, tasks))
    else:
        runs = [_run_one(t) for t in tasks]
    return aggregate(runs, sorted(set(config.thresholds)))
