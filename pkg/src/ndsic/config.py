"""Experiment configuration and its JSON representation.

A config file is one JSON object whose keys are the :class:`SimConfig`
field names.  ``node_count``, ``r``, ``beam_count``, ``p_t`` and
``variant`` are required; everything else falls back to the desk-scale
defaults (3000 m x 3000 m arena, beta = 4, lambda0 = 0.125 m, 5000 slots,
20 seeds from base seed 1).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

from .deployment import ArenaSpec, BeamGeometry
from .errors import ConfigurationError
from .phy import DEFAULT_PBAR_SAMPLES, PhyConfig, SicMode
from .protocol import Variant

REQUIRED_KEYS = ("node_count", "r", "beam_count", "p_t", "variant")
PHY_KEYS = ("beta", "lambda0", "tx_power", "gain_tx", "gain_rx", "noise_floor", "xi")
SEED_ENV = "ND_SEED_BASE"


class ConfigParseError(ConfigurationError):
    """Config text is malformed: bad JSON, missing or unknown keys, wrong types."""


@dataclass(frozen=True)
class SimConfig:
    node_count: int
    r: float
    beam_count: int
    p_t: float
    variant: Variant
    a: float = 3000.0
    b: float = 3000.0
    phy: PhyConfig = field(default_factory=PhyConfig)
    slot_budget: int = 5000
    seeds: tuple = tuple(range(1, 21))
    thresholds: tuple = (0.95,)
    pbar_samples: int = DEFAULT_PBAR_SAMPLES
    positions: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "phy", self.variant.phy(self.phy))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if self.positions is not None:
            object.__setattr__(self, "positions", tuple((float(x), float(y)) for x, y in self.positions))
        self.validate()

    def validate(self):
        arena = self.arena  # raises on bad geometry
        self.geometry
        if not 0.0 <= self.p_t <= 1.0:
            raise ConfigurationError(f"p_t must lie in [0, 1], got {self.p_t}")
        if int(self.slot_budget) != self.slot_budget or self.slot_budget < 0:
            raise ConfigurationError(f"slot_budget must be a non-negative integer, got {self.slot_budget}")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if any(not 0 < t <= 1 for t in self.thresholds):
            raise ConfigurationError("thresholds must lie in (0, 1]")
        if self.pbar_samples < 2:
            raise ConfigurationError("pbar_samples must be >= 2")
        if self.positions is not None:
            if len(self.positions) != self.node_count:
                raise ConfigurationError(
                    f"{len(self.positions)} positions given for node_count={self.node_count}"
                )
            for x, y in self.positions:
                if not (0 <= x <= arena.a and 0 <= y <= arena.b):
                    raise ConfigurationError(f"position ({x}, {y}) lies outside the arena")

    @property
    def arena(self) -> ArenaSpec:
        return ArenaSpec(self.a, self.b, self.node_count, self.r)

    @property
    def geometry(self) -> BeamGeometry:
        return BeamGeometry(self.beam_count)

    @property
    def theta(self) -> float:
        return 2.0 * math.pi / self.beam_count

    def with_(self, **changes) -> "SimConfig":
        """Copy with changes; ``phy.<key>``, ``h`` and ``sic_mode`` are accepted too."""
        phy_changes = {k[4:]: changes.pop(k) for k in list(changes) if k.startswith("phy.")}
        phy_changes.update({k: changes.pop(k) for k in list(changes) if k in PHY_KEYS})
        variant = changes.pop("variant", self.variant)
        if isinstance(variant, str):
            variant = Variant.parse(variant, h=changes.pop("h", None), sic=changes.pop("sic_mode", None))
        if "h" in changes or "sic_mode" in changes:
            h = int(changes.pop("h", variant.h))
            sic = SicMode(changes.pop("sic_mode", variant.sic))
            variant = Variant(variant.base, sic, h, variant.mpr or h > 1)
        phy = replace(self.phy, **phy_changes) if phy_changes else self.phy
        return replace(self, variant=variant, phy=phy, **changes)

    def to_dict(self) -> dict:
        out = {
            "a": self.a,
            "b": self.b,
            "node_count": self.node_count,
            "r": self.r,
            "beam_count": self.beam_count,
            "p_t": self.p_t,
            "variant": {"base": self.variant.base.value, "sic_mode": self.variant.sic.value,
                        "h": self.variant.h, "mpr": self.variant.mpr},
            "phy": {k: getattr(self.phy, k) for k in PHY_KEYS},
            "slot_budget": self.slot_budget,
            "seeds": list(self.seeds),
            "thresholds": list(self.thresholds),
            "pbar_samples": self.pbar_samples,
        }
        if self.positions is not None:
            out["positions"] = [list(p) for p in self.positions]
        return out


def _variant_from(value, where: str) -> Variant:
    if isinstance(value, str):
        return Variant.parse(value)
    if not isinstance(value, dict):
        raise ConfigParseError(f"{where}: expected a name or an object")
    unknown = set(value) - {"base", "sic_mode", "h", "mpr"}
    if unknown:
        raise ConfigParseError(f"{where}: unknown key(s) {sorted(unknown)}")
    if "base" not in value:
        raise ConfigParseError(f"{where}: missing required field 'base'")
    h = value.get("h", 1)
    return Variant(value["base"], value.get("sic_mode", "none"), h, bool(value.get("mpr", h > 1)))


def _number(d, key, kind, where):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigParseError(f"{where}{key}: expected a number, got {json.dumps(v)}")
    if kind is int:
        if int(v) != v:
            raise ConfigParseError(f"{where}{key}: expected an integer, got {v}")
        return int(v)
    return float(v)


_TOP_NUMBERS = {"a": float, "b": float, "node_count": int, "r": float, "beam_count": int,
                "p_t": float, "slot_budget": int, "pbar_samples": int}


def config_from_dict(data: dict, seed_base: int | None = None) -> SimConfig:
    """Validate a decoded JSON object into a :class:`SimConfig`.

    ``seeds`` may be a list of integers or a count; counts expand to
    ``seed_base, seed_base + 1, ...`` where ``seed_base`` comes from the
    argument, then ``ND_SEED_BASE``, then the ``seed_base`` key, then 1.
    """
    if not isinstance(data, dict):
        raise ConfigParseError("config must be a JSON object")
    allowed = set(_TOP_NUMBERS) | {"variant", "phy", "seeds", "seed_base", "thresholds", "positions"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigParseError(f"unknown field(s) {sorted(unknown)}")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigParseError(f"missing required field '{key}'")
    kwargs = {k: _number(data, k, kind, "") for k, kind in _TOP_NUMBERS.items() if k in data}
    try:
        kwargs["variant"] = _variant_from(data["variant"], "variant")
    except ValueError as exc:
        if isinstance(exc, ConfigParseError):
            raise
        raise ConfigParseError(f"variant: {exc}") from None
    phy = data.get("phy", {})
    if not isinstance(phy, dict):
        raise ConfigParseError("phy: expected an object")
    unknown = set(phy) - set(PHY_KEYS)
    if unknown:
        raise ConfigParseError(f"phy: unknown key(s) {sorted(unknown)}")
    kwargs["phy"] = PhyConfig(**{k: _number(phy, k, float, "phy.") for k in phy})

    if seed_base is None:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                seed_base = int(env)
            except ValueError:
                raise ConfigParseError(f"{SEED_ENV}={env!r} is not an integer") from None
    if seed_base is None:
        seed_base = int(data.get("seed_base", 1))
    seeds = data.get("seeds", 20)
    if isinstance(seeds, list):
        if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            raise ConfigParseError("seeds: expected a list of integers or a count")
        kwargs["seeds"] = tuple(seeds)
    elif isinstance(seeds, int) and not isinstance(seeds, bool):
        kwargs["seeds"] = tuple(range(seed_base, seed_base + seeds))
    else:
        raise ConfigParseError("seeds: expected a list of integers or a count")
    if "thresholds" in data:
        th = data["thresholds"]
        if not isinstance(th, list) or not all(isinstance(t, (int, float)) for t in th):
            raise ConfigParseError("thresholds: expected a list of numbers")
        kwargs["thresholds"] = tuple(th)
    if "positions" in data:
        pos = data["positions"]
        if not isinstance(pos, list) or not all(isinstance(p, list) and len(p) == 2 for p in pos):
            raise ConfigParseError("positions: expected a list of [x, y] pairs")
        kwargs["positions"] = tuple(tuple(p) for p in pos)
    return SimConfig(**kwargs)


def load_config(path, seed_base: int | None = None) -> SimConfig:
    """Read a JSON config file; JSON syntax errors report line and column."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data, seed_base)


def optimal_config(variant: Variant, node_count: int, **overrides) -> SimConfig:
    """Tuned settings: SBA p_t=0.1 with 6 beams, CRA p_t=0.2 with 4 beams."""
    if variant.base.value == "SBA":
        p_t, beams = 0.1, 6
    else:
        p_t, beams = 0.2, 4
    base = dict(node_count=node_count, r=800.0, beam_count=beams, p_t=p_t, variant=variant)
    base.update(overrides)
    return SimConfig(**base)


__all__ = [
    "ConfigParseError",
    "SimConfig",
    "config_from_dict",
    "load_config",
    "optimal_config",
]
