"""Experiment runner.

    ndsic sim     --config cfg.json --out DIR   curve.csv, summary.json
    ndsic theory  --config cfg.json --out DIR   theory.csv, theory.json
    ndsic sweep   --config sweep.json --out DIR results.csv, sweep.json
    ndsic compare --config cfg.json --out DIR   overlay.csv, reductions.csv, compare.json

Exit codes: 0 success, 2 unparseable input, 3 invalid parameters,
4 sweep grid larger than its cap.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import itertools
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze
from .config import ConfigParseError, SimConfig, config_from_dict, load_config
from .engine import AggregateMetrics, run_many
from .errors import ConfigurationError, DomainError, InvariantError
from .protocol import Variant
from .phy import SicMode

log = logging.getLogger("ndsic")

EXIT_PARSE, EXIT_INVARIANT, EXIT_CAP = 2, 3, 4
DEFAULT_SWEEP_CAP = 1000

CURVE_COLUMNS = ("slot", "fraction_mean", "fraction_std", "seeds")
THEORY_COLUMNS = ("slot", "expected_fraction")
OVERLAY_COLUMNS = ("slot", "theory_fraction", "sim_fraction_mean", "abs_gap")
REDUCTION_COLUMNS = (
    "node_count", "base", "variant", "threshold", "base_mean_slots", "variant_mean_slots",
    "reduction_pct", "paired_seeds",
)


class SweepCapError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{float(x):.6f}"
    return str(x)


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) else (str(x) if math.isinf(x) else x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_json(path: Path, payload: dict):
    payload = dict(payload)
    payload["meta"] = {
        "tool": "ndsic",
        "version": __version__,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _threshold_stats(agg: AggregateMetrics) -> dict:
    return {
        f"{t:g}": {
            "mean": agg.threshold_mean[t],
            "std": agg.threshold_std[t],
            "reached": agg.threshold_reached[t],
            "per_seed": [None if math.isnan(v) else int(v) for v in agg.slots_to(t)],
        }
        for t in sorted(agg.threshold_mean)
    }


def curve_rows(agg: AggregateMetrics):
    n = agg.seed_count
    for i, (m, s) in enumerate(zip(agg.mean_curve, agg.std_curve)):
        yield (i + 1, float(m), float(s), n)


def cmd_sim(config: SimConfig, out: Path, jobs: int = 1) -> AggregateMetrics:
    agg = run_many(config, jobs=jobs)
    write_csv(out / "curve.csv", CURVE_COLUMNS, curve_rows(agg))
    write_json(
        out / "summary.json",
        {
            "config": config.to_dict(),
            "seeds": list(agg.seeds),
            "slots_to_threshold": _threshold_stats(agg),
            "final_fraction_mean": float(agg.mean_curve[-1]) if len(agg.mean_curve) else None,
            "total_directed_pairs": [m.total_directed_pairs for m in agg.runs],
        },
    )
    return agg


def cmd_theory(config: SimConfig, out: Path, slots: int | None = None):
    res = analyze(config, slots=slots)
    write_csv(out / "theory.csv", THEORY_COLUMNS, ((i + 1, float(f)) for i, f in enumerate(res.theory_curve)))
    write_json(
        out / "theory.json",
        {
            "config": config.to_dict(),
            "E_T_all": res.expected_total_slots,
            "n0": res.n0,
            "K": res.K,
            "K_int": res.k_int,
            "N_bar": res.n_bar,
            "pbar": {str(m): v for m, v in sorted(res.pbar.items())},
            "discovery_prob": list(res.discovery_prob),
        },
    )
    return res


# -- sweeps -----------------------------------------------------------------

def load_sweep(path, seed_base=None):
    """Parse a sweep file: ``{"base": {...}, "axes": {...}, "cap": n, "fixed_slots": [...]}``."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or "base" not in data or "axes" not in data:
        raise ConfigParseError("sweep file needs 'base' and 'axes' objects")
    unknown = set(data) - {"base", "axes", "cap", "fixed_slots"}
    if unknown:
        raise ConfigParseError(f"unknown sweep field(s) {sorted(unknown)}")
    base = config_from_dict(data["base"], seed_base)
    axes = data["axes"]
    if not isinstance(axes, dict) or not all(isinstance(v, list) and v for v in axes.values()):
        raise ConfigParseError("axes: expected an object of non-empty lists")
    cap = data.get("cap", DEFAULT_SWEEP_CAP)
    fixed = data.get("fixed_slots", [])
    if not isinstance(fixed, list) or not all(isinstance(t, int) and t >= 1 for t in fixed):
        raise ConfigParseError("fixed_slots: expected a list of positive integers")
    return base, axes, int(cap), fixed


def sweep_points(base: SimConfig, axes: dict, cap: int):
    size = math.prod(len(v) for v in axes.values())
    if size > cap:
        raise SweepCapError(f"sweep has {size} grid points, cap is {cap}")
    names = list(axes)
    for values in itertools.product(*(axes[n] for n in names)):
        changes = dict(zip(names, values))
        yield changes, base.with_(**changes)


def cmd_sweep(base, axes, cap, fixed_slots, out: Path, jobs: int = 1):
    names = list(axes)
    points = list(sweep_points(base, axes, cap))
    columns = ("point", *names, "metric", "mean", "std", "reached", "seeds")
    rows, summary = [], []
    for i, (changes, cfg) in enumerate(points):
        agg = run_many(cfg, jobs=jobs)
        vals = [changes[n] for n in names]
        for t in sorted(agg.threshold_mean):
            rows.append((i, *vals, f"slots_to_{t:g}", agg.threshold_mean[t], agg.threshold_std[t],
                         agg.threshold_reached[t], agg.seed_count))
        for T in fixed_slots:
            f = agg.fraction_at(T)
            std = float(f.std(ddof=1)) if len(f) > 1 else 0.0
            rows.append((i, *vals, f"fraction_at_{T}", float(f.mean()), std, len(f), agg.seed_count))
        summary.append({"point": i, "changes": changes, "slots_to_threshold": _threshold_stats(agg)})
    write_csv(out / "results.csv", columns, rows)
    write_json(out / "sweep.json", {"base": base.to_dict(), "axes": axes, "cap": cap,
                                    "fixed_slots": fixed_slots, "points": summary})
    return rows


# -- comparisons ------------------------------------------------------------

def comparison_variants(variant: Variant):
    """The plain, SIC and SIC+MPR protocols sharing ``variant``'s base."""
    sic = variant.sic if variant.sic is not SicMode.NONE else SicMode.PERFECT
    h = variant.h if variant.h > 1 else 2
    return (
        Variant(variant.base),
        Variant(variant.base, sic),
        Variant(variant.base, sic, h, True),
    )


def paired_reduction(base_slots: np.ndarray, other_slots: np.ndarray):
    """Mean per-seed percentage reduction over seeds where both reached the threshold."""
    ok = ~np.isnan(base_slots) & ~np.isnan(other_slots)
    if not ok.any():
        return math.nan, 0
    return float(np.mean(100.0 * (1.0 - other_slots[ok] / base_slots[ok]))), int(ok.sum())


def cmd_compare(config: SimConfig, out: Path, node_counts=None, jobs: int = 1):
    agg = run_many(config, jobs=jobs)
    slots = max(1, len(agg.mean_curve))
    res = analyze(config, slots=slots)
    gap = np.abs(res.theory_curve - agg.mean_curve) if len(agg.mean_curve) else np.zeros(1)
    write_csv(
        out / "overlay.csv",
        OVERLAY_COLUMNS,
        ((i + 1, float(t), float(s), float(g)) for i, (t, s, g) in enumerate(zip(res.theory_curve, agg.mean_curve, gap))),
    )
    threshold = max(config.thresholds)
    plain, sic, mpr = comparison_variants(config.variant)
    rows = []
    for n in node_counts or [config.node_count]:
        per = {}
        for v in (plain, sic, mpr):
            cfg = config.with_(node_count=n, variant=v)
            per[v] = run_many(cfg, jobs=jobs).slots_to(threshold)
        for v in (sic, mpr):
            red, paired = paired_reduction(per[plain], per[v])
            rows.append((n, plain.name, v.name if v is sic else f"{v.name}(h={v.h})", threshold,
                         float(np.nanmean(per[plain])) if paired else math.nan,
                         float(np.nanmean(per[v])) if paired else math.nan, red, paired))
    write_csv(out / "reductions.csv", REDUCTION_COLUMNS, rows)
    mean_red = {}
    for name in sorted({r[2] for r in rows}):
        vals = [r[6] for r in rows if r[2] == name and not math.isnan(r[6])]
        mean_red[name] = float(np.mean(vals)) if vals else math.nan
    payload = {
        "config": config.to_dict(),
        "seeds": list(agg.seeds),
        "max_abs_gap": float(gap.max()),
        "max_abs_gap_slot": int(gap.argmax()) + 1,
        "node_counts": list(node_counts or [config.node_count]),
        "mean_reduction_pct": mean_red,
    }
    write_json(out / "compare.json", payload)
    return payload, rows


# -- entry point --------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="ndsic", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"ndsic {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("sim", "simulate a config over its seeds"),
        ("theory", "evaluate the closed-form analysis"),
        ("sweep", "simulate a parameter grid"),
        ("compare", "theory/simulation overlay and SIC/MPR reductions"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, type=Path, help="JSON config (sweep file for 'sweep')")
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--seeds", type=int, help="number of seeds, overriding the config")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "compare":
            sp.add_argument("--node-counts", type=lambda s: [int(x) for x in s.split(",")],
                            help="comma-separated node counts for the reduction scan")
        if name == "theory":
            sp.add_argument("--slots", type=int, help="curve length (default: slot_budget)")
    return p


def _with_seed_count(cfg: SimConfig, count):
    if count is None:
        return cfg
    if count < 1:
        raise ConfigParseError("--seeds must be >= 1")
    return cfg.with_(seeds=tuple(range(cfg.seeds[0], cfg.seeds[0] + count)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "sweep":
            base, axes, cap, fixed = load_sweep(args.config)
            base = _with_seed_count(base, args.seeds)
            cmd_sweep(base, axes, cap, fixed, args.out, args.jobs)
        else:
            cfg = _with_seed_count(load_config(args.config), args.seeds)
            if args.command == "sim":
                cmd_sim(cfg, args.out, args.jobs)
            elif args.command == "theory":
                cmd_theory(cfg, args.out, args.slots)
            else:
                cmd_compare(cfg, args.out, args.node_counts, args.jobs)
    except ConfigParseError as exc:
        print(f"ndsic: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"ndsic: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SweepCapError as exc:
        print(f"ndsic: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigurationError, DomainError, InvariantError) as exc:
        print(f"ndsic: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (TypeError, KeyError) as exc:
        print(f"ndsic: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return 0


if __name__ == "__main__":
    sys.exit(main())
