"""Command-line entry point: ``sramimo {geometry,sweep,compare,schema}``.

Exit codes: 0 success, 1 runtime failure (or violated expectation in
``compare``), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InvalidParameterError, SramimoError
from .geometry import geometry_report, parse_geometry
from .sim import (
    CONFIG_SCHEMA,
    WORKERS_ENV,
    configs_from_dict,
    load_config,
    parse_snr_grid,
    result_stem,
    run_sweep,
)

log = logging.getLogger("sramimo")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
HIGHER_IS_BETTER = {"asr": True, "ber_mmse": False, "ber_osic": False}


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def cmd_geometry(args) -> int:
    try:
        layout = parse_geometry(args.spec)
        report = geometry_report(layout)
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def _effective_config(args) -> dict:
    d = load_config(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.trials is not None:
        d["trials"] = args.trials
    if args.snr is not None:
        d["snr_db"] = list(parse_snr_grid(args.snr))
    if args.geometry:
        d["geometries"] = list(args.geometry)
    if args.mode is not None:
        d["covariance_mode"] = args.mode
    return d


def cmd_sweep(args) -> int:
    try:
        cfg_dict = _effective_config(args)
        configs = configs_from_dict(cfg_dict)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print("error: invalid configuration", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    outputs = {}
    try:
        for cfg in configs:
            log.info("sweeping %s: %d trials x %d SNR points", cfg.geometry, cfg.trials, len(cfg.snr_db))
            res = run_sweep(cfg, args.workers)
            outputs[cfg.geometry] = res.write(out, result_stem(cfg.geometry))
            print(res.csv_text(), end="")
    except SramimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    (out / "config.effective.json").write_text(json.dumps(cfg_dict, indent=2, sort_keys=True) + "\n")
    manifest = {
        "config_digest": config_digest(cfg_dict),
        "seed": cfg_dict["seed"],
        "seed_override": args.seed is not None,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "config_path": str(args.config),
        "effective_config": cfg_dict,
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK


# --- compare --------------------------------------------------------------

class _Loaded:
    def __init__(self, path: Path):
        self.path = path
        self.per_trial = None
        if path.suffix == ".json":
            d = json.loads(path.read_text())
            if "per_trial" not in d:
                raise ValueError(f"{path} is not a sweep result")
            self.label = d["config"]["geometry"]
            self.seed = d["config"]["seed"]
            cols = d["columns"]
            rows = np.asarray(d["points"], dtype=float)
            self.per_trial = {k: np.asarray(v, dtype=float) for k, v in d["per_trial"].items()}
        else:
            with open(path, newline="") as fh:
                r = list(csv.reader(fh))
            if not r or "snr_db" not in r[0]:
                raise ValueError(f"{path} is not a sweep result")
            cols, rows = r[0], np.asarray(r[1:], dtype=float)
            self.label, self.seed = path.stem, None
        self.table = {c: rows[:, i] for i, c in enumerate(cols)}
        self.snr = self.table["snr_db"]

    def mean(self, m):
        return self.table[f"{m}_mean"]

    def se(self, m):
        return self.table[f"{m}_se"]


def _paired_se(a: _Loaded, b: _Loaded, metric: str) -> np.ndarray:
    if (a.per_trial is not None and b.per_trial is not None and a.seed == b.seed
            and a.per_trial[metric].shape == b.per_trial[metric].shape):
        d = a.per_trial[metric] - b.per_trial[metric]
        n = d.shape[0]
        return d.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(d.shape[1])
    return np.sqrt(a.se(metric) ** 2 + b.se(metric) ** 2)


def compare_pair(a: _Loaded, b: _Loaded, metric: str) -> dict:
    delta = a.mean(metric) - b.mean(metric)
    se = _paired_se(a, b, metric)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, delta / np.where(se > 0, se, 1.0), np.sign(delta) * np.inf)
    z = np.where(delta == 0, 0.0, z)
    better = delta > 0 if HIGHER_IS_BETTER[metric] else delta < 0
    worse = delta < 0 if HIGHER_IS_BETTER[metric] else delta > 0
    return {"delta": delta, "se": se, "z": z, "a_better": better, "b_better": worse}


def cmd_compare(args) -> int:
    if len(args.results) < 2:
        print("error: compare needs at least two result files", file=sys.stderr)
        return EXIT_USAGE
    try:
        loaded = [_Loaded(Path(p)) for p in args.results]
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: cannot read results: {exc}", file=sys.stderr)
        return EXIT_USAGE
    grid = loaded[0].snr
    for L in loaded[1:]:
        if L.snr.shape != grid.shape or not np.allclose(L.snr, grid):
            print(f"error: SNR grid of {L.path} differs from {loaded[0].path}", file=sys.stderr)
            return EXIT_USAGE
    metrics = list(HIGHER_IS_BETTER) if args.metric == "all" else [args.metric]
    for metric in metrics:
        for i in range(len(loaded)):
            for j in range(i + 1, len(loaded)):
                a, b = loaded[i], loaded[j]
                c = compare_pair(a, b, metric)
                print(f"\n[{metric}] {a.label} vs {b.label}")
                print(f"{'snr_db':>8} {'a_mean':>12} {'b_mean':>12} {'delta':>12} {'paired_se':>10} {'z':>8}")
                for k, s in enumerate(grid):
                    print(f"{s:8.2f} {a.mean(metric)[k]:12.6g} {b.mean(metric)[k]:12.6g} "
                          f"{c['delta'][k]:12.6g} {c['se'][k]:10.4g} {c['z'][k]:8.2f}")
                print(f"{a.label} dominates {b.label} at all points: {'yes' if c['a_better'].all() else 'no'}")
                print(f"{b.label} dominates {a.label} at all points: {'yes' if c['b_better'].all() else 'no'}")
    if not args.expect:
        return EXIT_OK
    try:
        expect = json.loads(Path(args.expect).read_text())["expectations"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: cannot read expectations: {exc}", file=sys.stderr)
        return EXIT_USAGE
    by_label = {}
    for L in loaded:
        by_label[L.label] = L
        by_label[L.path.stem] = L
    violated = 0
    print()
    for e in expect:
        try:
            a, b = by_label[e["better"]], by_label[e["worse"]]
        except KeyError as exc:
            print(f"error: expectation names unknown result {exc}", file=sys.stderr)
            return EXIT_USAGE
        metric = e.get("metric", "asr")
        c = compare_pair(a, b, metric)
        ok = c["a_better"] | ((c["delta"] == 0) & bool(e.get("allow_ties", False)))
        if "min_z" in e:
            ok &= np.abs(c["z"]) >= float(e["min_z"])
        bad = [float(s) for s, k in zip(grid, ok) if not k]
        tag = "ok" if not bad else "VIOLATED"
        violated += bool(bad)
        print(f"expectation {e['better']} better than {e['worse']} on {metric}: {tag}"
              + (f" at snr_db {bad}" if bad else ""))
    return EXIT_RUNTIME if violated else EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(CONFIG_SCHEMA, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sramimo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geometry", help="print a layout and its difference co-array")
    g.add_argument("spec", nargs="?", help='e.g. "tlna:4,4", "cpa:5,2", "ula:16"')
    g.add_argument("--geometry", dest="geometry_flag", help="same as the positional spec")
    g.add_argument("--out", help="also write the JSON report here")
    g.set_defaults(func=cmd_geometry)

    s = sub.add_parser("sweep", help="run an SNR sweep from a configuration file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--snr", help='grid override "start:step:stop" (inclusive)')
    s.add_argument("--geometry", action="append", help="replace the geometry list (repeatable)")
    s.add_argument("--mode", choices=["exact", "sample"], help="covariance mode override")
    s.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or all cores)")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="pairwise ordering report for sweep results")
    c.add_argument("results", nargs="*", help="result .json (paired SE) or .csv files")
    c.add_argument("--metric", default="asr", choices=["asr", "ber_mmse", "ber_osic", "all"])
    c.add_argument("--expect", help="JSON file with expected orderings")
    c.set_defaults(func=cmd_compare)

    sc = sub.add_parser("schema", help="print the configuration JSON schema")
    sc.set_defaults(func=cmd_schema)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "geometry":
        args.spec = args.spec or args.geometry_flag
        if not args.spec:
            ap.error("geometry needs a spec")
    try:
        return args.func(args)
    except SramimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
