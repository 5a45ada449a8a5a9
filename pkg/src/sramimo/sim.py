"""Seeded Monte Carlo sweep over SNR.

Seed splitting: ``SeedSequence(seed).spawn(trials)`` gives one sequence per
trial; each trial spawns four children, used for the channel draw, the
transmitted symbols, the physical-array noise and the virtual-array noise.
The noise generators are re-created at every SNR point, so the same unit
noise realization is scaled across the grid (common random numbers). Channel
and symbols do not depend on the layout, so sweeps over different arrays
with one seed are paired trial by trial.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import __version__
from .channel import AnglePolicy, draw_channel, generate_symbols, received_block
from .constellation import get_constellation
from .errors import ConfigError, SramimoError
from .geometry import SensorLayout, parse_geometry, resolvable_users, virtual_half_extent
from .metrics import achievable_sum_rate, symbol_bit_errors
from .receivers import detect_linear, filter_bank, osic_detect
from .virtualization import (
    AugmentedManifold,
    augmented_manifold,
    exact_covariance,
    sample_covariance,
    synthesize_augmented_snapshots,
    virtual_design_covariance,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "SRAMIMO_WORKERS"
CSV_COLUMNS = ("snr_db", "asr_mean", "asr_se", "ber_mmse_mean", "ber_mmse_se",
               "ber_osic_mean", "ber_osic_se", "trials")


@dataclass(frozen=True)
class SimConfig:
    geometry: str
    users: int = 8
    snapshots: int = 100
    trials: int = 1000
    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    constellation: str = "qpsk"
    powers: tuple[float, ...] | None = None
    angle_policy: AnglePolicy = field(default_factory=AnglePolicy)
    dedup_mode: str = "average"
    covariance_mode: str = "exact"
    d_over_lambda: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if self.powers is not None:
            object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))

    @property
    def layout(self) -> SensorLayout:
        return parse_geometry(self.geometry)

    @property
    def power_vector(self) -> np.ndarray:
        return np.ones(self.users) if self.powers is None else np.asarray(self.powers, float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = list(self.snr_db)
        d["powers"] = None if self.powers is None else list(self.powers)
        d["angle_policy"] = self.angle_policy.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["angle_policy"] = AnglePolicy.from_dict(d.get("angle_policy") or {})
        return cls(**d)

    def validate(self) -> None:
        """Raise :class:`ConfigError` listing every violated constraint."""
        errs = []
        if self.trials < 1:
            errs.append("trials: must be >= 1")
        if self.snapshots < 1:
            errs.append("snapshots: must be >= 1")
        if not self.snr_db:
            errs.append("snr_db: must be non-empty")
        if self.users < 1:
            errs.append("users: must be >= 1")
        if self.powers is not None and len(self.powers) != self.users:
            errs.append(f"powers: expected {self.users} entries, got {len(self.powers)}")
        if self.dedup_mode not in ("average", "first-occurrence"):
            errs.append(f"dedup_mode: unknown mode {self.dedup_mode!r}")
        if self.covariance_mode not in ("exact", "sample"):
            errs.append(f"covariance_mode: unknown mode {self.covariance_mode!r}")
        try:
            get_constellation(self.constellation)
        except SramimoError as exc:
            errs.append(f"constellation: {exc}")
        try:
            layout = self.layout
            bound = resolvable_users(layout)
        except SramimoError as exc:
            errs.append(f"geometry: {exc}")
        else:
            if self.users > bound:
                errs.append(f"users: {self.users} exceeds the {bound} users {layout.label} resolves")
            elif self.users > layout.size:
                warnings.warn(
                    f"{self.users} users exceed the {layout.size} physical sensors of "
                    f"{layout.label}; relying on the virtual array",
                    stacklevel=2,
                )
        if errs:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errs), errs)


def _se(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n < 2:
        return np.zeros(x.shape[1:])
    return x.std(axis=0, ddof=1) / np.sqrt(n)


@dataclass(eq=False)
class SweepResult:
    config: SimConfig
    snr_db: np.ndarray
    per_trial: dict[str, np.ndarray]  # name -> (trials, n_snr)
    version: str = __version__

    @property
    def trials(self) -> int:
        return self.per_trial["asr"].shape[0]

    def mean(self, name: str) -> np.ndarray:
        return self.per_trial[name].mean(axis=0)

    def se(self, name: str) -> np.ndarray:
        return _se(self.per_trial[name])

    @property
    def asr_mean(self):
        return self.mean("asr")

    @property
    def ber_mmse_mean(self):
        return self.mean("ber_mmse")

    @property
    def ber_osic_mean(self):
        return self.mean("ber_osic")

    def rows(self) -> list[list]:
        cols = {n: (self.mean(n), self.se(n)) for n in ("asr", "ber_mmse", "ber_osic")}
        out = []
        for i, s in enumerate(self.snr_db):
            row = [float(s)]
            for n in ("asr", "ber_mmse", "ber_osic"):
                row += [float(cols[n][0][i]), float(cols[n][1][i])]
            out.append(row + [self.trials])
        return out

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def gnuplot_text(self) -> str:
        lines = ["# " + " ".join(CSV_COLUMNS)]
        lines += [" ".join(repr(v) if isinstance(v, float) else str(v) for v in row) for row in self.rows()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "columns": list(CSV_COLUMNS),
            "points": self.rows(),
            "per_trial": {k: v.tolist() for k, v in self.per_trial.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        cfg = SimConfig.from_dict(d["config"])
        per_trial = {k: np.asarray(v, dtype=float) for k, v in d["per_trial"].items()}
        return cls(cfg, np.asarray(cfg.snr_db), per_trial, d.get("version", "unknown"))

    def write(self, out_dir: Path, stem: str) -> dict[str, str]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "csv": out_dir / f"{stem}.csv",
            "json": out_dir / f"{stem}.json",
            "dat": out_dir / f"{stem}.dat",
        }
        paths["csv"].write_text(self.csv_text())
        paths["json"].write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        paths["dat"].write_text(self.gnuplot_text())
        return {k: str(v) for k, v in paths.items()}


def load_result(path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))


def _run_trial(args) -> np.ndarray:
    cfg, ss = args
    return simulate_trial(cfg, ss)


def simulate_trial(cfg: SimConfig, ss: np.random.SeedSequence) -> np.ndarray:
    """One Monte Carlo trial; returns a ``(3, n_snr)`` array of
    (sum-rate, linear MMSE BER, OSIC BER)."""
    layout = cfg.layout
    const = get_constellation(cfg.constellation)
    K, T = cfg.users, cfg.snapshots
    p = cfg.power_vector
    ch_ss, sym_ss, phys_ss, aug_ss = ss.spawn(4)

    channel = draw_channel(np.random.default_rng(ch_ss), layout, K, cfg.angle_policy, cfg.d_over_lambda)
    S = generate_symbols(np.random.default_rng(sym_ss), K, T, const, p)
    true_idx = const.nearest_index(S / np.sqrt(p)[:, None])
    nbits = K * T * const.bits_per_symbol

    virtual = layout.kind in ("TLNA", "CPA")
    if virtual:
        J = virtual_half_extent(layout)
        manifold = augmented_manifold(channel, J)
        omega = manifold.source_powers(p)
        S_a = S * np.sqrt(omega / p)[:, None]
    else:
        manifold = AugmentedManifold.physical(channel)
        omega = p

    out = np.empty((3, len(cfg.snr_db)))
    for i, snr in enumerate(cfg.snr_db):
        s2 = 10.0 ** (-snr / 10.0)
        block = None
        if cfg.covariance_mode == "exact":
            R_x = exact_covariance(channel, p, s2)
        else:
            block = received_block(channel, S, s2, np.random.default_rng(phys_ss))
            R_x = sample_covariance(block)
        if virtual:
            _, R_design = virtual_design_covariance(R_x, layout, cfg.dedup_mode, J)
            X = synthesize_augmented_snapshots(manifold, S_a, s2, np.random.default_rng(aug_ss))
        else:
            R_design = R_x
            if block is None:
                block = received_block(channel, S, s2, np.random.default_rng(phys_ss))
            X = block.X
        bank = filter_bank(manifold, omega, s2, covariance=R_design)
        out[0, i] = achievable_sum_rate(bank, manifold, omega, s2)
        lin = detect_linear(X, manifold, omega, s2, const, bank=bank)
        sic = osic_detect(X, manifold, omega, s2, const, covariance=R_design)
        out[1, i] = symbol_bit_errors(lin.hard_index, true_idx, const) / nbits
        out[2, i] = symbol_bit_errors(sic.hard_index, true_idx, const) / nbits
    return out


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def run_sweep(config: SimConfig, workers: int | None = None) -> SweepResult:
    """Run every trial at every SNR point. Output is independent of ``workers``."""
    config.validate()
    workers = resolve_workers(workers)
    seqs = np.random.SeedSequence(config.seed).spawn(config.trials)
    jobs = [(config, s) for s in seqs]
    if workers > 1 and config.trials > 1:
        chunk = max(1, config.trials // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_trial, jobs, chunksize=chunk))
    else:
        outs = [_run_trial(j) for j in jobs]
    arr = np.stack(outs)  # trials x 3 x n_snr, trial order preserved
    per_trial = {"asr": arr[:, 0], "ber_mmse": arr[:, 1], "ber_osic": arr[:, 2]}
    return SweepResult(config, np.asarray(config.snr_db), per_trial)


# --- configuration files -------------------------------------------------

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sramimo sweep configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["geometries", "users", "trials", "snr_db", "seed"],
    "properties": {
        "name": {"type": "string"},
        "geometries": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "users": {"type": "integer", "minimum": 1},
        "snapshots": {"type": "integer", "minimum": 1},
        "trials": {"type": "integer", "minimum": 1},
        "snr_db": {
            "oneOf": [
                {"type": "array", "minItems": 1, "items": {"type": "number"}},
                {"type": "string", "pattern": r"^\s*-?[\d.]+\s*:\s*[\d.]+\s*:\s*-?[\d.]+\s*$"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["start", "step", "stop"],
                    "properties": {
                        "start": {"type": "number"},
                        "step": {"type": "number", "exclusiveMinimum": 0},
                        "stop": {"type": "number"},
                    },
                },
            ]
        },
        "constellation": {"enum": ["qpsk"]},
        "powers": {
            "oneOf": [
                {"type": "null"},
                {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            ]
        },
        "angles": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["random", "grid"]},
                "min_separation_deg": {"type": "number", "minimum": 0},
                "angles_deg": {"type": "array", "items": {"type": "number", "minimum": -90, "maximum": 90}},
            },
        },
        "dedup_mode": {"enum": ["average", "first-occurrence"]},
        "covariance_mode": {"enum": ["exact", "sample"]},
        "d_over_lambda": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    },
}


def parse_snr_grid(spec) -> tuple[float, ...]:
    """``[0, 5]``, ``"0:5:20"`` or ``{"start": 0, "step": 5, "stop": 20}`` (inclusive)."""
    if isinstance(spec, str):
        try:
            start, step, stop = (float(x) for x in spec.split(":"))
        except ValueError:
            raise ConfigError(f"snr_db: expected 'start:step:stop', got {spec!r}",
                              [f"snr_db: expected 'start:step:stop', got {spec!r}"]) from None
        spec = {"start": start, "step": step, "stop": stop}
    if isinstance(spec, dict):
        start, step, stop = float(spec["start"]), float(spec["step"]), float(spec["stop"])
        if step <= 0 or stop < start:
            raise ConfigError("snr_db: need step > 0 and stop >= start",
                              ["snr_db: need step > 0 and stop >= start"])
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(start + i * step) for i in range(n))
    return tuple(float(s) for s in spec)


def validate_config_dict(d: dict) -> None:
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errs = sorted(v.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errs:
        msgs = [f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errs]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(msgs), msgs)


def configs_from_dict(d: dict) -> list[SimConfig]:
    """Expand a configuration file (one entry per geometry) into ``SimConfig``s."""
    validate_config_dict(d)
    common = dict(
        users=d["users"],
        snapshots=d.get("snapshots", 100),
        trials=d["trials"],
        snr_db=parse_snr_grid(d["snr_db"]),
        constellation=d.get("constellation", "qpsk"),
        powers=d.get("powers"),
        angle_policy=AnglePolicy.from_dict(d.get("angles", {})),
        dedup_mode=d.get("dedup_mode", "average"),
        covariance_mode=d.get("covariance_mode", "exact"),
        d_over_lambda=d.get("d_over_lambda", 0.5),
        seed=d["seed"],
    )
    cfgs = [SimConfig(geometry=g, **common) for g in d["geometries"]]
    errs = []
    for c in cfgs:
        try:
            c.validate()
        except ConfigError as exc:
            errs += [f"geometries[{c.geometry}].{e}" for e in exc.errors]
    if errs:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errs), errs)
    return cfgs


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})", [f"<file>: {exc}"]) from None


def result_stem(geometry: str) -> str:
    return geometry.replace(":", "-").replace(",", "-")


def sweep_many(configs: Sequence[SimConfig], workers: int | None = None) -> list[SweepResult]:
    return [run_sweep(c, workers) for c in configs]
