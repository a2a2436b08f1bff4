"""Experiment harness: configs, seeded BER sweeps, threshold tables, records.

Randomness policy. Every BER trial draws from its own generator, built as
``SeedSequence(seed, spawn_key=(point, trial))`` where ``point`` indexes the
epsilon list and ``trial`` counts from zero. A trial's payload, interleavers
and channel erasures therefore depend only on ``(seed, point, trial)``, so
results do not depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .chain import ChainInterleavers, ConfigError, CouplingConfig, code_rate, encode_chain
from .decoding import bec_transmit, ff_fb_decode
from .density import DeEnsemble, ThresholdResult, default_chain_length, find_threshold
from .trellis import build_trellis, parse_octal

FORMAT_VERSION = 1

BER_COLUMNS = ("epsilon", "payload_bits", "residual_erasures", "ber", "trials", "seed")
THRESHOLD_COLUMNS = ("lambda", "m", "L", "eps_bp", "gap", "width", "precision", "iterations")


def fmt(x) -> str:
    """Format a CSV cell; floats get 6 significant digits."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


def parse_float_list(text: str) -> list[float]:
    """Parse ``"0.6,0.65"`` or a range ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("range step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(max(n, 0))]
    return [float(Fraction(p.strip())) for p in text.split(",") if p.strip()]


def parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a BER sweep."""

    g_f: str = "5"
    g_f2: str = "3"
    g_b: str = "7"
    K: int = 10_000
    Kc: int = 5_000
    m: int = 1
    L: int = 20
    epsilons: tuple[float, ...] = ()
    trials: int = 10
    min_erasures: int = 100
    seed: int = 0
    max_sweeps: int = 20
    max_inner_iters: int = 30
    upper_order: str = "random"
    output_dir: str = "."

    def __post_init__(self):
        for g in (self.g_f, self.g_f2, self.g_b):
            parse_octal(g)
        self.coupling  # validates K, Kc, m, L
        if any(not 0.0 <= e <= 1.0 for e in self.epsilons):
            raise ConfigError("epsilon values must lie in [0, 1]")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.min_erasures < 0 or self.max_sweeps < 1 or self.max_inner_iters < 1:
            raise ConfigError("iteration budgets must be positive")
        if self.upper_order not in ("random", "natural"):
            raise ConfigError("upper_order must be 'random' or 'natural'")

    @property
    def coupling(self) -> CouplingConfig:
        return CouplingConfig(K=self.K, Kc=self.Kc, m=self.m, L=self.L)

    def trellis(self):
        return build_trellis(self.g_f, self.g_f2, self.g_b)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["epsilons"] = list(self.epsilons)
        return d

    @classmethod
    def from_mapping(cls, values: dict) -> ExperimentConfig:
        """Build from string or typed values; ``lambda`` may replace ``Kc``."""
        names = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        lam = None
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            key = {"epsilon": "epsilons", "gf": "g_f", "gf2": "g_f2", "gb": "g_b"}.get(key, key)
            if key in ("lambda", "lam"):
                lam = Fraction(str(raw).strip())
                continue
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "epsilons":
                kw[key] = tuple(parse_float_list(raw) if isinstance(raw, str) else map(float, raw))
            elif names[key].type == "int":
                kw[key] = int(raw)
            else:
                kw[key] = str(raw).strip()
        if lam is not None:
            if "Kc" in kw:
                raise ConfigError("give either Kc or lambda, not both")
            base = CouplingConfig.from_lambda(kw.get("K", cls.K), lam, kw.get("m", cls.m), kw.get("L", cls.L))
            kw["Kc"] = base.Kc
        try:
            return cls(**kw)
        except ValueError as exc:  # int() failures and the like
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        """Parse the flat ``key = value`` format; ``#`` starts a comment."""
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        return cls.from_mapping(values)

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if k == "epsilons":
                v = ",".join(repr(e) for e in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


@dataclass
class BerPoint:
    epsilon: float
    payload_bits: int
    residual_erasures: int
    trials: int
    seed: int
    wall_time: float = 0.0

    @property
    def ber(self) -> float:
        return self.residual_erasures / self.payload_bits if self.payload_bits else 0.0

    def row(self) -> dict:
        return {"epsilon": self.epsilon, "payload_bits": self.payload_bits,
                "residual_erasures": self.residual_erasures, "ber": self.ber,
                "trials": self.trials, "seed": self.seed}


@dataclass
class RunRecord:
    """Self-describing result of one run, persisted as JSON."""

    kind: str
    config: dict
    results: list[dict] = field(default_factory=list)
    wall_time: float = 0.0
    format_version: int = FORMAT_VERSION
    environment: dict = field(default_factory=lambda: {"python": platform.python_version(),
                                                       "numpy": np.__version__})

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunRecord:
        data = json.loads(text)
        if data.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported record format {data.get('format_version')!r}")
        return cls(**data)

    def reproducible_view(self) -> dict:
        """The record without timing and environment fields."""
        d = dataclasses.asdict(self)
        d.pop("wall_time")
        d.pop("environment")
        for r in d["results"]:
            r.pop("wall_time", None)
        return d


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, trial)))


def run_trial(cfg: ExperimentConfig, point: int, trial: int) -> int:
    """One encode, transmit, decode cycle; returns the residual erasures."""
    coupling = cfg.coupling
    trellis = cfg.trellis()
    rng = trial_rng(cfg.seed, point, trial)
    il = ChainInterleavers.random(coupling, rng, scramble_upper=cfg.upper_order == "random")
    info = rng.integers(0, 2, coupling.payload_bits, dtype=np.uint8)
    cw = encode_chain(info, coupling, il, trellis)
    rx = bec_transmit(cw.to_stream(), cfg.epsilons[point], rng)
    res = ff_fb_decode(trellis, coupling, il, rx, cfg.max_sweeps, cfg.max_inner_iters)
    return res.residual_erasures


def _trial_job(args):
    return run_trial(*args)


def ber_point(cfg: ExperimentConfig, point: int, pool: ProcessPoolExecutor | None = None,
              workers: int = 1) -> BerPoint:
    """Accumulate trials until ``min_erasures`` residual erasures or the trial cap.

    Trials run in batches of ``workers`` but are consumed in trial order, so
    the stopping decision and the totals never depend on scheduling.
    """
    start = time.perf_counter()
    bits = cfg.coupling.payload_bits
    erasures = done = 0
    while done < cfg.trials and (done == 0 or erasures < cfg.min_erasures):
        batch = range(done, min(done + workers, cfg.trials))
        jobs = [(cfg, point, t) for t in batch]
        outs = pool.map(_trial_job, jobs) if pool is not None else map(_trial_job, jobs)
        for out in outs:
            if done > 0 and erasures >= cfg.min_erasures:
                break
            erasures += out
            done += 1
    return BerPoint(cfg.epsilons[point], done * bits, erasures, done, cfg.seed,
                    time.perf_counter() - start)


def ber_sweep(cfg: ExperimentConfig, workers: int = 1, progress=None) -> RunRecord:
    if not cfg.epsilons:
        raise ConfigError("epsilon list is empty")
    start = time.perf_counter()
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        points = []
        for i in range(len(cfg.epsilons)):
            pt = ber_point(cfg, i, pool, workers)
            points.append(pt)
            if progress is not None:
                progress(pt)
    finally:
        if pool is not None:
            pool.shutdown()
    rec = RunRecord("ber", cfg.to_dict(), [dataclasses.asdict(p) | {"ber": p.ber} for p in points])
    rec.config["code_rate"] = str(code_rate(cfg.coupling))
    rec.wall_time = time.perf_counter() - start
    return rec


def ber_csv(record: RunRecord) -> str:
    return to_csv(BER_COLUMNS, record.results)


def threshold_table(g_f: str, g_f2: str, g_b: str, lams, ms, L: int | None = None,
                    precision: float = 1e-4, progress=None) -> RunRecord:
    """DE thresholds over the Cartesian grid ``lams x ms``."""
    lams, ms = list(lams), list(ms)
    if not lams or not ms:
        raise ConfigError("threshold grid is empty")
    trellis = build_trellis(g_f, g_f2, g_b)
    start = time.perf_counter()
    rows = []
    for lam in lams:
        for m in ms:
            chain = default_chain_length(m) if L is None else L
            res: ThresholdResult = find_threshold(trellis, DeEnsemble(lam, m, chain), precision)
            row = res.row() | {"gap": 2 / 3 - res.eps_bp, "width": res.width}
            rows.append(row)
            if progress is not None:
                progress(row)
    config = {"g_f": g_f, "g_f2": g_f2, "g_b": g_b, "lambdas": lams, "ms": ms, "L": L,
              "precision": precision}
    return RunRecord("threshold", config, rows, time.perf_counter() - start)


def threshold_csv(record: RunRecord) -> str:
    return to_csv(THRESHOLD_COLUMNS, record.results)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_outputs(out_dir, stem: str, csv_text: str, record: RunRecord) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    csv_path.write_text(csv_text)
    json_path.write_text(record.to_json())
    return csv_path, json_path
