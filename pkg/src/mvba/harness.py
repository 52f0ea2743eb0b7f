"""Experiment runner: trial fan-out, aggregation and JSON/CSV reports."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from math import sqrt
from pathlib import Path

from scipy.stats import binomtest

from .adversary import make_adversary
from .diagnosis import SOURCE
from .errors import ConfigError, MVBAError
from .protocol import ProtocolConfig, parameter_schedule, run_session
from .simnet import RunMetrics, complexity_report, security_bound

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "l", "D", "k", "n", "t", "beta", "adversary", "trials", "p_correct", "bound",
    "alpha_measured", "alpha_model", "bits_data", "bits_hash", "bits_notif_model",
    "bits_ext_model", "ext_steps_max",
]

_CONFIG_FIELDS = {"n", "t", "l", "D", "k", "c", "seed"}


@dataclass
class ExperimentSpec:
    base: ProtocolConfig
    adversary: str = "honest"
    adversary_params: dict = field(default_factory=dict)
    controlled: tuple | None = None
    trials: int = 1
    beta: Fraction | None = None  # when set, k and D come from parameter_schedule(l, beta)
    sweep: list = field(default_factory=list)  # [(field, [values...])]
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for name, values in self.sweep:
            if name not in _CONFIG_FIELDS and name != "beta":
                raise ConfigError(f"cannot sweep over {name!r}")
            if not values:
                raise ConfigError(f"empty sweep for {name!r}")

    def points(self) -> list[tuple[ProtocolConfig, Fraction | None]]:
        combos = [({}, self.beta)]
        for name, values in self.sweep:
            expanded = []
            for changes, beta in combos:
                for v in values:
                    if name == "beta":
                        expanded.append((changes, Fraction(v)))
                    else:
                        expanded.append(({**changes, name: v}, beta))
            combos = expanded
        out = []
        for changes, beta in combos:
            if beta is not None:
                l = changes.get("l", self.base.l)
                changes["k"], changes["D"] = parameter_schedule(l, beta)
            out.append((self.base.replace(**changes), beta))
        return out


@dataclass
class TrialResult:
    seed: int
    correct: bool
    agreement: bool
    default_terminated: bool
    metrics: dict
    alpha_measured: Fraction
    alpha_model: Fraction
    source_faulty: bool


def run_trial(config: ProtocolConfig, adversary: str, params: dict, controlled,
              seed: int) -> TrialResult:
    cfg = config.replace(seed=seed)
    adv = make_adversary(adversary, cfg.n, cfg.t, controlled, **params)
    res = run_session(cfg, adv)
    rep = complexity_report(res.metrics, cfg)
    return TrialResult(seed, res.correct, res.agreement, res.default_terminated,
                       res.metrics.as_dict(), rep.alpha_measured, rep.alpha_model,
                       SOURCE in res.faulty)


def _trial_job(args):
    config, adversary, params, controlled, seed = args
    try:
        return run_trial(config, adversary, params, controlled, seed)
    except Exception as exc:
        raise ExperimentError(seed, repr(exc)) from exc


class ExperimentError(MVBAError):
    """A trial raised; ``seed`` replays it exactly."""

    def __init__(self, seed, cause):
        super().__init__(seed, cause)
        self.seed = seed
        self.cause = cause

    def __str__(self):
        return f"trial with seed {self.seed} failed: {self.cause}"


def _row(config, beta, spec, trials: list[TrialResult]) -> dict:
    N = len(trials)
    ok = sum(tr.correct for tr in trials)
    ci = binomtest(ok, N).proportion_ci(confidence_level=0.99)
    totals = RunMetrics()
    for tr in trials:
        for key, val in tr.metrics.items():
            setattr(totals, key, getattr(totals, key) + val)
    ext = Counter(tr.metrics["extended_steps"] for tr in trials)
    try:
        bound = float(security_bound(config))
    except ConfigError:
        bound = None
    return {
        "l": config.l, "D": config.D, "k": config.k, "n": config.n, "t": config.t,
        "beta": None if beta is None else float(beta),
        "adversary": spec.adversary,
        "trials": N,
        "p_correct": ok / N,
        "bound": bound,
        "alpha_measured": float(sum(tr.alpha_measured for tr in trials) / N),
        "alpha_model": float(sum(tr.alpha_model for tr in trials) / N),
        "bits_data": totals.bits_data,
        "bits_hash": totals.bits_hash,
        "bits_notif_model": totals.bits_notification_model,
        "bits_ext_model": totals.bits_extended_model,
        "ext_steps_max": max(ext),
        # JSON-only extras
        "p_correct_ci99": [ci.low, ci.high],
        "ext_steps_histogram": {str(s): c for s, c in sorted(ext.items())},
        "totals": totals.as_dict(),
        "deception_rate": (totals.deception_events / totals.misbehaving_generations
                           if totals.misbehaving_generations else 0.0),
        "default_terminated": sum(tr.default_terminated for tr in trials),
        "seeds": [config.seed, config.seed + N - 1],
    }


@dataclass
class AggregateReport:
    rows: list
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        return {"schema_version": self.schema_version, "rows": self.rows}

    @classmethod
    def from_json(cls, obj: dict) -> AggregateReport:
        return cls(obj["rows"], obj["schema_version"])


def run_experiment(spec: ExperimentSpec) -> AggregateReport:
    rows = []
    for config, beta in spec.points():
        jobs = [(config, spec.adversary, spec.adversary_params, spec.controlled, config.seed + i)
                for i in range(spec.trials)]
        log.info("running %d trials at l=%d D=%d k=%d", spec.trials, config.l, config.D, config.k)
        if spec.workers > 1:
            with ProcessPoolExecutor(spec.workers) as pool:
                trials = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * spec.workers))))
        else:
            trials = [_trial_job(j) for j in jobs]
        rows.append(_row(config, beta, spec, trials))
    return AggregateReport(rows)


def write_report(report: AggregateReport, fh, fmt: str = "json") -> None:
    if fmt == "json":
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")
    elif fmt == "csv":
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in report.rows:
            w.writerow(row)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")


def emit_report(report: AggregateReport, path, fmt: str = "json") -> Path:
    if fmt not in ("json", "csv"):
        raise ConfigError(f"unknown report format {fmt!r}")
    path = Path(path)
    with path.open("w", newline="") as fh:
        write_report(report, fh, fmt)
    return path


def binomial_sigma(p: float, trials: int) -> float:
    return sqrt(p * (1 - p) / trials)
