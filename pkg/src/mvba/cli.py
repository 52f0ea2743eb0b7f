"""Command-line entry point: ``mvba --n 4 --t 1 --l 1024 --beta 1/2 --trials 100``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .adversary import make_adversary
from .errors import MVBAError
from .harness import ExperimentSpec, emit_report, run_experiment, write_report
from .protocol import ProtocolConfig, parameter_schedule, run_session

DEFAULTS = {
    "n": 4, "t": 1, "l": 1024, "d_bits": 64, "k": 8, "c": "1", "beta": None,
    "adversary": "honest", "controlled": None, "trials": 1, "seed": 0,
    "output": None, "format": "json", "trace": None, "sweep_l": None, "workers": 1,
    "params": None,
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; keys as on the command line."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MVBAError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise MVBAError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvba", description=__doc__)
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--l", type=int, help="message length in bits")
    p.add_argument("--d-bits", dest="d_bits", type=int, help="bits agreed per generation (D)")
    p.add_argument("--k", type=int, help="hash key / field width")
    p.add_argument("--beta", help="derive k, D from l (e.g. 1/2); overrides --k/--d-bits")
    p.add_argument("--c", help="broadcast cost constant in B = c n^2")
    p.add_argument("--adversary")
    p.add_argument("--controlled", help="comma-separated node ids")
    p.add_argument("--params", help="adversary parameters as JSON, e.g. '{\"mix\": \"liars\"}'")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--sweep-l", dest="sweep_l", help="comma-separated l values")
    p.add_argument("--workers", type=int)
    p.add_argument("--output", help="report path (stdout if omitted)")
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--trace", help="write a JSON-lines round trace of the first trial here")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        opts.update(read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def spec_from_options(opts: dict) -> ExperimentSpec:
    beta = Fraction(opts["beta"]) if opts["beta"] not in (None, "") else None
    base = ProtocolConfig(n=int(opts["n"]), t=int(opts["t"]), l=int(opts["l"]),
                          D=int(opts["d_bits"]), k=int(opts["k"]), c=Fraction(opts["c"]),
                          seed=int(opts["seed"]))
    if beta is not None:
        k, D = parameter_schedule(base.l, beta)
        base = base.replace(k=k, D=D)
    sweep = []
    if opts["sweep_l"]:
        sweep.append(("l", [int(x) for x in str(opts["sweep_l"]).split(",")]))
    controlled = None
    if opts["controlled"] not in (None, ""):
        controlled = tuple(int(x) for x in str(opts["controlled"]).split(","))
    params = json.loads(opts["params"]) if opts["params"] else {}
    return ExperimentSpec(base=base, adversary=opts["adversary"], adversary_params=params,
                          controlled=controlled, trials=int(opts["trials"]), beta=beta,
                          sweep=sweep, workers=int(opts["workers"]))


def write_trace(spec: ExperimentSpec, path) -> None:
    with open(path, "w") as fh:
        for config, _ in spec.points():
            adv = make_adversary(spec.adversary, config.n, config.t, spec.controlled,
                                 **spec.adversary_params)
            fh.write(json.dumps({"step_tag": "Session", "l": config.l, "D": config.D,
                                 "k": config.k, "seed": config.seed}) + "\n")
            run_session(config, adv, trace=lambda rec: fh.write(json.dumps(rec) + "\n"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        spec = spec_from_options(opts)
        report = run_experiment(spec)
        if opts["trace"]:
            write_trace(spec, opts["trace"])
        if opts["output"]:
            emit_report(report, opts["output"], opts["format"])
        else:
            write_report(report, sys.stdout, opts["format"])
    except (MVBAError, ValueError, OSError) as exc:
        print(f"mvba: error: {exc}", file=sys.stderr)
        return 2
    return 0
