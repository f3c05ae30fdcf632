"""Command-line entry point.

Every subcommand exits 0 on success. Failures print one JSON object
``{"error": <category>, "message": <text>}`` to stderr and exit with the
category's code (see ``accelrb.errors``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, default_config, load_config
from .dataio import datum_to_dict, read_dataset, write_dataset
from .errors import AccelRBError, ConfigError
from .fisher import crb, designs_from_lengths, optimal_m
from .gatesim import make_noisy_gateset, sample_gate_data, sample_model_data, write_records
from .harness import run_fisher_landscape, run_gate_study, run_risk_vs_K, run_risk_vs_mmax
from .lsf import lsf_from_dataset
from .model import ModelParams
from .smc import run_smc

log = logging.getLogger("accelrb")


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args, scenario: str) -> ExperimentConfig:
    cfg = load_config(args.config, scenario) if args.config else default_config(scenario)
    if args.seed is not None:
        cfg.rng_seed = args.seed
        cfg.smc.rng_seed = args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        cfg.n_trials = args.trials
    if args.particles is not None:
        if args.particles < 2:
            raise ConfigError("--particles must be at least 2")
        cfg.smc.n_particles = args.particles
    if args.out is not None:
        cfg.output_path = args.out
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg


def cmd_simulate(args) -> None:
    cfg = _config(args, "simulate")
    rng = np.random.default_rng(cfg.rng_seed)
    designs = designs_from_lengths(cfg.reference_lengths, cfg.interleaved_lengths, cfg.shots[0])
    if args.gate_level:
        gateset = make_noisy_gateset(cfg.noise_config)
        data, records = sample_gate_data(gateset, designs, rng, cfg.interleaved_gate, keep_records=True)
        if cfg.records_path:
            write_records(records, cfg.records_path, gateset.labels)
    else:
        truth = cfg.true_params if cfg.true_params is not None else cfg.prior_mean
        data = sample_model_data(ModelParams.from_array(truth), designs, rng)
    if cfg.output_path:
        Path(cfg.output_path).parent.mkdir(parents=True, exist_ok=True)
        write_dataset(data, cfg.output_path)
    else:
        for d in data:
            sys.stdout.write(json.dumps(datum_to_dict(d)) + "\n")


def _require_data(args):
    if not args.data:
        raise ConfigError("--data is required")
    return read_dataset(args.data)


def cmd_fit_smc(args) -> None:
    cfg = _config(args, "simulate")
    data = _require_data(args)
    res = run_smc(cfg.prior, data, cfg.smc, rng=np.random.default_rng(cfg.rng_seed))
    _emit({
        "estimator": "smc",
        "estimate": res.estimate.as_dict(),
        "covariance": res.covariance.tolist(),
        "diagnostics": res.diagnostics.as_dict(),
    }, cfg.output_path)


def cmd_fit_lsf(args) -> None:
    cfg = _config(args, "simulate")
    data = _require_data(args)
    guess = ModelParams.from_array(cfg.prior_mean)
    est, fits = lsf_from_dataset(data, guess, weighted=args.weighted)
    _emit({
        "estimator": "lsf",
        "estimate": est.as_dict(),
        "fits": {
            k: {"A": f.A, "B": f.B, "p": f.p, "converged": f.converged, "iterations": f.iterations,
                "residual_norm": f.residual_norm}
            for k, f in fits.items()
        },
    }, cfg.output_path)


def cmd_fisher(args) -> None:
    cfg = _config(args, "fisher_landscape")
    if args.landscape:
        if not cfg.output_path:
            raise ConfigError("--landscape requires --out")
        run_fisher_landscape(cfg)
        return
    x = ModelParams.from_array(cfg.true_params if cfg.true_params is not None else cfg.prior_mean)
    designs = designs_from_lengths(cfg.reference_lengths, cfg.interleaved_lengths, cfg.shots[0])
    bound = crb(x, designs)
    m_range = (1, cfg.landscape.m_max)
    _emit({
        "params": x.as_dict(),
        "shots": cfg.shots[0],
        "crb": bound.tolist(),
        "crb_trace": float(np.trace(bound)),
        "optimal_m": {"interleaved": optimal_m(x, "interleaved", m_range),
                      "reference": optimal_m(x, "reference", m_range)},
    }, cfg.output_path)


def cmd_risk(args) -> None:
    scenario = "risk_vs_mmax" if args.sweep == "m_max" else "risk_vs_K"
    cfg = _config(args, scenario)
    if not cfg.output_path:
        raise ConfigError("risk requires --out or output_path in the config")
    (run_risk_vs_mmax if cfg.scenario == "risk_vs_mmax" else run_risk_vs_K)(cfg)


def cmd_gate_study(args) -> None:
    cfg = _config(args, "gate_study")
    if not cfg.output_path:
        raise ConfigError("gate-study requires --out or output_path in the config")
    run_gate_study(cfg)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master RNG seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--trials", type=int, help="number of trials or repetitions")
    common.add_argument("--particles", type=int, help="SMC particle count")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="accelrb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a dataset (JSON lines)")
    p.add_argument("--gate-level", action="store_true", help="use the noisy Clifford simulator")
    p.set_defaults(func=cmd_simulate)

    for name, func in (("fit-smc", cmd_fit_smc), ("fit-lsf", cmd_fit_lsf)):
        p = sub.add_parser(name, parents=[common], help=f"{name[4:].upper()} estimate from a dataset")
        p.add_argument("--data", help="dataset in JSON lines")
        if name == "fit-lsf":
            p.add_argument("--weighted", action="store_true", help="binomial-variance weights")
        p.set_defaults(func=func)

    p = sub.add_parser("fisher", parents=[common], help="Cramer-Rao bound and optimal lengths")
    p.add_argument("--landscape", action="store_true", help="write the optimal-length landscape CSV")
    p.set_defaults(func=cmd_fisher)

    p = sub.add_parser("risk", parents=[common], help="SMC vs LSF risk study")
    p.add_argument("--sweep", choices=("K", "m_max"), default="K")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("gate-study", parents=[common], help="gate-level bad/good prior study")
    p.set_defaults(func=cmd_gate_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except AccelRBError as exc:
        sys.stderr.write(json.dumps({"error": exc.category, "message": str(exc)}) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io", "message": str(exc)}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
