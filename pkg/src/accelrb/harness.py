"""Experiment orchestration for the risk, gate-level and landscape studies.

Every scenario writes a CSV with a one-line header plus a ``.meta.json``
sidecar echoing the full configuration. Trial seeds are derived from the
master seed and the (coordinate, trial) counters, so output is byte-identical
for a given config regardless of ``workers``.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .errors import AccelRBError, ConfigError
from .fisher import bcrb, designs_from_lengths, information_profile, optimal_m, optimal_m_large_d
from .gatesim import make_noisy_gateset, sample_gate_data, sample_model_data, true_params_from_gateset
from .lsf import lsf_from_dataset
from .model import PARAM_NAMES, ModelParams, PriorSpec
from .smc import run_smc

log = logging.getLogger(__name__)

SMC, LSF = "SMC", "LSF"


@dataclass
class TrialRecord:
    scenario: str
    coord_name: str
    coord: int
    trial: int
    estimator: str
    seed: tuple
    estimate: list | None = None
    sq_errors: list | None = None
    posterior_var: list | None = None
    bcrb_trace: float = float("nan")
    wall_time: float = 0.0
    failed: bool = False
    failure: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def mse_trace(self) -> float:
        return float(np.sum(self.sq_errors)) if self.sq_errors is not None else float("nan")


def _child_rngs(seed: int, *counters: int, n: int = 4) -> list[np.random.Generator]:
    ss = np.random.SeedSequence([seed, *counters])
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _smc_record(base: dict, prior, data, x_true: np.ndarray, smc_cfg, rng) -> TrialRecord:
    t0 = time.perf_counter()
    try:
        res = run_smc(prior, data, smc_cfg, rng=rng)
    except AccelRBError as exc:
        diag = getattr(exc, "diagnostics", None)
        return TrialRecord(estimator=SMC, failed=True, failure=exc.category,
                           diagnostics=diag.as_dict() if diag is not None else {}, **base)
    est = res.estimate.as_array()
    d = res.diagnostics
    return TrialRecord(
        estimator=SMC,
        estimate=est.tolist(),
        sq_errors=((est - x_true) ** 2).tolist(),
        posterior_var=np.diag(res.covariance).tolist(),
        wall_time=time.perf_counter() - t0,
        diagnostics={"min_ess": d.min_ess, "final_ess": d.final_ess, "n_resamples": d.n_resamples,
                     "ess_warning": d.ess_warning},
        **base,
    )


def _lsf_record(base: dict, data, x_true: np.ndarray, guess: ModelParams) -> TrialRecord:
    t0 = time.perf_counter()
    try:
        est, fits = lsf_from_dataset(data, guess)
    except AccelRBError as exc:
        return TrialRecord(estimator=LSF, failed=True, failure=exc.category,
                           diagnostics={"guess": guess.as_array().tolist()}, **base)
    est = est.as_array()
    return TrialRecord(
        estimator=LSF,
        estimate=est.tolist(),
        sq_errors=((est - x_true) ** 2).tolist(),
        wall_time=time.perf_counter() - t0,
        diagnostics={
            "guess": guess.as_array().tolist(),
            "converged": bool(fits["reference"].converged and fits["interleaved"].converged),
        },
        **base,
    )


def _risk_trial(args) -> list[TrialRecord]:
    cfg, coord_name, coord_idx, coord, trial, designs = args
    prior = cfg.prior
    r_truth, r_data, r_smc, r_lsf = _child_rngs(cfg.rng_seed, coord_idx, trial)
    x_true = prior.draw(1, r_truth)[0]
    data = sample_model_data(ModelParams.from_array(x_true), designs, r_data)
    guess = ModelParams.from_array(prior.draw(1, r_lsf)[0])
    base = dict(scenario=cfg.scenario, coord_name=coord_name, coord=coord, trial=trial,
                seed=(cfg.rng_seed, coord_idx, trial))
    return [_smc_record(base, prior, data, x_true, cfg.smc, r_smc),
            _lsf_record(base, data, x_true, guess)]


def _map_trials(fn, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(job) for job in jobs]


@dataclass
class RiskRow:
    estimator: str
    coord: int
    n_trials: int
    n_failed: int
    mse_trace: float
    mse_trace_se: float
    mse_ptilde: float
    mse_ptilde_se: float
    bcrb_trace: float
    bcrb_ptilde: float
    mean_posterior_var_trace: float
    mean_posterior_var_ptilde: float
    ess_warnings: int
    mse_trace_ratio_prev: float = float("nan")


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(np.mean(v)), se


def _summarize(records: list[TrialRecord], estimator: str, coord: int, bound: np.ndarray) -> RiskRow:
    ok = [r for r in records if r.estimator == estimator and r.coord == coord and not r.failed]
    n_all = sum(1 for r in records if r.estimator == estimator and r.coord == coord)
    mse, mse_se = _mean_se([r.mse_trace for r in ok])
    pt, pt_se = _mean_se([r.sq_errors[0] for r in ok])
    pv = [r.posterior_var for r in ok if r.posterior_var is not None]
    return RiskRow(
        estimator=estimator,
        coord=coord,
        n_trials=n_all,
        n_failed=n_all - len(ok),
        mse_trace=mse,
        mse_trace_se=mse_se,
        mse_ptilde=pt,
        mse_ptilde_se=pt_se,
        bcrb_trace=float(np.trace(bound)),
        bcrb_ptilde=float(bound[0, 0]),
        mean_posterior_var_trace=float(np.mean([np.sum(v) for v in pv])) if pv else float("nan"),
        mean_posterior_var_ptilde=float(np.mean([v[0] for v in pv])) if pv else float("nan"),
        ess_warnings=sum(1 for r in ok if r.diagnostics.get("ess_warning")),
    )


@dataclass
class RiskResult:
    coord_name: str
    rows: list[RiskRow]
    trials: list[TrialRecord]
    bounds: dict


def _run_risk(cfg: ExperimentConfig, coord_name: str, coords: list[int], designs_for) -> RiskResult:
    prior = cfg.prior
    all_trials: list[TrialRecord] = []
    bounds = {}
    for ci, coord in enumerate(coords):
        designs = designs_for(coord)
        bounds[coord] = bcrb(prior, designs, cfg.bim_samples, _child_rngs(cfg.rng_seed, ci, n=1)[0])
        jobs = [(cfg, coord_name, ci, coord, t, designs) for t in range(cfg.n_trials)]
        for recs in _map_trials(_risk_trial, jobs, cfg.workers):
            for r in recs:
                r.bcrb_trace = float(np.trace(bounds[coord]))
                all_trials.append(r)
        log.info("%s=%s done", coord_name, coord)
    rows = []
    for est in (SMC, LSF):
        prev = None
        for coord in coords:
            row = _summarize(all_trials, est, coord, bounds[coord])
            if prev is not None and prev.mse_trace > 0:
                row.mse_trace_ratio_prev = row.mse_trace / prev.mse_trace
            rows.append(row)
            prev = row
    result = RiskResult(coord_name, rows, all_trials, bounds)
    if cfg.output_path:
        write_risk_outputs(result, cfg)
    return result


def run_risk_vs_K(cfg: ExperimentConfig) -> RiskResult:
    """Risk against shots per length at fixed sequence-length grids."""
    if cfg.scenario != "risk_vs_K":
        raise ConfigError(f"expected scenario risk_vs_K, got {cfg.scenario}")
    return _run_risk(
        cfg, "K", list(cfg.shots),
        lambda K: designs_from_lengths(cfg.reference_lengths, cfg.interleaved_lengths, K),
    )


def run_risk_vs_mmax(cfg: ExperimentConfig) -> RiskResult:
    """Risk against the longest sequence, lengths {1, 1+step, ..., m_max} in both modes."""
    if cfg.scenario != "risk_vs_mmax":
        raise ConfigError(f"expected scenario risk_vs_mmax, got {cfg.scenario}")
    K = cfg.shots[0]

    def designs_for(m_max):
        lengths = list(range(1, m_max + 1, cfg.m_step))
        return designs_from_lengths(lengths, lengths, K)

    return _run_risk(cfg, "m_max", list(cfg.m_max), designs_for)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# Choices that shrink or replace the full-scale study, echoed into every sidecar.
DESK_SCALE_NOTES = {
    "risk_vs_K": "log-spaced K grid and 100 trials per K",
    "risk_vs_mmax": "five m_max values and 100 trials per m_max",
    "gate_study": "parametric depolarizing plus over-rotation noise; n_trials seeded repetitions per study",
    "fisher_landscape": "exhaustive integer scan up to landscape.m_max",
}


def write_metadata(path: Path, cfg: ExperimentConfig, extra: dict | None = None) -> None:
    meta = {
        "config": cfg.to_dict(),
        "desk_scale": DESK_SCALE_NOTES.get(cfg.scenario, ""),
        "seed": cfg.rng_seed,
        "versions": {
            "accelrb": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        meta.update(extra)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def write_risk_outputs(result: RiskResult, cfg: ExperimentConfig) -> None:
    out = Path(cfg.output_path)
    header = ["estimator", result.coord_name, "n_trials", "n_failed", "mse_trace", "mse_trace_se",
              "mse_ptilde", "mse_ptilde_se", "bcrb_trace", "bcrb_ptilde", "mean_posterior_var_trace",
              "mean_posterior_var_ptilde", "ess_warnings", "mse_trace_ratio_prev"]
    _write_csv(out, header, (
        [r.estimator, r.coord, r.n_trials, r.n_failed, r.mse_trace, r.mse_trace_se, r.mse_ptilde,
         r.mse_ptilde_se, r.bcrb_trace, r.bcrb_ptilde, r.mean_posterior_var_trace,
         r.mean_posterior_var_ptilde, r.ess_warnings, r.mse_trace_ratio_prev]
        for r in result.rows
    ))
    trial_header = (["estimator", result.coord_name, "trial", "failed", "failure"]
                    + [f"sq_err_{n}" for n in PARAM_NAMES]
                    + ["mse_trace", "posterior_var_trace", "bcrb_trace", "min_ess", "n_resamples", "ess_warning"])
    nan4 = [float("nan")] * 4
    _write_csv(_sidecar(out, ".trials.csv"), trial_header, (
        [t.estimator, t.coord, t.trial, int(t.failed), t.failure]
        + (t.sq_errors or nan4)
        + [t.mse_trace, float(np.sum(t.posterior_var)) if t.posterior_var else float("nan"), t.bcrb_trace,
           t.diagnostics.get("min_ess", ""), t.diagnostics.get("n_resamples", ""),
           int(t.diagnostics["ess_warning"]) if "ess_warning" in t.diagnostics else ""]
        for t in sorted(result.trials, key=lambda t: (t.coord_name, t.estimator != SMC, t.coord, t.trial))
    ))
    write_metadata(_sidecar(out, ".meta.json"), cfg, {"bcrb": {str(k): v for k, v in result.bounds.items()}})


# gate-level study

@dataclass
class GateStudyResult:
    truth: ModelParams
    tables: dict
    reps: list
    histograms: dict
    warnings: dict


def _study_prior(cfg: ExperimentConfig, study: dict, truth: ModelParams, rng) -> PriorSpec:
    kind = study.get("prior", "fixed")
    if kind == "fixed":
        return cfg.prior
    if kind == "around_truth":
        # prior mean is itself a draw centred on the truth, so the truth is a typical prior draw
        centre = PriorSpec(truth, tuple(cfg.prior_sigma)).draw(1, rng)[0]
        return PriorSpec(ModelParams.from_array(centre), tuple(cfg.prior_sigma))
    raise ConfigError(f"unknown study prior {kind!r}")


def _weighted_hist(values, weights, edges) -> np.ndarray:
    h, _ = np.histogram(values, bins=edges, weights=weights)
    return h / max(h.sum(), 1e-300)


def run_gate_study(cfg: ExperimentConfig) -> GateStudyResult:
    """SMC against LSF on gate-level data with a known ground truth."""
    if cfg.scenario != "gate_study":
        raise ConfigError(f"expected scenario gate_study, got {cfg.scenario}")
    gateset = make_noisy_gateset(cfg.noise_config)
    gt = true_params_from_gateset(gateset, cfg.interleaved_gate)
    truth = gt.as_model_params()
    x_true = truth.as_array()
    reps, tables, hists, warns = [], {}, {}, {}
    for si, study in enumerate(cfg.studies):
        designs = designs_from_lengths(study["reference_lengths"], study["interleaved_lengths"], study["shots"])
        smc_est, lsf_est = [], []
        for rep in range(cfg.n_trials):
            r_prior, r_data, r_smc, r_lsf = _child_rngs(cfg.rng_seed, si, rep)
            prior = _study_prior(cfg, study, truth, r_prior)
            data = sample_gate_data(gateset, designs, r_data, interleaved_gate=cfg.interleaved_gate)
            res = run_smc(prior, data, cfg.smc, rng=r_smc, keep_prior=(rep == 0))
            guess = ModelParams.from_array(prior.draw(1, r_lsf)[0])
            try:
                lsf, _ = lsf_from_dataset(data, guess)
                lsf_arr, lsf_fail = lsf.as_array(), ""
            except AccelRBError as exc:
                lsf_arr, lsf_fail = np.full(4, np.nan), exc.category
            distance = float(np.linalg.norm((x_true - prior.mean.as_array()) / prior.sigma_array))
            smc_arr = res.estimate.as_array()
            smc_est.append(smc_arr)
            lsf_est.append(lsf_arr)
            n_bits = sum(k for _, k in designs)
            reps.append([study["name"], rep, SMC, *smc_arr, *np.abs(smc_arr - x_true),
                         int(res.diagnostics.ess_warning), res.diagnostics.min_ess, distance, n_bits, ""])
            reps.append([study["name"], rep, LSF, *lsf_arr, *np.abs(lsf_arr - x_true),
                         "", "", distance, n_bits, lsf_fail])
            warns.setdefault(study["name"], 0)
            warns[study["name"]] += int(res.diagnostics.ess_warning)
            if rep == 0:
                prior_pt = res.prior_cloud.locations[:, 0]
                post_pt = res.cloud.locations[:, 0]
                lo = min(prior_pt.min(), post_pt.min(), x_true[0])
                hi = max(prior_pt.max(), post_pt.max(), x_true[0])
                edges = np.linspace(lo, hi, 61)
                hists[study["name"]] = {
                    "edges": edges,
                    "prior": _weighted_hist(prior_pt, res.prior_cloud.weights, edges),
                    "posterior": _weighted_hist(post_pt, res.cloud.weights, edges),
                    "prior_mean": float(prior_pt.mean()), "prior_var": float(prior_pt.var()),
                    "posterior_mean": float(res.estimate.p_tilde),
                    "posterior_var": float(res.covariance[0, 0]),
                    "lsf_estimate": float(lsf_arr[0]),
                }
        smc_est, lsf_est = np.array(smc_est), np.array(lsf_est)
        tables[study["name"]] = {
            "True": x_true,
            "SMC Estimate": np.median(smc_est, axis=0),
            "LSF Estimate": np.nanmedian(lsf_est, axis=0),
            "SMC Error": np.median(np.abs(smc_est - x_true), axis=0),
            "LSF Error": np.nanmedian(np.abs(lsf_est - x_true), axis=0),
        }
    result = GateStudyResult(truth, tables, reps, hists, warns)
    if cfg.output_path:
        _write_gate_outputs(result, cfg, gt)
    return result


def _write_gate_outputs(result: GateStudyResult, cfg: ExperimentConfig, gt) -> None:
    out = Path(cfg.output_path)
    _write_csv(out, ["study", "row", *PARAM_NAMES], (
        [study, label, *vals] for study, table in result.tables.items() for label, vals in table.items()
    ))
    _write_csv(_sidecar(out, ".reps.csv"),
               ["study", "rep", "estimator", *PARAM_NAMES, *(f"abs_err_{n}" for n in PARAM_NAMES),
                "ess_warning", "min_ess", "truth_prior_distance_sigma", "n_bits", "failure"],
               result.reps)
    rows = []
    for study, h in result.histograms.items():
        for k in range(len(h["edges"]) - 1):
            rows.append([study, h["edges"][k], h["edges"][k + 1], h["prior"][k], h["posterior"][k]])
    _write_csv(_sidecar(out, ".hist.csv"), ["study", "bin_lo", "bin_hi", "prior_mass", "posterior_mass"], rows)
    write_metadata(_sidecar(out, ".meta.json"), cfg, {
        "ground_truth": {"p": gt.p, "A": gt.A, "B": gt.B, "F_ave": gt.F_ave,
                         "p_interleaved": gt.p_interleaved, "p_tilde": gt.p_tilde},
        "ess_warnings": result.warnings,
        "p_tilde_summary": {s: {k: v for k, v in h.items() if k not in ("edges", "prior", "posterior")}
                            for s, h in result.histograms.items()},
    })


# optimal-length landscape

def run_fisher_landscape(cfg: ExperimentConfig) -> list[list]:
    """Optimal interleaved length over A (B fixed) and over B (A fixed), plus
    the large-dimension curve against an A=1, B=0 scan."""
    if cfg.scenario != "fisher_landscape":
        raise ConfigError(f"expected scenario fisher_landscape, got {cfg.scenario}")
    ls = cfg.landscape
    m_range = (1, ls.m_max)
    nan = float("nan")
    rows = []
    for A in ls.A_grid:
        x = ModelParams(ls.p_tilde, ls.p_ref, A, ls.fixed_B)
        rows.append(["vs_A", A, ls.fixed_B, nan, optimal_m(x, "interleaved", m_range), nan])
    for B in ls.B_grid:
        x = ModelParams(ls.p_tilde, ls.p_ref, ls.fixed_A, B)
        rows.append(["vs_B", ls.fixed_A, B, nan, optimal_m(x, "interleaved", m_range), nan])
    for F in ls.F_grid:
        x = ModelParams(F, F, 1.0, 0.0)
        rows.append(["large_d", 1.0, 0.0, F, optimal_m(x, "interleaved", m_range), optimal_m_large_d(F, F)])
    if cfg.output_path:
        out = Path(cfg.output_path)
        _write_csv(out, ["panel", "A", "B", "F", "m_opt_scan", "m_opt_large_d"], rows)
        write_metadata(_sidecar(out, ".meta.json"), cfg)
    return rows


def sensitivity_argmax(x: ModelParams, m_range) -> int:
    """Argmax of the squared survival sensitivity to p_tilde (no variance weighting)."""
    grid, info = information_profile(x, "interleaved", m_range)
    q = x.A * (x.p_tilde * x.p_ref) ** grid + x.B
    return int(grid[int(np.argmax(info * q * (1 - q)))])


def run_experiment(cfg: ExperimentConfig):
    runners = {
        "risk_vs_K": run_risk_vs_K,
        "risk_vs_mmax": run_risk_vs_mmax,
        "gate_study": run_gate_study,
        "fisher_landscape": run_fisher_landscape,
    }
    try:
        return runners[cfg.scenario](cfg)
    except KeyError:
        raise ConfigError(f"scenario {cfg.scenario!r} is not an experiment") from None
