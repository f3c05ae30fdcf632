import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from accelrb.cli import main
from accelrb.config import ExperimentConfig, config_from_dict, default_config, expand_lengths, load_config
from accelrb.dataio import read_dataset, write_dataset
from accelrb.errors import ConfigError
from accelrb.fisher import designs_from_lengths
from accelrb.gatesim import sample_model_data
from accelrb.harness import run_experiment, run_fisher_landscape, run_gate_study, run_risk_vs_K, run_risk_vs_mmax
from accelrb.model import ModelParams

from conftest import PRIOR_MEAN


def tiny(scenario, tmp_path, **kw):
    cfg = default_config(scenario)
    cfg.n_trials = 3
    cfg.bim_samples = 200
    cfg.smc.n_particles = 300
    cfg.output_path = str(tmp_path / f"{scenario}.csv")
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = default_config("risk_vs_K")
        assert cfg.reference_lengths == list(range(1, 101))
        assert cfg.interleaved_lengths == list(range(1, 51))
        assert cfg.shots == [1, 3, 10, 32, 100]
        assert cfg.n_trials == 100
        assert default_config("risk_vs_mmax").shots == [1000]

    def test_unknown_key_and_scenario(self):
        with pytest.raises(ConfigError):
            config_from_dict({"nope": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig(scenario="nope")
        with pytest.raises(ConfigError):
            config_from_dict({"n_trials": 0})

    def test_length_ranges(self):
        assert expand_lengths({"start": 1, "stop": 21, "step": 10}) == [1, 11, 21]
        with pytest.raises(ConfigError):
            expand_lengths({"start": 1})

    def test_load_round_trip(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"scenario": "risk_vs_mmax", "m_max": [21], "smc": {"n_particles": 100}}))
        cfg = load_config(p)
        assert cfg.scenario == "risk_vs_mmax" and cfg.m_max == [21] and cfg.smc.n_particles == 100
        assert config_from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()

    def test_bad_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(p)


class TestDataIO:
    def test_round_trip(self, tmp_path):
        data = sample_model_data(ModelParams(*PRIOR_MEAN), designs_from_lengths([1, 2], [3], 7), np.random.default_rng(0))
        write_dataset(data, tmp_path / "d.jsonl")
        assert read_dataset(tmp_path / "d.jsonl") == data

    def test_bad_records(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"mode": "reference", "m": 1, "shots": 3}\n')
        with pytest.raises(ConfigError):
            read_dataset(p)
        p.write_text("")
        with pytest.raises(ConfigError):
            read_dataset(p)


class TestRisk:
    def test_schema_and_invariants(self, tmp_path):
        cfg = tiny("risk_vs_K", tmp_path, shots=[1, 10])
        res = run_risk_vs_K(cfg)
        rows = read_rows(cfg.output_path)
        assert [(r["estimator"], r["K"]) for r in rows] == [("SMC", "1"), ("SMC", "10"), ("LSF", "1"), ("LSF", "10")]
        for r in rows:
            assert float(r["mse_trace"]) >= 0 and float(r["mse_ptilde"]) >= 0
        bcrb_by_k = {}
        for r in rows:
            bcrb_by_k.setdefault(r["K"], set()).add(r["bcrb_trace"])
        assert all(len(v) == 1 for v in bcrb_by_k.values())
        trials = read_rows(tmp_path / "risk_vs_K.trials.csv")
        assert len(trials) == 2 * 2 * 3
        meta = json.loads((tmp_path / "risk_vs_K.meta.json").read_text())
        assert meta["config"]["n_trials"] == 3 and "versions" in meta
        assert all(t.sq_errors is None or min(t.sq_errors) >= 0 for t in res.trials)

    def test_fair_comparison_same_data_and_recorded_guess(self, tmp_path):
        from accelrb.harness import _child_rngs

        cfg = tiny("risk_vs_K", tmp_path, shots=[3])
        res = run_risk_vs_K(cfg)
        lsf = [t for t in res.trials if t.estimator == "LSF"]
        for t in lsf:
            r_truth, _, _, r_lsf = _child_rngs(cfg.rng_seed, 0, t.trial)
            guess = cfg.prior.draw(1, r_lsf)[0]
            assert t.diagnostics["guess"] == guess.tolist()

    def test_mmax_sweep(self, tmp_path):
        cfg = tiny("risk_vs_mmax", tmp_path, m_max=[21, 41])
        run_risk_vs_mmax(cfg)
        rows = read_rows(cfg.output_path)
        assert {r["m_max"] for r in rows} == {"21", "41"}
        assert rows[1]["mse_trace_ratio_prev"] != "nan"

    def test_wrong_scenario(self, tmp_path):
        with pytest.raises(ConfigError):
            run_risk_vs_K(tiny("gate_study", tmp_path))

    def test_workers_do_not_change_output(self, tmp_path):
        a = tiny("risk_vs_K", tmp_path, shots=[1])
        a.output_path = str(tmp_path / "a.csv")
        b = tiny("risk_vs_K", tmp_path, shots=[1], workers=2)
        b.output_path = str(tmp_path / "b.csv")
        run_risk_vs_K(a)
        run_risk_vs_K(b)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.trials.csv").read_bytes() == (tmp_path / "b.trials.csv").read_bytes()


class TestGateStudy:
    def test_outputs(self, tmp_path):
        cfg = tiny("gate_study", tmp_path, n_trials=2)
        res = run_gate_study(cfg)
        rows = read_rows(cfg.output_path)
        assert [r["row"] for r in rows[:5]] == ["True", "SMC Estimate", "LSF Estimate", "SMC Error", "LSF Error"]
        assert len(read_rows(tmp_path / "gate_study.reps.csv")) == 2 * 2 * 2
        hist = read_rows(tmp_path / "gate_study.hist.csv")
        for study in ("bad_prior", "good_prior"):
            mass = [float(h["posterior_mass"]) for h in hist if h["study"] == study]
            assert sum(mass) == pytest.approx(1.0)
        meta = json.loads((tmp_path / "gate_study.meta.json").read_text())
        assert meta["ground_truth"]["p_tilde"] == pytest.approx(res.truth.p_tilde)
        assert "ess_warnings" in meta

    def test_bad_prior_distance(self, tmp_path):
        cfg = tiny("gate_study", tmp_path, n_trials=1)
        run_gate_study(cfg)
        reps = read_rows(tmp_path / "gate_study.reps.csv")
        dist = float(next(r for r in reps if r["study"] == "bad_prior")["truth_prior_distance_sigma"])
        assert 6.5 < dist < 7.3

    def test_bit_budgets(self):
        cfg = default_config("gate_study")
        bits = {s["name"]: (len(s["reference_lengths"]) + len(s["interleaved_lengths"])) * s["shots"]
                for s in cfg.studies}
        assert bits == {"bad_prior": 40_000, "good_prior": 3_000}


class TestLandscape:
    def test_rows(self, tmp_path):
        cfg = tiny("fisher_landscape", tmp_path)
        rows = run_fisher_landscape(cfg)
        panels = {r[0] for r in rows}
        assert panels == {"vs_A", "vs_B", "large_d"}
        large = [r for r in rows if r[0] == "large_d" and r[3] == 0.999]
        assert large[0][5] == pytest.approx(500.25, abs=0.01)
        assert all(r[2] == 0.5 for r in rows if r[0] == "vs_A")
        assert all(r[1] == 0.25 for r in rows if r[0] == "vs_B")


class TestDeterminism:
    @pytest.mark.parametrize("scenario", ["risk_vs_K", "risk_vs_mmax", "gate_study", "fisher_landscape"])
    def test_byte_identical(self, tmp_path, scenario):
        outs = []
        for _ in range(2):
            cfg = tiny(scenario, tmp_path, n_trials=2, shots=[1, 3], m_max=[21])
            run_experiment(cfg)
            outs.append({p.name: p.read_bytes() for p in sorted(tmp_path.iterdir())})
        assert len(outs[0]) >= 2
        assert outs[0] == outs[1]

    def test_simulate_is_not_an_experiment(self, tmp_path):
        with pytest.raises(ConfigError):
            run_experiment(tiny("simulate", tmp_path))


class TestCli:
    def test_simulate_and_fit(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        assert main(["simulate", "--seed", "4", "--out", str(data)]) == 0
        recs = [json.loads(l) for l in data.read_text().splitlines()]
        assert set(recs[0]) == {"mode", "m", "shots", "survivals"}
        out = tmp_path / "smc.json"
        assert main(["fit-smc", "--data", str(data), "--particles", "500", "--out", str(out)]) == 0
        est = json.loads(out.read_text())["estimate"]
        assert set(est) == {"p_tilde", "p_ref", "A", "B"}
        assert main(["fit-lsf", "--data", str(data)]) == 0
        assert json.loads(capsys.readouterr().out)["estimator"] == "lsf"

    def test_gate_level_simulate_with_records(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"reference_lengths": [1, 2, 3], "interleaved_lengths": [1], "shots": [2],
                                    "records_path": str(tmp_path / "rec.jsonl")}))
        assert main(["simulate", "--gate-level", "--config", str(cfgp), "--out", str(tmp_path / "d.jsonl")]) == 0
        assert len((tmp_path / "rec.jsonl").read_text().splitlines()) == 8

    def test_fisher(self, tmp_path, capsys):
        assert main(["fisher"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert np.array(out["crb"]).shape == (4, 4)
        assert main(["fisher", "--landscape", "--out", str(tmp_path / "l.csv")]) == 0

    def test_risk_and_gate_study(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"shots": [1], "bim_samples": 100}))
        assert main(["risk", "--config", str(cfgp), "--trials", "2", "--particles", "200",
                     "--out", str(tmp_path / "r.csv")]) == 0
        assert main(["risk", "--sweep", "m_max", "--trials", "1", "--particles", "200",
                     "--config", str(cfgp), "--out", str(tmp_path / "m.csv")]) == 0
        assert main(["gate-study", "--trials", "1", "--particles", "200", "--out", str(tmp_path / "g.csv")]) == 0

    @pytest.mark.parametrize("argv,category,code", [
        (["fit-lsf"], "config", 5),
        (["simulate", "--config", "/nonexistent.json"], "config", 5),
        (["risk", "--trials", "0", "--out", "x.csv"], "config", 5),
        (["fit-smc", "--particles", "1", "--data", "x"], "config", 5),
    ])
    def test_error_categories(self, argv, category, code, capsys):
        assert main(argv) == code
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == category and err["message"]

    def test_domain_error_exit(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        data.write_text('{"mode": "reference", "m": 1, "shots": 3, "survivals": 1}\n'
                        '{"mode": "interleaved", "m": 1, "shots": 3, "survivals": 1}\n')
        assert main(["fit-lsf", "--data", str(data)]) == 3
        assert json.loads(capsys.readouterr().err)["error"] == "underdetermined"

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "accelrb", "fit-lsf"], capture_output=True, text=True)
        assert proc.returncode == 5
        assert json.loads(proc.stderr)["error"] == "config"
