import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cranpower.network import ConfigurationError
from cranpower.harness import (AGGREGATE_COLUMNS, ExperimentConfig,
                               ExperimentResult, aggregate_runs, emit_outputs,
                               figure_data, run_experiment)

TINY = {
    "topology": {"num_cells": 1, "rrh_per_cell": 4},
    "rates_mbps": [10, 20],
    "users_per_cell": [2],
    "n_realizations": 2,
    "L_c": 4,
    "master_seed": 11,
}


@pytest.fixture(scope="module")
def tiny_result():
    return run_experiment(ExperimentConfig.from_dict(TINY))


class TestConfig:
    def test_defaults_reproduce_reference_setup(self):
        cfg = ExperimentConfig.from_dict({})
        assert cfg.rates_mbps == (10, 20, 30, 40, 50, 60, 70)
        assert cfg.users_per_cell == (1, 2, 3)
        assert cfg.num_cells == 7 and cfg.rrh_per_cell == 4
        assert cfg.L_c == 14
        assert cfg.params.p_max_w == 20.0
        assert cfg.params.noise_psd_dbm_hz == -150.0

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"ratez": [10]})
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"opts": {"bogus": 1}})

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"rates_mbps": [0]})
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"n_realizations": 0})
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"strategies": ["nope"]})

    def test_params_block(self):
        cfg = ExperimentConfig.from_dict({"params": {"noise_psd_dbm_hz": -169.0}})
        assert cfg.params.noise_psd_dbm_hz == -169.0


class TestRunExperiment:
    def test_row_cardinality(self, tiny_result):
        # strategies x rates rows, regardless of feasibility
        assert len(tiny_result.rows) == 4 * 2
        assert len(tiny_result.runs) == 4 * 2 * 2

    def test_cross_strategy_fairness_same_channel(self, tiny_result):
        # all strategies at one (rate, realization) share the seed
        seeds = {(r["strategy"], r["rate_mbps"], r["realization"]): r["seed"]
                 for r in tiny_result.runs}
        for rate in (10.0, 20.0):
            for i in range(2):
                vals = {seeds[(s, rate, i)] for s in
                        ("data_sharing", "compression", "single_bs", "per_cell_comp")}
                assert len(vals) == 1

    def test_aggregate_arithmetic_oracle(self):
        runs = [
            {"strategy": "x", "rate_mbps": 10.0, "users_per_cell": 1,
             "total_w": 100.0, "tx_w": 1.0, "activation_w": 2.0,
             "backhaul_w": 3.0, "active_fraction": 0.5, "iters": 4},
            {"strategy": "x", "rate_mbps": 10.0, "users_per_cell": 1,
             "total_w": 300.0, "tx_w": 3.0, "activation_w": 6.0,
             "backhaul_w": 9.0, "active_fraction": 1.0, "iters": 8},
            {"strategy": "x", "rate_mbps": 10.0, "users_per_cell": 1,
             "total_w": None, "tx_w": None, "activation_w": None,
             "backhaul_w": None, "active_fraction": None, "iters": 2},
        ]
        rows = aggregate_runs(runs)
        assert len(rows) == 1
        row = rows[0]
        assert row.n_feasible == 2
        assert row.mean_total_w == pytest.approx(200.0)
        assert row.mean_tx_w == pytest.approx(2.0)
        assert row.mean_active_fraction == pytest.approx(0.75)

    def test_all_infeasible_cell_has_null_means(self):
        runs = [{"strategy": "x", "rate_mbps": 70.0, "users_per_cell": 3,
                 "total_w": None, "tx_w": None, "activation_w": None,
                 "backhaul_w": None, "active_fraction": None, "iters": 1}]
        row = aggregate_runs(runs)[0]
        assert row.n_feasible == 0
        assert row.mean_total_w is None


class TestEmitOutputs:
    def test_files_and_headers(self, tiny_result, tmp_path):
        emit_outputs(tiny_result, tmp_path)
        agg = (tmp_path / "aggregates.csv").read_text().splitlines()
        assert agg[0] == ",".join(AGGREGATE_COLUMNS)
        assert len(agg) == 1 + len(tiny_result.rows)
        assert (tmp_path / "runs.csv").exists()
        assert (tmp_path / "figdata.json").exists()
        traces = list((tmp_path / "traces").glob("*.csv"))
        assert len(traces) == len(tiny_result.traces)

    def test_empty_rowset_headers_only(self, tmp_path):
        empty = ExperimentResult(rows=[], runs=[], traces={})
        emit_outputs(empty, tmp_path)
        assert (tmp_path / "aggregates.csv").read_text().splitlines() == [
            ",".join(AGGREGATE_COLUMNS)]

    def test_determinism_byte_identical(self, tmp_path):
        cfg1 = ExperimentConfig.from_dict(TINY)
        cfg2 = ExperimentConfig.from_dict(TINY)
        emit_outputs(run_experiment(cfg1), tmp_path / "a")
        emit_outputs(run_experiment(cfg2), tmp_path / "b")
        for name in ("aggregates.csv", "runs.csv", "figdata.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_figdata_decomposition_consistent(self, tiny_result):
        fig = figure_data(tiny_result)
        f4 = fig["fig4_total_power"]["2"]
        f5 = fig["fig5_power_decomposition"]["2"]
        for strat in f4:
            for tot, bs, bh in zip(f4[strat]["mean_total_w"],
                                   f5[strat]["bs_power_w"],
                                   f5[strat]["backhaul_power_w"]):
                if tot is not None:
                    assert tot == pytest.approx(bs + bh, rel=1e-12)

    def test_trace_schema(self, tiny_result, tmp_path):
        emit_outputs(tiny_result, tmp_path)
        ds_traces = list((tmp_path / "traces").glob("data_sharing_*.csv"))
        comp_traces = list((tmp_path / "traces").glob("compression_*.csv"))
        assert ds_traces and comp_traces
        ds_header = ds_traces[0].read_text().splitlines()[0]
        assert ds_header == "iter,surrogate,smoothed,true_power,n_active,max_cluster"
        comp_header = comp_traces[0].read_text().splitlines()[0]
        assert comp_header == ("iter,surrogate,smoothed,true_power,n_active,"
                               "max_cluster,q_min,q_max,backhaul_total_mbps")


class TestCli:
    def _run(self, *args):
        return subprocess.run([sys.executable, "-m", "cranpower.cli", *args],
                              capture_output=True, text=True)

    def test_validate_good_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY))
        proc = self._run("validate", "--config", str(cfg))
        assert proc.returncode == 0
        assert "config ok" in proc.stdout

    def test_validate_bad_config_exit_2(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"rates_mbps": [-5]}))
        proc = self._run("validate", "--config", str(cfg))
        assert proc.returncode == 2

    def test_run_and_outputs(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        doc = dict(TINY)
        doc["rates_mbps"] = [10]
        doc["strategies"] = ["single_bs", "per_cell_comp"]
        cfg.write_text(json.dumps(doc))
        proc = self._run("run", "--config", str(cfg), "--out", str(tmp_path / "out"))
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "out" / "aggregates.csv").exists()

    def test_run_unwritable_dir_exit_3(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        doc = dict(TINY)
        doc["rates_mbps"] = [10]
        doc["strategies"] = ["single_bs"]
        cfg.write_text(json.dumps(doc))
        blocked = tmp_path / "blocked"
        blocked.write_text("a file, not a dir")
        proc = self._run("run", "--config", str(cfg), "--out", str(blocked))
        assert proc.returncode == 3

    def test_trace_single_run(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(TINY))
        proc = self._run("trace", "--config", str(cfg),
                         "--single", "rate=10,users=2,seed=0,strategy=data_sharing")
        assert proc.returncode == 0, proc.stderr
        assert "status=optimal" in proc.stdout
        assert "smoothed" in proc.stdout

    def test_trace_bad_single_exit_2(self, tmp_path):
        proc = self._run("trace", "--single", "rate=10")
        assert proc.returncode == 2
