import json
import math
import statistics

import numpy as np
import pytest

from rcca import cli, harness
from rcca.harness import (
    ExperimentSpec,
    ResultRow,
    apply_sweep,
    child_seed,
    emit_plot_data,
    emit_trace_data,
    read_results,
    run_experiment,
    summarize,
)
from rcca.sysmodel import ConfigError, SystemConfig

TINY = SystemConfig(M=4, R=1, U=2, K=2, N_RF=2, N_p=2, D=2)


def tiny_spec(tmp_path=None, **kw):
    args = dict(base=TINY, axis="snr_db", values=[-5.0, 10.0], realizations=3, master_seed=42,
                out_dir=tmp_path, record_timing=False)
    args.update(kw)
    return ExperimentSpec(**args)


class TestSeeds:
    def test_reference_vector(self):
        # first output of the standard splitmix64 generator started from 0
        assert harness._splitmix64(0) == 0xE220A8397B1DCDAF

    def test_unique_over_grid(self):
        seeds = {child_seed(7, s, r) for s in range(20) for r in range(500)}
        assert len(seeds) == 20 * 500

    def test_depends_on_master(self):
        assert child_seed(0, 0, 0) != child_seed(1, 0, 0)
        with pytest.raises(ValueError):
            child_seed(0, -1, 0)


class TestSweeps:
    def test_snr_to_power(self):
        spec = tiny_spec(values=[-5, 10])
        assert [c.P_tx for c in spec.configs()] == pytest.approx([10 ** -0.5, 10.0])

    def test_other_axes(self):
        cfg = SystemConfig()
        assert apply_sweep(cfg, "N_p", 8).N_p == 8
        assert apply_sweep(cfg, "N_RF", 6).N_RF == 6
        assert apply_sweep(cfg, "B_MHz", 400).B == 400e6
        assert apply_sweep(cfg, "quant_bits", None).quant_bits is None
        assert apply_sweep(cfg, "quant_bits", 2).quant_bits == 2
        with pytest.raises(ConfigError):
            apply_sweep(cfg, "N_RF", 64)
        with pytest.raises(ConfigError):
            apply_sweep(cfg, "weather", 1)


class TestRunExperiment:
    def test_rows_and_order(self):
        rows = run_experiment(tiny_spec())
        assert [(r.sweep_value, r.realization) for r in rows] == [
            (v, i) for v in ("-5", "10") for i in range(3)]
        assert all(r.ok and r.hybrid_sum_rate <= r.digital_sum_rate + 1e-9 for r in rows)

    def test_byte_identical_reruns(self, tmp_path):
        a = run_experiment(tiny_spec(tmp_path / "a"))
        b = run_experiment(tiny_spec(tmp_path / "b", jobs=2))
        for name in ("results_snr_db.csv", "summary_snr_db.csv", "plot_snr_db.dat"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        meta = json.loads((tmp_path / "a" / "results_snr_db.json").read_text())
        assert meta["master_seed"] == 42
        assert read_results(tmp_path / "a" / "results_snr_db.csv") == a
        assert a == b

    def test_failures_recorded_in_row(self, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("bad draw")
        monkeypatch.setattr(harness, "rcca_solve", boom)
        rows = run_experiment(tiny_spec(values=[0.0], realizations=2))
        assert all(not r.ok and "bad draw" in r.error for r in rows)

    def test_two_hundred_rows_per_value(self):
        rows = run_experiment(tiny_spec(values=[-5.0, 10.0], realizations=200))
        counts = {}
        for r in rows:
            counts[r.sweep_value] = counts.get(r.sweep_value, 0) + 1
        assert counts == {"-5": 200, "10": 200}
        assert len({r.seed for r in rows}) == 400

    @pytest.mark.slow
    def test_two_hundred_rows_reference_config(self):
        rows = run_experiment(ExperimentSpec(base=SystemConfig(), axis="snr_db", values=[10.0],
                                             realizations=200, record_timing=False))
        assert len(rows) == 200 and all(r.ok for r in rows)

    def test_convergence_traces(self):
        traces = harness.convergence_traces(tiny_spec(values=[10.0]))
        assert list(traces) == ["10"] and len(traces["10"]) >= 2
        text = emit_trace_data(traces)
        assert text.splitlines()[2] == "# series: snr_db=10"


class TestSummarize:
    def test_single_row(self):
        s = summarize([ResultRow("1", 0, 0, 2.5, 2.0, 3, True)])[0]
        assert s["digital_mean"] == 2.5 and s["digital_std"] == 0.0 and s["gap_mean"] == 0.5

    def test_two_rows(self):
        rows = [ResultRow("1", 0, 0, 2.0, 1.0, 2, True), ResultRow("1", 1, 1, 4.0, 3.0, 4, False)]
        s = summarize(rows)[0]
        assert s["digital_mean"] == 3.0 and s["digital_std"] == pytest.approx(math.sqrt(2))
        assert s["iterations_mean"] == 3.0 and s["converged_fraction"] == 0.5

    def test_failed_rows_excluded(self):
        rows = [ResultRow("1", 0, 0, 2.0, 1.0), ResultRow("1", 1, 1, error="X: y")]
        s = summarize(rows)[0]
        assert s["n_ok"] == 1 and s["n_failed"] == 1 and s["digital_mean"] == 2.0
        with pytest.raises(ValueError):
            summarize([])

    def test_matches_independent_aggregation(self, rng):
        rows = [ResultRow(str(v), i, i, float(d), float(h), int(n), True)
                for i, (v, d, h, n) in enumerate(zip(rng.choice([0, 5], 200), rng.uniform(2, 9, 200),
                                                     rng.uniform(0, 2, 200), rng.integers(1, 9, 200)))]
        for s in summarize(rows):
            grp = [r for r in rows if r.sweep_value == s["sweep_value"]]
            d = np.array([r.digital_sum_rate for r in grp])
            h = np.array([r.hybrid_sum_rate for r in grp])
            assert s["digital_mean"] == pytest.approx(d.mean(), rel=1e-12)
            assert s["digital_std"] == pytest.approx(d.std(ddof=1), rel=1e-12)
            assert s["hybrid_std"] == pytest.approx(h.std(ddof=1), rel=1e-12)
            assert s["gap_mean"] == pytest.approx((d - h).mean(), rel=1e-12)
            assert s["iterations_mean"] == pytest.approx(np.mean([r.iterations for r in grp]))


class TestPlotData:
    def test_empty(self):
        assert emit_plot_data([], "snr_db") == "# snr_db sum_rate_bits_per_s_per_hz\n"

    def test_sorted_blocks(self):
        summary = [{"sweep_value": v, "digital_mean": d, "hybrid_mean": d - 1}
                   for v, d in (("10", 5.0), ("-5", 1.0), ("0", 2.0))]
        lines = emit_plot_data(summary, "snr_db").splitlines()
        assert lines[2] == "# series: Digital RCCA"
        assert [l.split()[0] for l in lines[3:6]] == ["-5", "0", "10"]
        assert lines[7] == "# series: Hybrid RCCA" and lines[8] == "-5 0.0"

    def test_infinite_bits_last(self):
        summary = [{"sweep_value": v, "digital_mean": 1.0, "hybrid_mean": 1.0} for v in ("inf", "2", "3")]
        lines = emit_plot_data(summary, "quant_bits").splitlines()
        assert [l.split()[0] for l in lines[3:6]] == ["2", "3", "inf"]


class TestCLI:
    def _config(self, tmp_path, extra=""):
        path = tmp_path / "cfg.yaml"
        path.write_text("system:\n  M: 4\n  R: 1\n  U: 2\n  K: 2\n  N_RF: 2\n  N_p: 2\n  D: 2\n"
                        "realizations: 2\n" + extra)
        return path

    def test_sweep_success(self, tmp_path, capsys):
        code = cli.main(["sweep-snr", "--config", str(self._config(tmp_path)), "--values=-5,10",
                         "--out", str(tmp_path / "out"), "--no-timing"])
        assert code == 0
        assert len(read_results(tmp_path / "out" / "results_snr_db.csv")) == 4
        assert (tmp_path / "out" / "plot_snr_db.dat").exists()

    def test_quant_sweep_from_config(self, tmp_path):
        cfg = self._config(tmp_path, "sweeps:\n  quant_bits: [inf, 2]\n")
        assert cli.main(["sweep-quant", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        rows = read_results(tmp_path / "results_quant_bits.csv")
        assert sorted({r.sweep_value for r in rows}) == ["2", "inf"]

    def test_convergence_trace(self, tmp_path):
        code = cli.main(["convergence-trace", "--config", str(self._config(tmp_path)),
                         "--values=10", "--out", str(tmp_path)])
        assert code == 0 and (tmp_path / "convergence_trace.dat").exists()

    @pytest.mark.parametrize("argv", [
        ["run", "--bogus"],
        ["sweep-rf", "--values=64"],
        ["sweep-snr", "--values=abc"],
    ])
    def test_config_errors(self, tmp_path, argv):
        with pytest.raises(SystemExit) as exc:
            raise SystemExit(cli.main(argv + ["--out", str(tmp_path)]))
        assert exc.value.code == 1

    def test_unknown_config_key(self, tmp_path):
        cfg = self._config(tmp_path, "colour: blue\n")
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1

    def test_failed_realization_exit_code(self, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("bad draw")
        monkeypatch.setattr(harness, "rcca_solve", boom)
        code = cli.main(["run", "--config", str(self._config(tmp_path)), "--out", str(tmp_path)])
        assert code == 2


def test_quantization_sweep_shares_channels():
    rows = run_experiment(tiny_spec(base=TINY.with_snr_db(10), axis="quant_bits",
                                    values=[None, 2], realizations=3))
    by_value = {v: [r for r in rows if r.sweep_value == v] for v in ("inf", "2")}
    assert [r.seed for r in by_value["inf"]] == [r.seed for r in by_value["2"]]
    assert [r.digital_sum_rate for r in by_value["inf"]] == [r.digital_sum_rate for r in by_value["2"]]
