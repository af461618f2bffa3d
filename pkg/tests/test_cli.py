import json
import subprocess
import sys

import numpy as np
import pytest

from fedhp.cli import BENCH_ROWS, format_bench_table, main, run_bench
from fedhp.hpdata import DEFAULT_SPACE, ClientReport, HPRecord, load_reports, write_reports


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _write(tmp_path, reports):
    write_reports(reports, tmp_path)
    return str(tmp_path)


class TestGenerate:
    def test_file_count(self, tmp_path, capsys):
        code, out, _ = _run(capsys, "generate", "--clients", "20", "--seed", "3", "--out", str(tmp_path))
        assert code == 0
        assert len(json.loads(out)["written"]) == 20
        assert len(load_reports(tmp_path)) == 20

    def test_deterministic_bytes(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert _run(capsys, "generate", "--clients", "4", "--seed", "9", "--out", str(d))[0] == 0
        for f in sorted(a.iterdir()):
            assert f.read_bytes() == (b / f.name).read_bytes()

    def test_zero_heterogeneity_shares_argmax(self, tmp_path, capsys):
        _run(capsys, "generate", "--clients", "10", "--heterogeneity", "0", "--seed", "7", "--out", str(tmp_path))
        reports = load_reports(tmp_path)
        best = {r.records[int(np.argmax(r.accuracy_array()))].values for r in reports}
        assert len(best) == 1

    def test_config_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('seed = 1\n[generate]\nclients = 5\nheterogeneity = 0.2\n'
                       '[space]\ndims = [{name = "a", lower = 0.0, upper = 2.0}]\n')
        _run(capsys, "generate", "--config", str(cfg), "--out", str(tmp_path / "f"))
        reports = load_reports(tmp_path / "f")
        assert len(reports) == 5 and reports[0].space.names == ["a"]
        _run(capsys, "generate", "--config", str(cfg), "--clients", "2", "--out", str(tmp_path / "g"))
        assert len(load_reports(tmp_path / "g")) == 2

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[generate]\nclientz = 5\n")
        code, _, err = _run(capsys, "generate", "--config", str(cfg), "--out", str(tmp_path))
        assert code == 2
        assert json.loads(err)["error"] == "InputError"

    def test_missing_out(self, capsys):
        assert _run(capsys, "generate")[0] == 2


class TestTune:
    def test_mean_identical_input(self, tmp_path, capsys):
        rec = HPRecord((0.1, 0.7), 0.9)
        path = _write(tmp_path, [ClientReport(f"c{i}", (rec,), DEFAULT_SPACE) for i in range(3)])
        code, out, _ = _run(capsys, "tune", "--strategy", "mean", "--input", path)
        assert code == 0
        report = json.loads(out)
        assert report["global_hp"]["values"] == pytest.approx([0.1, 0.7], abs=1e-12)
        assert report["global_hp"]["named"] == pytest.approx({"lr": 0.1, "momentum": 0.7}, abs=1e-12)

    @pytest.mark.parametrize("strategy", ["median", "trimmed-mean", "top-mean", "top-median", "dbscan"])
    def test_plain_strategies_run(self, capsys, strategy):
        code, out, _ = _run(capsys, "tune", "--strategy", strategy, "--clients", "6", "--seed", "2",
                            "--heterogeneity", "0.05")
        assert code == 0
        values = json.loads(out)["global_hp"]["values"]
        assert all(lo <= v <= hi for v, lo, hi in zip(values, DEFAULT_SPACE.lower, DEFAULT_SPACE.upper))

    def test_dbscan_all_noise_exit_code(self, tmp_path, capsys):
        grid = [(0.001 + 0.49 * i / 4, 0.5 + 0.49 * j / 4) for i in range(5) for j in range(5)]
        reports = [ClientReport("c0", tuple(HPRecord(v, 0.5) for v in grid), DEFAULT_SPACE)]
        path = _write(tmp_path, reports)
        code, _, err = _run(capsys, "tune", "--strategy", "dbscan", "--input", path, "--eps", "0.05",
                            "--min-pts", "3", "--top-fraction", "1.0")
        assert code == 3
        assert json.loads(err)["error"] == "AllNoiseError"

    def test_malformed_report_names_client(self, tmp_path, capsys):
        (tmp_path / "x.json").write_text(json.dumps({
            "client_id": "broken", "space": DEFAULT_SPACE.to_dict(),
            "records": [{"values": [0.1, 2.0], "accuracy": 0.5}]}))
        code, _, err = _run(capsys, "tune", "--strategy", "mean", "--input", str(tmp_path))
        assert code == 2
        payload = json.loads(err)
        assert payload["client_id"] == "broken" and payload["field"] == "momentum"

    def test_missing_input(self, tmp_path, capsys):
        assert _run(capsys, "tune", "--input", str(tmp_path / "nope"))[0] == 2

    def test_pf_mean_report(self, tmp_path, capsys):
        out_path = tmp_path / "r.json"
        code, _, _ = _run(capsys, "tune", "--strategy", "pf-mean", "--clients", "2", "--seed", "4",
                          "--out", str(out_path))
        assert code == 0
        report = json.loads(out_path.read_text())
        assert report["mse"] <= 1e-3
        assert report["transcript"]["bootstrap_count"] == 0
        assert report["reference_bootstrap_count"] == 0
        assert json.loads(json.dumps(report)) == report

    def test_pf_dbscan_report(self, capsys):
        code, out, _ = _run(capsys, "tune", "--strategy", "pf-dbscan", "--clients", "3", "--seed", "4",
                            "--min-pts", "2", "--heterogeneity", "0")
        assert code == 0
        report = json.loads(out)
        assert report["mse"] <= 5e-3
        assert report["transcript"]["bootstrap_count"] == report["details"]["planned_bootstraps"]
        assert report["reference_bootstrap_count"] == 6

    def test_pf_dbscan_count_cap_exceeded(self, capsys):
        code, _, err = _run(capsys, "tune", "--strategy", "pf-dbscan", "--clients", "3", "--seed", "4",
                            "--min-pts", "2", "--heterogeneity", "0", "--count-cap", "3")
        assert code == 4
        assert json.loads(err)["error"] == "DivisorRangeError"

    def test_deterministic(self, capsys):
        outs = [_run(capsys, "tune", "--strategy", "top-mean", "--clients", "5", "--seed", "11")[1]
                for _ in range(2)]
        assert outs[0] == outs[1]

    def test_module_entry_point(self, tmp_path):
        rec = HPRecord((0.3, 0.6), 0.8)
        path = _write(tmp_path, [ClientReport("c0", (rec,), DEFAULT_SPACE)])
        proc = subprocess.run([sys.executable, "-m", "fedhp", "tune", "--strategy", "median", "--input", path],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["global_hp"]["values"] == pytest.approx([0.3, 0.6])


def test_bench_structure(tmp_path, capsys):
    out_path = tmp_path / "bench.json"
    code, out, _ = _run(capsys, "bench", "--clients", "2", "--reps", "2", "--out", str(out_path))
    assert code == 0
    rows = json.loads(out_path.read_text())["rows"]
    assert [r["operation"] for r in rows] == list(BENCH_ROWS)
    assert len(rows) == 10
    assert all(r["mean_ms"] > 0 and r["std_ms"] >= 0 for r in rows)
    by_name = {r["operation"]: r["mean_ms"] for r in rows}
    assert by_name["Compare (with bootstrapping)"] >= 10 * by_name["Add"]
    for name in BENCH_ROWS:
        assert name in out


def test_bench_rejects_bad_reps():
    from fedhp.errors import InputError
    with pytest.raises(InputError):
        run_bench("test", 2, 0, 0)


def test_format_bench_table():
    table = format_bench_table([{"operation": "Add", "mean_ms": 1.234, "std_ms": 0.5}], "t")
    assert table.splitlines()[0] == "t"
    assert table.splitlines()[-1].endswith("1.23 ± 0.50")
