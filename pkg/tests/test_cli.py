import csv
import io
import json
import subprocess
import sys

import pytest

from permclust.exact import exact_cluster_prob
from permclust.permcore import ClusterQuery
from permclust.cli import ExperimentSpec, UsageError, main, parse_args


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_exact_command(capsys):
    code, out, _ = run_cli(capsys, "exact", "--q", "0.5", "--n", "7", "--l", "2", "--k", "2")
    assert code == 0
    rows = table(out)
    assert len(rows) == 1
    assert float(rows[0]["probability"]) == pytest.approx(365 / 889, abs=1e-15)
    assert rows[0]["support_size"] == "5040"


def test_exact_all_k_and_pattern(capsys):
    code, out, _ = run_cli(capsys, "exact", "--q", "0.3", "--n", "6", "--l", "3", "--pattern", "312")
    assert code == 0
    rows = table(out)
    assert [r["k"] for r in rows] == ["1", "2", "3", "4"]
    assert float(rows[1]["probability"]) == pytest.approx(0.024121427373366415, abs=1e-15)
    assert rows[0]["pattern"] == "3 1 2"


def test_exact_cap_refusal(capsys):
    code, _, err = run_cli(capsys, "exact", "--q", "0.5", "--n", "11", "--l", "2", "--k", "1")
    assert code == 2
    assert "cap" in err.lower()


def test_usage_errors(capsys):
    assert run_cli(capsys, "exact", "--q", "0.5", "--n", "7")[0] == 1  # missing --l
    assert run_cli(capsys, "nonsense")[0] == 1
    assert run_cli(capsys)[0] == 1
    assert run_cli(capsys, "exact", "--q", "0.5", "--n", "4", "--l", "5", "--k", "1")[0] == 1
    assert run_cli(capsys, "estimate", "--q", "x")[0] == 1
    assert run_cli(capsys, "bounds", "--dist", "geometric:q=2", "--n", "5", "--l", "2")[0] == 1
    assert run_cli(capsys, "exact", "--q", "0.5", "--dist", "uniform", "--n", "4", "--l", "2")[0] == 1
    assert run_cli(capsys, "exact", "--q", "0.5", "--n", "4", "--l", "2", "--format", "xml")[0] == 1


def test_estimate_command(capsys):
    code, out, _ = run_cli(capsys, "estimate", "--q", "0.5", "--n", "8", "--l", "2", "--k", "3",
                           "--samples", "50000", "--seed", "9")
    assert code == 0
    row = table(out)[0]
    assert row["seed"] == "9" and row["samples"] == "50000"
    est, se = float(row["estimate"]), float(row["std_error"])
    assert abs(est - 0.3546218487394958) <= 3.9 * se
    assert float(row["ci_low"]) <= est <= float(row["ci_high"])


def test_seed_from_environment(capsys, monkeypatch):
    argv = ["estimate", "--q", "0.5", "--n", "8", "--l", "2", "--k", "3", "--samples", "2000"]
    monkeypatch.setenv("PERMCLUST_SEED", "77")
    _, env_out, _ = run_cli(capsys, *argv)
    _, flag_out, _ = run_cli(capsys, *argv, "--seed", "77")
    assert env_out == flag_out
    assert table(env_out)[0]["seed"] == "77"
    _, other, _ = run_cli(capsys, *argv, "--seed", "78")
    assert other != flag_out


def test_bounds_command(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--q", "0.5", "--n", "7", "--l", "2", "--k", "2")
    assert code == 0
    r = table(out)[0]
    assert float(r["lower"]) <= float(r["exact"]) <= float(r["upper"])
    assert float(r["mallows_lower"]) == pytest.approx(0.40377441299100281, abs=1e-15)
    code, out, _ = run_cli(capsys, "bounds", "--dist", "finitetail:w=0.2,0.5;r=0.4", "--n", "6", "--l", "2",
                           "--k", "2")
    assert code == 0
    r = table(out)[0]
    assert r["upper"] == "" and "non-increasing" in r["notes"]
    code, out, _ = run_cli(capsys, "bounds", "--q", "0.5", "--n", "40", "--l", "3", "--k", "5")
    assert code == 0 and table(out)[0]["exact"] == ""


def test_scaling_command(capsys):
    code, out, _ = run_cli(capsys, "scaling", "--alpha", "0.5", "--c", "1", "--l", "2", "--n", "100,400",
                           "--samples", "5000", "--seed", "3")
    assert code == 0
    rows = table(out)
    assert [r["n"] for r in rows] == ["100", "400"]
    assert [r["k"] for r in rows] == ["50", "200"]
    assert float(rows[0]["q"]) == pytest.approx(0.9)


def test_supercluster_command(capsys):
    code, out, _ = run_cli(capsys, "supercluster", "--q", "0.3", "--n", "60", "--l", "5,10",
                           "--samples", "2000", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["rows"][0]["kind"] == "limit"
    assert doc["rows"][0]["value"] == pytest.approx(0.375337760860910147703750389738, abs=1e-10)
    assert len(doc["rows"]) == 3 and doc["positive_recurrent"] is True
    code, out, _ = run_cli(capsys, "supercluster", "--dist", "powerlaw:s=1.5", "--k", "2")
    assert code == 0 and float(table(out)[0]["value"]) == 0.0


def test_renewal_command(capsys):
    code, out, _ = run_cli(capsys, "renewal", "--q", "0.5", "--n", "5", "--samples", "20000",
                           "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert len(doc["rows"]) == 5
    row3 = doc["rows"][2]
    assert row3["u_n"] == pytest.approx(0.328125)
    assert abs(row3["renewal_freq"] - 0.328125) <= 3.9 * row3["std_error"]
    assert doc["mean_t1_theory"] == pytest.approx(1 / doc["lim_u"])


def test_verify_command(capsys):
    code, out, _ = run_cli(capsys, "verify")
    assert code == 0
    rows = table(out)
    assert rows and all(r["status"] == "pass" for r in rows)


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment\nq = 0.5\nn = 7\nl = 2\nk = 2\nformat = json\n")
    code, out, _ = run_cli(capsys, "exact", "--config", str(cfg))
    assert code == 0
    assert json.loads(out)["rows"][0]["probability"] == pytest.approx(365 / 889, abs=1e-15)
    code, out, _ = run_cli(capsys, "exact", "--config", str(cfg), "--format", "csv", "--k", "1")
    assert code == 0 and table(out)[0]["k"] == "1"
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert run_cli(capsys, "exact", "--config", str(bad))[0] == 1


def test_experiment_spec_round_trip(tmp_path):
    text = "estimate --dist 'finitetail:w=0.2,0.5;r=0.4' --n 8 --l 2 --k 1,3 --samples 10 --seed 5 --cap-override"
    spec = ExperimentSpec.from_text(text)
    assert spec.command == "estimate"
    assert spec.options["dist"] == "finitetail:w=0.2,0.5;r=0.4"
    assert spec.options["cap-override"] is True
    again = ExperimentSpec.from_text(spec.to_text())
    assert again == spec
    spec2 = parse_args(["scaling", "--alpha", "0.25", "--n", "10,20"])
    assert ExperimentSpec.from_text(spec2.to_text()).options["alpha"] == 0.25
    with pytest.raises(UsageError):
        parse_args(["estimate", "--samples", "many"])


def test_csv_format_and_precision(capsys):
    _, out, _ = run_cli(capsys, "exact", "--q", "0.5", "--n", "7", "--l", "2", "--k", "2")
    header, row = out.strip().split("\n")
    assert header == "n,l,k,pattern,measure,probability,support_size,method"
    prob = row.split(",")[5]
    value = exact_cluster_prob(7, 0.5, ClusterQuery(7, 2, 2))
    assert prob == format(value, ".17g")
    assert float(prob) == value


def test_output_file(tmp_path, capsys):
    path = tmp_path / "o.csv"
    code, out, _ = run_cli(capsys, "exact", "--q", "0.5", "--n", "5", "--l", "2", "--k", "2", "--out", str(path))
    assert code == 0 and out == ""
    assert table(path.read_text())[0]["n"] == "5"


def test_byte_identical_across_workers(tmp_path):
    outs = []
    for w in (1, 4, 16):
        path = tmp_path / f"w{w}.csv"
        assert main(["estimate", "--q", "0.8", "--n", "40", "--l", "3", "--k", "1,10,20", "--samples", "30000",
                     "--seed", "123", "--workers", str(w), "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "permclust.cli", "exact", "--q", "1", "--n", "4", "--l", "2",
                           "--k", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert float(table(proc.stdout)[0]["probability"]) == pytest.approx(0.5)
