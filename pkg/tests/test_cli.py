"""Command-line entry points, output formats and exit codes."""

import io
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from sgsdesign.cli import EXIT_DESIGN, EXIT_OK, EXIT_USAGE, main
from sgsdesign.textfeat import synthetic_corpus, write_corpus


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), stdout=out)
    return code, out.getvalue()


class TestORatio:
    def test_json(self):
        code, text = run("oratio", "--sens", "0.40", "--spec", "0.95", "--prev", "0.10",
                         "--ratio", "0.5")
        assert code == EXIT_OK
        doc = json.loads(text)
        assert doc["o_ratio"] == pytest.approx(3.2964, abs=1e-4)
        assert doc["lr_plus"] == pytest.approx(8.0)
        assert doc["p_z"] == pytest.approx(0.085)

    def test_approx(self):
        _, text = run("oratio", "--sens", "0.40", "--spec", "0.95", "--prev", "0.001",
                      "--ratio", "0.5", "--approx")
        assert json.loads(text)["o_ratio"] == pytest.approx(4.3158, abs=1e-4)

    def test_csv(self):
        _, text = run("oratio", "--sens", "0.4", "--spec", "0.95", "--prev", "0.1",
                      "--ratio", "0.75", "--csv")
        header, row = text.strip().split("\n")
        values = dict(zip(header.split(","), row.split(",")))
        assert float(values["o_ratio"]) == pytest.approx(5.2706, abs=1e-4)

    def test_surface(self):
        code, text = run("oratio", "--surface", "--prev", "0.1", "--ratio", "0.5",
                         "--sens-grid", "0.4,0.6", "--spec-grid", "0.9:0.95:0.05")
        assert code == EXIT_OK
        lines = text.strip().split("\n")
        assert lines[0] == "sensitivity,specificity,R,prevalence,o_ratio"
        assert len(lines) == 5

    def test_low_specificity_exit_2(self, capsys):
        code, _ = run("oratio", "--sens", "0.6", "--spec", "0.45", "--prev", "0.1",
                      "--ratio", "0.5")
        assert code == EXIT_DESIGN
        assert "negate" in capsys.readouterr().err

    def test_missing_sens(self):
        assert run("oratio", "--prev", "0.1", "--ratio", "0.5")[0] == EXIT_USAGE

    def test_out_of_range_value(self):
        assert run("oratio", "--sens", "1.4", "--spec", "0.9", "--prev", "0.1",
                   "--ratio", "0.5")[0] == EXIT_USAGE


class TestPlan:
    def test_worked_example(self):
        code, text = run("plan", "--budget", "500", "--ratio", "0.75", "--sens", "0.4",
                         "--spec", "0.95", "--prev", "0.1", "--cohort-size", "100000")
        assert code == EXIT_OK
        doc = json.loads(text)
        assert doc["expected_cases"] == pytest.approx(184.667, abs=1e-3)
        assert doc["srs_equivalent"] == pytest.approx(1846.67, abs=0.01)
        assert doc["expected_cases_srs"] == pytest.approx(50.0)
        assert doc["pi_z1"] * 8500 + doc["pi_z0"] * 91500 == pytest.approx(500)

    def test_infeasible_names_stratum(self, capsys):
        code, _ = run("plan", "--budget", "12000", "--ratio", "0.75", "--sens", "0.4",
                      "--spec", "0.95", "--prev", "0.1", "--cohort-size", "100000")
        assert code == EXIT_DESIGN
        assert "Z=1" in capsys.readouterr().err

    def test_unknown_flag(self):
        assert run("plan", "--bogus", "1")[0] == EXIT_USAGE

    def test_no_command(self):
        assert run()[0] == EXIT_USAGE


class TestDataCommands:
    def test_simulate_then_sample(self, tmp_path):
        cohort = tmp_path / "cohort.csv"
        code, text = run("simulate", "--out", str(cohort), "--N", "3000", "--p", "30",
                         "--prevalence", "0.1", "--seed", "4")
        assert code == EXIT_OK
        meta = json.loads(text)
        assert meta["N"] == 3000 and (tmp_path / "cohort.meta.json").exists()
        code, text = run("sample", "--cohort", str(cohort), "--design", "SGS", "--n", "200",
                         "--ratio", "0.5", "--seed", "1")
        assert code == EXIT_OK
        lines = text.strip().split("\n")
        assert lines[0] == "unit_id,z,y,weight,design,seed"
        z = [int(line.split(",")[1]) for line in lines[1:]]
        assert len(z) == 200 and sum(z) == 100
        assert run("sample", "--cohort", str(cohort), "--design", "SGS", "--n", "200",
                   "--seed", "1")[1] == text

    def test_sample_seed_from_env(self, tmp_path, monkeypatch):
        cohort = tmp_path / "c.csv"
        run("simulate", "--out", str(cohort), "--N", "500", "--p", "30", "--seed", "1")
        monkeypatch.setenv("SGS_SEED", "9")
        a = run("sample", "--cohort", str(cohort), "--design", "SRS", "--n", "20")[1]
        b = run("sample", "--cohort", str(cohort), "--design", "SRS", "--n", "20",
                "--seed", "9")[1]
        assert a == b

    def test_sample_infeasible(self, tmp_path):
        cohort = tmp_path / "c.csv"
        run("simulate", "--out", str(cohort), "--N", "500", "--p", "30", "--seed", "1")
        code, _ = run("sample", "--cohort", str(cohort), "--design", "SGS", "--n", "400",
                      "--ratio", "0.9")
        assert code == EXIT_DESIGN

    def test_featurize(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(synthetic_corpus(300, seed=2), corpus)
        code, text = run("featurize", "--corpus", str(corpus), "--out-dir", str(tmp_path / "f"))
        assert code == EXIT_OK
        doc = json.loads(text)
        assert doc["documents"] == 300
        assert doc["features_with_surrogate"] == doc["terms"] + 1
        for name in ("tfidf.npz", "vocabulary.json", "units.csv"):
            assert (tmp_path / "f" / name).exists()

    def test_evaluate(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("y,score,weight\n1,0.9,1\n1,0.4,2\n0,0.5,1\n0,0.1,2\n")
        code, text = run("evaluate", "--scores", str(path), "--B", "50", "--seed", "3")
        assert code == EXIT_OK
        doc = json.loads(text)
        assert doc["auc"] == 0.75
        assert doc["auc_ipw"] == pytest.approx(7 / 9)

    def test_evaluate_single_class(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("y,score\n1,0.9\n1,0.4\n")
        assert run("evaluate", "--scores", str(path), "--B", "0")[0] == EXIT_USAGE

    def test_curve(self, tmp_path):
        cfg = {
            "cohort": {"N": 4000, "p": 30, "prevalence": 0.1},
            "designs": [{"kind": "SRS"}, {"kind": "SGS", "ratio": 0.5, "surrogate": "z1"}],
            "sizes": [250],
            "replicates": 2,
            "model": {"folds": 5, "n_lambda": 10},
            "validation": {"size": 1000},
        }
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "curves.csv"
        code, _ = run("curve", "--config", str(path), "--out", str(out), "--seed", "5")
        assert code == EXIT_OK
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "design,surrogate,n,mean_auc,se,replicates,failures"
        assert len(lines) == 3
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["master_seed"] == 5


@pytest.mark.skipif(shutil.which("sgs") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["sgs", "oratio", "--sens", "0.4", "--spec", "0.95", "--prev", "0.1",
                           "--ratio", "0.5"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["o_ratio"] == pytest.approx(3.2964, abs=1e-4)


def test_module_entry():
    proc = subprocess.run([sys.executable, "-m", "sgsdesign.cli", "plan", "--budget", "9000",
                           "--ratio", "0.75", "--sens", "0.4", "--spec", "0.95",
                           "--prev", "0.1", "--cohort-size", "100000"],
                          capture_output=True, text=True)
    # n=9000 is still feasible: the Z=1 stratum holds 8500 >= 6750 units
    assert proc.returncode == 0
    assert np.isclose(json.loads(proc.stdout)["pi_z1"], 6750 / 8500)
