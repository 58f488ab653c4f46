import json
import subprocess
import sys

import numpy as np
import pytest

from linfbm import cli
from linfbm.grid import SamplePath
from linfbm.verify import config_hash


@pytest.fixture
def run(tmp_path, capsys):
    """Call the CLI with ``--output-dir`` pointing at a fresh directory."""
    counter = iter(range(1000))

    def _run(*argv, out=None):
        out = out or tmp_path / f"run{next(counter)}"
        code = cli.main([*argv, "--output-dir", str(out)])
        captured = capsys.readouterr()
        return code, out, captured

    return _run


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


class TestGenerate:
    def test_writes_paths_and_manifest(self, run):
        code, out, _ = run("generate", "--h", "0.75", "--n", "64", "--paths", "10", "--seed", "42")
        assert code == cli.EXIT_OK
        files = sorted(p.name for p in out.glob("path_*.csv"))
        assert len(files) == 10
        man = manifest(out)
        assert man["files"] == files
        assert len(man["seeds"]) == 10 and man["method"] == "circulant"
        assert man["config"]["h"] == 0.75

    def test_csv_embeds_hash_and_round_trips(self, run):
        _, out, _ = run("generate", "--h", "0.75", "--n", "16")
        text = (out / "path_0000.csv").read_text()
        h = manifest(out)["config_hash"]
        assert text.splitlines()[0] == f"# config_hash={h}"
        p = SamplePath.from_csv(text)
        assert len(p.grid) == 17 and p.values[0] == 0.0

    def test_json_format(self, run):
        _, out, _ = run("generate", "--h", "0.6", "--n", "8", "--format", "json")
        d = json.loads((out / "path_0000.json").read_text())
        assert d["config_hash"] == manifest(out)["config_hash"]
        assert len(d["values"]) == 9

    def test_hash_matches_config(self, run):
        _, out, _ = run("generate", "--h", "0.75", "--n", "16")
        man = manifest(out)
        assert man["config_hash"] == config_hash(man["config"])
        assert "output_dir" not in man["config"]

    def test_seed_changes_output(self, run):
        _, a, _ = run("generate", "--h", "0.75", "--n", "16", "--seed", "1")
        _, b, _ = run("generate", "--h", "0.75", "--n", "16", "--seed", "2")
        assert (a / "path_0000.csv").read_text() != (b / "path_0000.csv").read_text()

    def test_geometric_grid(self, run):
        code, out, _ = run("generate", "--h", "0.75", "--n", "32", "--grid", "geometric",
                           "--epsilon", "0.01")
        assert code == 0
        assert manifest(out)["grid"]["kind"] == "geometric"

    @pytest.mark.parametrize("h", ["0.4", "1.0", "0.5", "abc"])
    def test_bad_hurst(self, run, h):
        code, _, cap = run("generate", "--h", h, "--n", "8")
        assert code == cli.EXIT_VALIDATION
        if h != "abc":
            assert "(1/2, 1)" in cap.err

    def test_bad_path_count(self, run):
        assert run("generate", "--h", "0.75", "--paths", "0")[0] == cli.EXIT_VALIDATION


class TestSolve:
    def test_x0(self, run):
        res = []
        for n in ("256", "1024"):
            code, out, _ = run("solve", "--measure", "power_law:-1", "--kind", "x0", "--n", n)
            assert code == 0
            rep = json.loads((out / "report.json").read_text())
            res.append(rep["residual"]["residual"])
        assert res[1] < res[0]
        assert rep["classification"]["uniqueness"] == "unique"
        assert rep["residual"]["epsilon"] == 2.0**-20
        assert (out / "solution.csv").exists() and (out / "driver.csv").exists()

    def test_family_member(self, run):
        code, out, _ = run("solve", "--measure", "power_law:1", "--kind", "family", "--c", "2.5",
                           "--n", "256")
        assert code == 0
        assert json.loads((out / "report.json").read_text())["kind"].startswith("family")

    def test_x0_outside_adapted_range_warns(self, run):
        with pytest.warns(UserWarning, match="2/\\(1\\+H\\)"):
            code, out, _ = run("solve", "--measure", "power_law:1", "--kind", "x0", "--n", "256")
        assert code == 0
        assert manifest(out)["warnings"]

    def test_family_refused_when_unique(self, run):
        code, _, cap = run("solve", "--measure", "power_law:-1", "--kind", "family")
        assert code == cli.EXIT_REFUSAL
        assert "uniqueness" in cap.err  # the classification evidence is printed

    def test_stability_failure(self, run):
        code, _, cap = run("solve", "--measure", "power_law:2", "--kind", "direct", "--n", "4",
                           "--epsilon", "1e-6")
        assert code == cli.EXIT_NUMERICAL
        assert "numerical failure" in cap.err

    @pytest.mark.parametrize("measure", ["nope:1", "power_law:x"])
    def test_bad_measure(self, run, measure):
        assert run("solve", "--measure", measure, "--kind", "x0")[0] == cli.EXIT_VALIDATION

    def test_measure_file(self, run, tmp_path):
        spec = tmp_path / "m.json"
        spec.write_text(json.dumps({"family": "power_law", "lambda": -1}))
        assert run("solve", "--measure", str(spec), "--kind", "x0", "--n", "128")[0] == 0


class TestClassify:
    @pytest.mark.parametrize("lam,unique,adapted", [(-1, True, True), (2, False, False), (0, True, True)])
    def test_verdicts(self, run, lam, unique, adapted):
        code, out, cap = run("classify", "--measure", f"power_law:{lam}", "--h", "0.75")
        assert code == 0
        verdict = json.loads((out / "classification.json").read_text())["verdict"]
        assert (verdict["uniqueness"] == "unique") == unique
        assert verdict["adapted_family_exists"] == adapted
        assert json.loads(cap.out)["verdict"] == verdict


class TestVerify:
    def test_single_test_passes(self, run):
        code, out, _ = run("verify", "--test", "fbm_law", "--h", "0.75", "--paths", "2000")
        assert code == cli.EXIT_OK
        rows = (out / "statistics.csv").read_text().splitlines()
        assert rows[0].startswith("# config_hash=")
        assert rows[1] == "test,statistic,estimate,target,stderr,z_score,passed"
        assert json.loads((out / "report.json").read_text())["passed"] is True

    def test_corrupted_hurst_fails(self, run):
        code, _, _ = run("verify", "--test", "fbm_law", "--h", "0.6", "--test-h", "0.9",
                         "--paths", "20000", "--pairs", "0.25:0.25,0.25:0.5")
        assert code == cli.EXIT_TEST_FAILED

    def test_suite_file(self, run, tmp_path):
        suite = tmp_path / "suite.json"
        suite.write_text(json.dumps({"base_seed": 3, "tests": [
            {"name": "moment_bound", "h": 0.75, "n_paths": 1000}]}))
        code, out, _ = run("verify", "--suite", str(suite))
        assert code == 0
        assert json.loads((out / "report.json").read_text())["config"]["base_seed"] == 3

    def test_pairs_need_single_test(self, run):
        assert run("verify", "--pairs", "0.25:1")[0] == cli.EXIT_VALIDATION

    def test_unreadable_suite(self, run, tmp_path):
        assert run("verify", "--suite", str(tmp_path / "missing.json"))[0] == cli.EXIT_VALIDATION


class TestInversionCommands:
    def test_invert(self, run):
        code, out, _ = run("invert", "--n", "128", "--t-max", "4096")
        assert code == 0
        man = manifest(out)
        assert man["involution_exact"] is True
        assert man["tail_stderr"] == pytest.approx(4096**-0.75)
        assert {"source.csv", "hat.csv", "drift_corrected.csv", "beta.csv"} <= set(man["files"])

    def test_invert_bad_delta(self, run):
        assert run("invert", "--delta", "0")[0] == cli.EXIT_VALIDATION

    def test_bessel_zero_driver(self, run):
        code, out, _ = run("bessel", "--rho", "1", "--k", "1", "--zero-driver", "--n", "1024")
        assert code == 0
        man = manifest(out)
        assert man["ode_sup_error"] < 2e-4
        assert man["positive"] is True

    def test_bessel_positive(self, run):
        code, out, _ = run("bessel", "--rho", "0", "--n", "512")
        assert code == 0 and manifest(out)["positive"] is True

    def test_bessel_bad_k(self, run):
        assert run("bessel", "--k", "0")[0] == cli.EXIT_VALIDATION

    def test_reflect(self, run):
        code, out, _ = run("reflect", "--n", "512", "--seed", "3")
        assert code == 0
        man = manifest(out)
        assert man["z_min"] >= 0.0 and man["lambda_nondecreasing"] is True
        assert 0.0 <= man["relative_defect"] < 0.05
        z = SamplePath.from_csv((out / "z.csv").read_text())
        assert np.all(z.values >= 0.0)


class TestConfigAndEnvironment:
    def test_config_overrides_flags(self, run, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"paths": 3, "n": 8}))
        code, out, _ = run("generate", "--h", "0.75", "--config", str(cfg))
        assert code == 0
        assert len(list(out.glob("path_*.csv"))) == 3
        assert manifest(out)["config"]["n"] == 8

    def test_config_validates_hurst(self, run, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"h": 0.3}))
        assert run("generate", "--h", "0.75", "--config", str(cfg))[0] == cli.EXIT_VALIDATION

    def test_config_unknown_key(self, run, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run("generate", "--h", "0.75", "--config", str(cfg))[0] == cli.EXIT_VALIDATION

    def test_env_output_dir(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env_out"))
        assert cli.main(["generate", "--h", "0.75", "--n", "8"]) == 0
        assert (tmp_path / "env_out" / "manifest.json").exists()

    def test_missing_subcommand(self, capsys):
        assert cli.main([]) == cli.EXIT_VALIDATION

    def test_help(self, capsys):
        assert cli.main(["--help"]) == 0
        assert "exit codes" in capsys.readouterr().out

    def test_rerun_byte_identical(self, run):
        argv = ("solve", "--measure", "power_law:-1", "--kind", "x0", "--n", "128", "--seed", "9")
        _, a, _ = run(*argv)
        _, b, _ = run(*argv)
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()

    def test_console_script(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "linfbm", "generate", "--h", "0.4"],
                             capture_output=True, text=True, cwd=tmp_path)
        assert out.returncode == 2
        assert "(1/2, 1)" in out.stderr
