import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from aeptools.cli import COLUMNS, ExperimentConfig, main, parse_distribution, run, validate
from aeptools.entropy import Distribution, save_distribution
from aeptools.typicality import estimate_typicality_probability, top_set_mass

PIN = "2000-01-01T00:00:00+00:00"


@pytest.fixture
def dist_files(tmp_path):
    paths = {}
    for name, probs in {"fair": [0.5, 0.5], "p25": [0.25, 0.75], "p11": [0.11, 0.89]}.items():
        paths[name] = str(tmp_path / f"{name}.json")
        save_distribution(Distribution(probs, values=[0.0, 1.0]), paths[name])
    return paths


def cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# manifest: ")
    manifest = json.loads(lines[0][len("# manifest: "):])
    return manifest, list(csv.DictReader(lines[1:]))


class TestValidate:
    def test_negative_epsilon(self):
        v = validate(ExperimentConfig("property1", dist="0.5,0.5", epsilon=-0.1))
        assert [(x.field, x.constraint) for x in v] == [("epsilon", "epsilon >= 0")]

    def test_q_zero(self):
        v = validate(ExperimentConfig("property4", dist="0.5,0.5", q=[0.0]))
        assert [(x.field, x.constraint) for x in v] == [("q", "q > 0")]

    def test_brute_force_capacity(self):
        v = validate(ExperimentConfig("property2", dist="0.5,0.5", n=[30], brute_force=True))
        assert len(v) == 1 and v[0].category == "capacity" and v[0].actual == "2^30"

    def test_never_raises(self):
        v = validate(ExperimentConfig("nope"))
        assert v[0].field == "experiment"
        v = validate(ExperimentConfig("property1", dist="not,a,number"))
        assert v and v[0].field == "dist"

    def test_clean(self, dist_files):
        assert validate(ExperimentConfig("property3", dist=dist_files["p11"], n=[1000], rates=[0.4])) == []


class TestExitCodes:
    def test_config(self, capsys):
        code, _, err = cli(["property1", "--dist", "0.5,0.5", "--epsilon", "-0.1"], capsys)
        assert code == 2
        assert json.loads(err)["error"] == "config"

    def test_argparse_errors_are_config(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["property1", "--n", "abc"])
        assert info.value.code == 2

    def test_capacity(self, capsys):
        code, _, err = cli(["property2", "--dist", "0.5,0.5", "--n", "30", "--brute-force"], capsys)
        assert code == 3 and json.loads(err)["error"] == "capacity"

    def test_rate_infeasible(self, tmp_path, dist_files, capsys):
        src = tmp_path / "in.txt"
        src.write_text("0 1 1 1 " * 50)
        code, _, err = cli(
            ["compress", "--dist", dist_files["p11"], "--n", "100", "--rate", "0.3", "--epsilon", "0.05",
             "--input", str(src), "--out", str(tmp_path / "x.bin")],
            capsys,
        )
        assert code == 4
        assert json.loads(err)["min_rate"] > 0.3

    def test_io(self, tmp_path, capsys):
        code, _, err = cli(["entropy", "--dist", str(tmp_path / "missing.json")], capsys)
        assert code == 5 and json.loads(err)["error"] == "io"
        code, _, _ = cli(["decompress", "--dist", "0.5,0.5", "--input", str(tmp_path / "none.bin"),
                          "--out", str(tmp_path / "o.txt")], capsys)
        assert code == 5


class TestOutputs:
    def test_entropy(self, dist_files, capsys):
        code, out, _ = cli(["entropy", "--dist", dist_files["fair"], "--pin-timestamp", PIN], capsys)
        assert code == 0
        manifest, rows = parse_csv(out)
        assert manifest["timestamp"] == PIN and manifest["provenance"]["method"] == "exact"
        assert rows[0]["value"] == "1.0" and rows[0]["units"] == "bits"
        assert float(rows[2]["value"]) == 0.5 and rows[2]["q"] == "2.0"

    def test_property1_equals_library(self, dist_files, capsys):
        code, out, _ = cli(["property1", "--dist", dist_files["p25"], "--n", "400", "--epsilon", "0.05",
                            "--trials", "3000", "--seed", "7"], capsys)
        assert code == 0
        manifest, rows = parse_csv(out)
        e = estimate_typicality_probability(Distribution([0.25, 0.75]), 400, 0.05, 3000, 7)
        assert int(rows[0]["successes"]) == e.successes
        assert float(rows[0]["ci_low"]) == e.ci_low
        assert manifest["provenance"] == {"method": "monte-carlo", "seed": 7, "trials": 3000}
        assert list(rows[0]) == COLUMNS["property1"]

    def test_property3_json(self, dist_files, capsys):
        code, out, _ = cli(["property3", "--dist", dist_files["p11"], "--n", "1000", "--rate", "0.4",
                            "--format", "json"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["columns"] == COLUMNS["property3"]
        assert doc["rows"][0]["top_set_mass"] == top_set_mass(Distribution([0.11, 0.89]), 1000, 0.4)

    @pytest.mark.parametrize(
        "argv",
        [
            ["property1", "--n", "50,200", "--trials", "2500", "--seed", "3"],
            ["property4", "--n", "100", "--q", "0.5,2", "--trials", "2500", "--seed", "3"],
            ["rate-sweep", "--n", "100", "--rates", "0.3,0.9", "--trials", "2500", "--seed", "3"],
            ["clt", "--n", "25,100", "--trials", "3000", "--seed", "3"],
        ],
    )
    def test_byte_identical_across_threads(self, argv, dist_files, capsys):
        base = argv + ["--dist", dist_files["p25"], "--pin-timestamp", PIN]
        _, one, _ = cli(base + ["--threads", "1"], capsys)
        _, four, _ = cli(base + ["--threads", "4"], capsys)
        _, again, _ = cli(base + ["--threads", "1"], capsys)
        assert one == four == again and one

    def test_property2_and_q_census(self, dist_files, capsys):
        code, out, _ = cli(["property2", "--dist", dist_files["p25"], "--n", "14", "--epsilon", "0.1"], capsys)
        assert code == 0
        _, rows = parse_csv(out)
        assert rows[0]["within_bounds"] == "True"
        code, out, _ = cli(["q-census", "--dist", dist_files["fair"], "--n", "10", "--q", "2"], capsys)
        _, rows = parse_csv(out)
        assert rows[0]["count"] == "1024" and rows[0]["exploratory"] == "True"

    def test_clt_cf_table(self, dist_files, capsys):
        code, out, _ = cli(["clt", "--dist", dist_files["fair"], "--table", "cf", "--grid", "0,3.141592653589793"], capsys)
        assert code == 0
        _, rows = parse_csv(out)
        assert rows[0] == {"a": "0.0", "re": "1.0", "im": "0.0"}

    def test_output_dir_env(self, tmp_path, dist_files, capsys, monkeypatch):
        monkeypatch.setenv("AEPTOOLS_OUTPUT_DIR", str(tmp_path))
        code, out, _ = cli(["entropy", "--dist", dist_files["fair"], "--format", "json"], capsys)
        assert code == 0 and out == ""
        doc = json.loads((tmp_path / "entropy.json").read_text())
        assert doc["rows"][0]["value"] == 1.0

    def test_inline_distribution(self):
        assert parse_distribution("0.25,0.75").probs.tolist() == [0.25, 0.75]
        assert parse_distribution('{"probs": [0.5, 0.5]}', values=[1, 2]).values.tolist() == [1.0, 2.0]


class TestCompressRoundTrip:
    def test_round_trip(self, tmp_path, dist_files, capsys):
        rng = np.random.default_rng(5)
        letters = rng.choice(2, size=1003, p=[0.25, 0.75])
        src = tmp_path / "letters.txt"
        src.write_text(" ".join(map(str, letters)))
        packed, back = tmp_path / "c.bin", tmp_path / "d.txt"
        code, out, _ = cli(["compress", "--dist", dist_files["p25"], "--n", "100", "--rate", "0.95",
                            "--epsilon", "0.12", "--input", str(src), "--out", str(packed)], capsys)
        assert code == 0
        _, stats = parse_csv(out)
        assert stats[0]["blocks"] == "11" and stats[0]["width"] == "96"
        code, out, _ = cli(["decompress", "--dist", dist_files["p25"], "--input", str(packed), "--out", str(back)], capsys)
        assert code == 0
        lines = back.read_text().splitlines()
        assert len(lines) == 11
        for i, line in enumerate(lines):
            if line != "FAIL":
                assert list(map(int, line.split())) == letters[i * 100:(i + 1) * 100].tolist()
        assert sum(line == "FAIL" for line in lines) == int(stats[0]["failures"])
        assert lines[-1] == "FAIL" or len(lines[-1].split()) == 3

    def test_wrong_distribution(self, tmp_path, dist_files, capsys):
        src = tmp_path / "letters.txt"
        src.write_text("1" * 200)
        packed = tmp_path / "c.bin"
        assert cli(["compress", "--dist", dist_files["fair"], "--n", "100", "--rate", "1.0", "--epsilon", "0",
                    "--input", str(src), "--out", str(packed)], capsys)[0] == 0
        code, _, err = cli(["decompress", "--dist", dist_files["p25"], "--input", str(packed),
                            "--out", str(tmp_path / "o.txt")], capsys)
        assert code == 2 and "hash" in json.loads(err)["message"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "aeptools", "entropy", "--dist", "0.5,0.5"], capture_output=True, text=True)
    assert res.returncode == 0 and "shannon" in res.stdout
