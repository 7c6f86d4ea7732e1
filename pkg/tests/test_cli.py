"""End-to-end command runs: exit codes, schemas, manifests, determinism."""

import json

import numpy as np
import pytest

from fkdyn.cli import _SCHEMAS, main
from fkdyn.dynamics import checkpoint_size, unpack_checkpoint

SAMPLE_INI = """\
[experiment]
kind = sample
schema_version = 1
seed = 7

[geometry]
d = 1
n = 4
kind = box

[sample]
p = 0.5
q = 1.5
replicas = 3
horizon = 2.0
"""

MIX_INI = """\
[experiment]
kind = mix
schema_version = 1
seed = 11

[geometry]
d = 2
n = 6
kind = torus

[mix]
p = 0.3
q = 2.0
replicas = 4
horizon_cap = 50.0
"""

DIFF_INI = """\
[experiment]
kind = oracle-diff
schema_version = 1
seed = 3

[oracle_diff]
instances = 1 4 box 0.5 2.0
samples_per_state = 400
tv_replicas = 800
fault = {fault}
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _header(path):
    return path.read_text().splitlines()[0].split(",")


def _columns(name):
    return [c for c, _, _ in _SCHEMAS[name]]


class TestSampleCommand:
    def test_run_emits_schema_conformant_outputs(self, tmp_path, capsys):
        config = _write(tmp_path, "run.ini", SAMPLE_INI)
        out = tmp_path / "out"
        assert main(["sample", "--config", config, "--out", str(out)]) == 0
        assert _header(out / "samples.csv") == _columns("samples.csv")
        rows = (out / "samples.csv").read_text().splitlines()[1:]
        assert len(rows) == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "sample"
        assert manifest["schema_version"] == 1
        assert manifest["seed"] == 7
        assert manifest["summary"]["exit_code"] == 0
        assert manifest["config"]["experiment"]["seed"] == 7
        assert manifest["config"]["sample"]["p"] == "0.5"
        for name in ("samples.csv", "samples.bin", "SCHEMA.md", "manifest.json"):
            assert name in manifest["outputs"]
            assert (out / name).exists()
        assert "sample: 3 replicas" in capsys.readouterr().out

    def test_binary_records_match_csv_rows(self, tmp_path):
        config = _write(tmp_path, "run.ini", SAMPLE_INI)
        out = tmp_path / "out"
        main(["sample", "--config", config, "--out", str(out)])
        blob = (out / "samples.bin").read_bytes()
        lines = (out / "samples.csv").read_text().splitlines()[1:]
        size = checkpoint_size(3)  # 1d n=4 box has 3 edges
        assert len(blob) == 3 * size
        for i, line in enumerate(lines):
            cells = dict(zip(_columns("samples.csv"), line.split(",")))
            chain, seed = unpack_checkpoint(blob[i * size:(i + 1) * size])
            assert seed == 7
            assert int(cells["events"]) == chain.events
            assert int(cells["open_count"]) == int(chain.open_mask.sum())

    def test_potts_output(self, tmp_path):
        ini = SAMPLE_INI.replace("q = 1.5", "q = 2.0") + "potts = true\n"
        config = _write(tmp_path, "run.ini", ini)
        out = tmp_path / "out"
        assert main(["sample", "--config", config, "--out", str(out)]) == 0
        assert _header(out / "potts.csv") == _columns("potts.csv")
        body = [line.split(",") for line in
                (out / "potts.csv").read_text().splitlines()[1:]]
        assert len(body) == 3 * 4  # replicas x vertices
        assert all(int(cells[2]) in (0, 1) for cells in body)

    def test_potts_needs_integer_q(self, tmp_path, capsys):
        ini = SAMPLE_INI + "potts = true\n"
        config = _write(tmp_path, "run.ini", ini)
        rc = main(["sample", "--config", config, "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "integer q" in capsys.readouterr().err


class TestExitCodes:
    def test_usage_errors_exit_1(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 1
        with pytest.raises(SystemExit) as err:
            main(["sample"])  # --config is required
        assert err.value.code == 1
        with pytest.raises(SystemExit) as err:
            main(["sample", "--config", "x.ini", "--threads", "0"])
        assert err.value.code == 1

    def test_config_problems_exit_1(self, tmp_path, capsys):
        missing = str(tmp_path / "absent.ini")
        assert main(["sample", "--config", missing]) == 1

        no_experiment = _write(tmp_path, "a.ini", "[sample]\np = 0.5\n")
        assert main(["sample", "--config", no_experiment]) == 1
        assert "missing [experiment]" in capsys.readouterr().err

        wrong_version = _write(tmp_path, "b.ini",
                               SAMPLE_INI.replace("schema_version = 1",
                                                  "schema_version = 99"))
        assert main(["sample", "--config", wrong_version]) == 1
        assert "schema_version 99" in capsys.readouterr().err

        assert main(["mix", "--config", _write(tmp_path, "c.ini", SAMPLE_INI)]) == 1
        assert "config is for 'sample'" in capsys.readouterr().err

    def test_estimator_contract_violation_exits_2(self, tmp_path, capsys):
        ini = """\
[experiment]
kind = spatial
schema_version = 1
seed = 1

[geometry]
d = 2
n = 8

[spatial]
p = 0.4
q = 2.0
replicas = 4
estimators = wsm
wsm_r_grid = 3
"""
        config = _write(tmp_path, "s.ini", ini)
        assert main(["spatial", "--config", config,
                     "--out", str(tmp_path / "o")]) == 2
        assert "runtime error" in capsys.readouterr().err


class TestDeterminism:
    def test_byte_identical_outputs_across_thread_counts(self, tmp_path):
        config = _write(tmp_path, "mix.ini", MIX_INI)
        bodies = {}
        hashes = {}
        for threads in (1, 4, 8):
            out = tmp_path / f"t{threads}"
            assert main(["mix", "--config", config, "--threads", str(threads),
                         "--out", str(out)]) == 0
            bodies[threads] = ((out / "mix.csv").read_bytes(),
                               (out / "disagreement.csv").read_bytes())
            manifest = json.loads((out / "manifest.json").read_text())
            hashes[threads] = manifest["config_hash"]
            assert manifest["threads"] == threads
        assert bodies[1] == bodies[4] == bodies[8]
        assert hashes[1] == hashes[4] == hashes[8]

    def test_seed_override_feeds_the_hash_and_rows(self, tmp_path):
        config = _write(tmp_path, "run.ini", SAMPLE_INI)
        outs = {}
        for seed in (7, 8):
            out = tmp_path / f"s{seed}"
            assert main(["sample", "--config", config, "--seed", str(seed),
                         "--out", str(out)]) == 0
            outs[seed] = out
        m7 = json.loads((outs[7] / "manifest.json").read_text())
        m8 = json.loads((outs[8] / "manifest.json").read_text())
        assert m7["config_hash"] != m8["config_hash"]
        assert m8["seed"] == 8 and m8["config"]["experiment"]["seed"] == 8
        first = (outs[7] / "samples.csv").read_text().splitlines()[1]
        cells = dict(zip(_columns("samples.csv"), first.split(",")))
        assert cells["seed"] == "7"
        assert cells["config_hash"] == m7["config_hash"]
        # Same invocation repeated is byte-identical.
        again = tmp_path / "s7b"
        main(["sample", "--config", config, "--seed", "7", "--out", str(again)])
        assert (again / "samples.csv").read_bytes() == \
            (outs[7] / "samples.csv").read_bytes()

    def test_output_section_excluded_from_hash(self, tmp_path):
        with_out = SAMPLE_INI + "\n[output]\ndir = elsewhere\n"
        c1 = _write(tmp_path, "a.ini", SAMPLE_INI)
        c2 = _write(tmp_path, "b.ini", with_out)
        o1, o2 = tmp_path / "o1", tmp_path / "custom"
        assert main(["sample", "--config", c1, "--out", str(o1)]) == 0
        assert main(["sample", "--config", c2, "--out", str(o2)]) == 0
        h1 = json.loads((o1 / "manifest.json").read_text())["config_hash"]
        h2 = json.loads((o2 / "manifest.json").read_text())["config_hash"]
        assert h1 == h2

    def test_output_dir_from_config_section(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        ini = SAMPLE_INI + "\n[output]\ndir = nested/results\n"
        config = _write(tmp_path, "run.ini", ini)
        assert main(["sample", "--config", config]) == 0
        assert (tmp_path / "nested" / "results" / "samples.csv").exists()


class TestJsonConfig:
    def test_json_encoding_of_the_same_run(self, tmp_path):
        body = {
            "experiment": {"kind": "sample", "schema_version": 1, "seed": 7},
            "geometry": {"d": 1, "n": 4, "kind": "box"},
            "sample": {"p": 0.5, "q": 1.5, "replicas": 3, "horizon": 2.0},
        }
        config = _write(tmp_path, "run.json", json.dumps(body))
        out = tmp_path / "out"
        assert main(["sample", "--config", config, "--out", str(out)]) == 0
        assert len((out / "samples.csv").read_text().splitlines()) == 4


class TestOracleDiff:
    def test_clean_battery_passes(self, tmp_path, capsys):
        config = _write(tmp_path, "d.ini", DIFF_INI.format(fault="none"))
        out = tmp_path / "out"
        assert main(["oracle-diff", "--config", config, "--out", str(out)]) == 0
        assert _header(out / "diff.csv") == _columns("diff.csv")
        report = json.loads((out / "diff_report.json").read_text())
        assert report["all_pass"] is True and report["failures"] == []
        assert report["fault"] == "none"
        assert "all" in capsys.readouterr().out

    def test_injected_fault_is_flagged(self, tmp_path, capsys):
        config = _write(tmp_path, "d.ini",
                        DIFF_INI.format(fault="wrong_bridge_constant"))
        out = tmp_path / "out"
        rc = main(["oracle-diff", "--config", config, "--out", str(out)])
        assert rc == 3
        report = json.loads((out / "diff_report.json").read_text())
        assert report["all_pass"] is False
        failing = {f["check"] for f in report["failures"]}
        assert "kernel_construction" in failing
        assert "FAILED" in capsys.readouterr().out


class TestSchemaDocument:
    def test_schema_md_documents_every_table(self, tmp_path):
        config = _write(tmp_path, "run.ini", SAMPLE_INI)
        out = tmp_path / "out"
        main(["sample", "--config", config, "--out", str(out)])
        text = (out / "SCHEMA.md").read_text()
        for name in _SCHEMAS:
            assert f"## {name}" in text
        assert "## manifest.json" in text
        assert "samples.bin" in text
