"""End-to-end command line runs: exit codes, files, determinism."""

import json

import numpy as np
import pytest

from crlab.cli import run


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_state(path, coeffs, family="hol"):
    doc = {"family": family, "time": 0.0,
           "coeffs": [[float(np.real(c)), float(np.imag(c))] for c in coeffs]}
    path.write_text(json.dumps(doc))


def test_version_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        run(["--version"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    assert "crlab" in out and "tensor-cache format" in out


def test_unknown_subcommand_exits_three():
    with pytest.raises(SystemExit) as info:
        run(["bogus"])
    assert info.value.code == 3


def test_tensor_writes_cache_and_sidecars(workdir, capsys):
    assert run(["tensor", "--family", "hol", "--n", "5", "--out", "t5.bin"]) == 0
    assert (workdir / "t5.bin").exists()
    resolved = json.loads((workdir / "t5.bin.config.json").read_text())
    assert resolved == {"subcommand": "tensor", "family": "hol", "cutoff": 5,
                        "out": "t5.bin"}
    meta = json.loads((workdir / "t5.bin.meta.json").read_text())
    assert "written_at" in meta and "kernel_backend" in meta
    assert "t5.bin" in capsys.readouterr().out


def test_evolve_zero_time_is_identity(workdir):
    rng = np.random.default_rng(1)
    coeffs = (rng.standard_normal(7) + 1j * rng.standard_normal(7)) / 3.0
    write_state(workdir / "init.json", coeffs)
    code = run(["evolve", "--init", "init.json", "--t", "0",
                "--out", "traj.csv", "--state-out", "final.json"])
    assert code == 0
    final = json.loads((workdir / "final.json").read_text())
    assert final["coeffs"] == json.loads((workdir / "init.json").read_text())["coeffs"]
    header = (workdir / "traj.csv").read_bytes().splitlines()[0]
    assert header == b"t,n,Re c_n,Im c_n"


def test_evolve_outputs_are_byte_identical(workdir):
    rng = np.random.default_rng(2)
    coeffs = (rng.standard_normal(6) + 1j * rng.standard_normal(6)) / 3.0
    write_state(workdir / "init.json", coeffs)
    args = ["evolve", "--init", "init.json", "--t", "1.0", "--checkpoints", "4",
            "--conservation-out", "cons.csv"]
    assert run(args + ["--out", "a.csv"]) == 0
    first_cons = (workdir / "cons.csv").read_bytes()
    assert run(args + ["--out", "b.csv"]) == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    assert (workdir / "cons.csv").read_bytes() == first_cons
    assert (workdir / "cons.csv").read_bytes().splitlines()[0] == b"t,mass,energy,hamiltonian"


def test_evolve_missing_init_exits_three(workdir, capsys):
    assert run(["evolve", "--t", "1"]) == 3
    assert "init" in capsys.readouterr().err


def test_evolve_tensor_cutoff_mismatch_exits_three(workdir, capsys):
    assert run(["tensor", "--family", "hol", "--n", "3", "--out", "t3.bin"]) == 0
    write_state(workdir / "init.json", np.zeros(8) + 0.1)
    capsys.readouterr()
    assert run(["evolve", "--init", "init.json", "--tensor", "t3.bin", "--t", "1"]) == 3
    assert "tensor" in capsys.readouterr().err


def test_config_file_with_flag_override(workdir):
    (workdir / "cfg.json").write_text(json.dumps(
        {"family": "hol", "cutoff": 4, "out": "from_cfg.bin"}))
    assert run(["tensor", "--config", "cfg.json", "--out", "from_flag.bin"]) == 0
    assert (workdir / "from_flag.bin").exists()
    assert not (workdir / "from_cfg.bin").exists()
    resolved = json.loads((workdir / "from_flag.bin.config.json").read_text())
    assert resolved["cutoff"] == 4
    assert resolved["out"] == "from_flag.bin"


def test_unknown_config_key_exits_three(workdir, capsys):
    (workdir / "cfg.json").write_text(json.dumps({"family": "hol", "niter": 3}))
    assert run(["tensor", "--config", "cfg.json"]) == 3
    assert "niter" in capsys.readouterr().err


def test_sample_ndjson_lines_and_indices(workdir):
    args = ["sample", "--kind", "gaussian-free", "--n", "5", "--count", "4",
            "--seed", "9", "--out", "s.ndjson"]
    assert run(args) == 0
    lines = (workdir / "s.ndjson").read_text().splitlines()
    assert len(lines) == 4
    docs = [json.loads(line) for line in lines]
    assert [d["index"] for d in docs] == [0, 1, 2, 3]
    assert all(len(d["coeffs"]) == 6 for d in docs)

    assert run(["sample", "--kind", "gaussian-free", "--n", "5", "--count", "2",
                "--seed", "9", "--start-index", "2", "--out", "s2.ndjson"]) == 0
    shifted = [json.loads(line) for line in (workdir / "s2.ndjson").read_text().splitlines()]
    assert [d["index"] for d in shifted] == [2, 3]
    assert shifted[0]["coeffs"] == docs[2]["coeffs"]


def test_sample_gibbs_stall_exits_two(workdir, capsys):
    code = run(["sample", "--kind", "gibbs", "--beta", "1e12", "--n", "3",
                "--count", "1", "--out", "never.ndjson"])
    assert code == 2
    assert "metropolis" in capsys.readouterr().err


def test_invariance_report_pass_and_reproducible(workdir, capsys):
    args = ["invariance", "--measure", "eigenspace", "--n", "3", "--t", "0.5",
            "--samples", "120", "--seed", "4"]
    assert run(args + ["--report", "r1.json"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert run(args + ["--report", "r2.json"]) == 0
    assert (workdir / "r1.json").read_bytes() == (workdir / "r2.json").read_bytes()
    report = json.loads((workdir / "r1.json").read_text())
    assert report["verdict"] == "PASS"
    assert report["spec"]["kind"] == "eigenspace"
    assert len(report["table_initial"]) == 120


def test_invariance_projector_mismatch_exits_three(workdir, capsys):
    code = run(["invariance", "--measure", "white-noise", "--projector", "smooth",
                "--n", "4", "--t", "0.5", "--samples", "10"])
    assert code == 3
    assert capsys.readouterr().err


def test_oracle_check_passes(workdir, capsys):
    assert run(["oracle-check", "--family", "hol", "--max-index", "5",
                "--out", "oracle.json"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "spread" in out
    doc = json.loads((workdir / "oracle.json").read_text())
    assert doc["relative_spread"] < 1e-6


def test_cauchy_single_mask_fails(workdir):
    # one mask equal to the cutoff: zero decay signal, verdict FAIL
    assert run(["cauchy", "--sigma", "1.5", "--n", "6", "--m-values", "6",
                "--samples", "20", "--out", "c.json"]) == 2


def test_cauchy_small_run_passes(workdir):
    assert run(["cauchy", "--sigma", "1.5", "--n", "12", "--m-values", "2,4,8",
                "--samples", "120", "--seed", "1", "--out", "c.json"]) == 0
    doc = json.loads((workdir / "c.json").read_text())
    assert doc["slope"] < 0


def test_recurrence_runs(workdir):
    assert run(["recurrence", "--level", "0", "--t-max", "30", "--dt", "0.5",
                "--samples", "3", "--theta", "0.5", "--out", "rec.json"]) == 0
    doc = json.loads((workdir / "rec.json").read_text())
    assert doc["fraction_recurred"] == 1.0


def test_concentration_runs(workdir):
    assert run(["concentration", "--levels", "3,4", "--samples", "15",
                "--out", "conc.json"]) == 0
    doc = json.loads((workdir / "conc.json").read_text())
    assert set(doc["per_level"]) == {"3", "4"}


def test_norms_runs(workdir):
    assert run(["norms", "--family", "hol", "--p", "inf",
                "--n-values", "16,32,64", "--out", "n.json"]) == 0
    doc = json.loads((workdir / "n.json").read_text())
    assert doc["exponent"] == pytest.approx(-0.25, abs=0.05)


def test_tails_runs(workdir):
    assert run(["tails", "--kind", "white-noise", "--n", "4", "--functional", "L2",
                "--samples", "500", "--seed", "3", "--out", "t.json"]) == 0
    doc = json.loads((workdir / "t.json").read_text())
    assert doc["slope"] < 0


def test_threads_do_not_change_output(workdir):
    args = ["sample", "--kind", "white-noise", "--n", "6", "--count", "32",
            "--seed", "5"]
    assert run(args + ["--threads", "1", "--out", "one.ndjson"]) == 0
    assert run(args + ["--threads", "4", "--out", "four.ndjson"]) == 0
    assert (workdir / "one.ndjson").read_bytes() == (workdir / "four.ndjson").read_bytes()
