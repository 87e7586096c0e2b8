import json
import os
import stat
import subprocess
import sys

import pytest

from conftest import tmv_doc
from einfuzz.cli import main, parse_duration
from einfuzz.ir import from_json, validate


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_documents_are_valid_and_reproducible(capsys):
    code, out, _ = run(capsys, "gen", "--count", "3", "--seed", "7")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3
    for line in lines:
        kernel, _ = from_json(line)
        assert validate(kernel).ok
    assert run(capsys, "gen", "--count", "3", "--seed", "7")[1] == out
    assert run(capsys, "gen", "--count", "3", "--seed", "8")[1] != out


def test_gen_to_directory(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--count", "2", "--out", str(tmp_path / "k"))
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "k").iterdir()) == ["kernel-0.json", "kernel-1.json"]
    assert run(capsys, "validate", str(tmp_path / "k" / "kernel-1.json"))[0] == 0


def test_gen_usage_errors(capsys):
    assert run(capsys, "gen", "--count", "0")[0] == 64
    assert run(capsys, "gen", "--bogus")[0] == 64
    assert run(capsys, "gen", "--r-max", "9")[0] == 64
    assert run(capsys)[0] == 64


def test_gen_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(capsys, "gen", "--out", str(blocker / "sub"))[0] == 2


def test_validate_tmv(tmp_path, capsys):
    path = tmp_path / "tmv.json"
    path.write_text(json.dumps(tmv_doc()))
    code, out, _ = run(capsys, "validate", str(path))
    assert code == 0 and json.loads(out) == {"ok": True, "violations": []}


def test_validate_output_index_violation(tmp_path, capsys):
    doc = tmv_doc()
    doc["kernel"]["output"]["indices"] = ["m"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, out, err = run(capsys, "validate", str(path))
    assert code == 1
    assert "output-index" in [v["rule"] for v in json.loads(out)["violations"]]
    assert "output index m not in inputs" in err


def test_validate_malformed(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run(capsys, "validate", str(path))[0] == 2
    assert run(capsys, "validate", str(tmp_path / "missing.json"))[0] == 2


def test_validate_stdin(monkeypatch, capsys):
    import io

    monkeypatch.setattr(sys, "stdin", io.StringIO(json.dumps(tmv_doc())))
    assert run(capsys, "validate", "-")[0] == 0


def test_fuzz_ref_clean(tmp_path, capsys):
    out_dir = tmp_path / "c"
    code, out, err = run(capsys, "fuzz", "--backend", "ref", "--iterations", "100", "--dtype", "int",
                         "--seed", "1", "--out", str(out_dir))
    assert code == 0
    stats = json.loads(out)
    assert stats["pass"] == 100 and stats["crash"] == stats["wrong_code"] == 0
    assert "WC-Bugs" in err
    code, table, _ = run(capsys, "stats", str(out_dir))
    assert code == 0
    assert "C-Bugs               0" in table and "WC-Bugs              0" in table


def test_fuzz_faulty_finds_bugs(tmp_path, capsys):
    out_dir = tmp_path / "c"
    code, out, _ = run(capsys, "fuzz", "--backend", "faulty:stale-output-cursor", "--iterations", "150",
                       "--seed", "1", "--out", str(out_dir))
    assert code == 1
    assert json.loads(out)["wrong_code"] >= 1
    _, table, _ = run(capsys, "stats", str(out_dir))
    wc = [line for line in table.splitlines() if line.startswith("WC-Bugs")][0]
    assert int(wc.split()[-1]) >= 1
    report = sorted((out_dir / "reports").iterdir())[0]
    code, out, err = run(capsys, "replay", str(report), "--backend", "faulty:stale-output-cursor")
    assert code == 1 and json.loads(out)["kind"] == "wrong_code"
    code, out, _ = run(capsys, "replay", str(report), "--backend", "ref")
    assert code == 0 and json.loads(out)["kind"] == "pass"


def test_replay_bad_report(tmp_path, capsys):
    path = tmp_path / "r.json"
    path.write_text('{"version": 1, "kern')
    assert run(capsys, "replay", str(path))[0] == 2


def test_fuzz_usage_errors(capsys):
    assert run(capsys, "fuzz")[0] == 64
    assert run(capsys, "fuzz", "--iterations", "0")[0] == 64
    assert run(capsys, "fuzz", "--iterations", "1", "--duration", "soon")[0] == 64
    assert run(capsys, "fuzz", "--iterations", "1", "--backend", "taco")[0] == 2


def test_fuzz_subprocess_adapter_duration(tmp_path, capsys):
    script = tmp_path / "adapter.sh"
    script.write_text(f"#!/bin/sh\nexec {sys.executable} -m einfuzz.reference_adapter\n")
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    out_dir = tmp_path / "c"
    code, out, _ = run(capsys, "fuzz", "--backend", f"cmd:{script}", "--duration", "2s", "--out", str(out_dir))
    assert code == 0
    stats = json.loads(out)
    assert stats["iterations"] >= 1 and stats["pass"] == stats["iterations"]
    assert (out_dir / "stats.json").exists()


def test_fuzz_spawn_failure(tmp_path, capsys):
    code, _, err = run(capsys, "fuzz", "--backend", "cmd:/nonexistent/adapter", "--iterations", "1",
                       "--out", str(tmp_path / "c"))
    assert code == 2 and "cannot spawn" in err


def test_baseline(capsys):
    code, out, err = run(capsys, "baseline", "--samples", "3000", "--seed", "1")
    assert code == 0
    stats = json.loads(out)
    assert stats["validity_rate"] < 0.15 and stats["n"] == 3000
    assert "validity rate" in err
    code, out, _ = run(capsys, "baseline", "--samples", "500", "--generator", "constraint")
    assert json.loads(out)["validity_rate"] == 1.0
    assert run(capsys, "baseline", "--samples", "0")[0] == 64


def test_stats_missing_dir(tmp_path, capsys):
    assert run(capsys, "stats", str(tmp_path))[0] == 2


def test_emit(tmp_path, capsys):
    path = tmp_path / "tmv.json"
    path.write_text(json.dumps(tmv_doc()))
    code, out, _ = run(capsys, "emit", str(path))
    assert code == 0 and "A(j) = B(i, j) * C(i);" in out
    code, out, _ = run(capsys, "emit", str(path), "--dialect", "finch-julia")
    assert code == 0 and "@einsum A[j] += B[i, j] * C[i]" in out


def test_env_and_config_precedence(tmp_path, capsys, monkeypatch):
    base = run(capsys, "gen", "--seed", "5")[1]
    other = run(capsys, "gen", "--seed", "6")[1]
    monkeypatch.setenv("EINFUZZ_SEED", "5")
    assert run(capsys, "gen")[1] == base
    # flag beats environment
    assert run(capsys, "gen", "--seed", "6")[1] == other
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gen": {"seed": 6, "count": 2}}))
    # environment beats config file, config file beats defaults
    code, out, _ = run(capsys, "--config", str(cfg), "gen")
    assert code == 0 and out.splitlines()[0] == base.strip() and len(out.splitlines()) == 2
    monkeypatch.delenv("EINFUZZ_SEED")
    assert run(capsys, "--config", str(cfg), "gen")[1].splitlines()[0] == other.strip()
    monkeypatch.setenv("EINFUZZ_COUNT", "many")
    assert run(capsys, "gen")[0] == 64


def test_parse_duration():
    assert parse_duration("10s") == 10
    assert parse_duration("500ms") == 0.5
    assert parse_duration("2m") == 120
    assert parse_duration("1.5") == 1.5
    with pytest.raises(ValueError):
        parse_duration("ten")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "einfuzz", "gen", "--seed", "3"], capture_output=True, text=True,
                          env=dict(os.environ))
    assert proc.returncode == 0 and len(proc.stdout.splitlines()) == 1
