import json
import subprocess
import sys

import pytest

from ctsim import cli
from ctsim.machine import VM_VERSION


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def config_line(text):
    line = next(l for l in text.splitlines() if l.startswith("# config "))
    return json.loads(line[len("# config "):])


def test_bounds_table_and_threshold(capsys):
    code, out, _ = run(["bounds", "--k", "2..5", "--scan-q"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[1] == f"# vm_version {VM_VERSION}"
    assert "k,error_bound" in lines
    assert "4,0.14285714285714285" in lines
    assert "# threshold 0.21" in lines


def test_bounds_noisy_column_marks_divergence(capsys):
    code, out, _ = run(["bounds", "--k", "8", "--q", "0.25"], capsys)
    assert code == 0 and "8,0.007874015748031496,divergent" in out


@pytest.mark.parametrize("argv", [
    ["bounds", "--k", "1"],
    ["distinguish", "--k", "1", "--trials", "1"],
    ["distinguish", "--q", "0.7", "--trials", "1"],
    ["distinguish", "--r", "0.5", "--trials", "1"],
    ["bell", "--fa", "program:nonexistent", "--rounds", "10"],
    ["learn", "--bound", "linear", "--rounds", "5"],
])
def test_configuration_errors_exit_one(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 1 and "config error" in err


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["distinguish", "--bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["bell", "--target", "gremlin"])
    assert exc.value.code == 1


def test_invariant_failure_exits_two(monkeypatch, capsys):
    monkeypatch.setattr(cli.bell, "replay_check", lambda *a: [0])
    code, _, err = run(["bell", "--rounds", "20"], capsys)
    assert code == 2 and "invariant" in err


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"k": 5, "trials": 3, "seed": 7}))
    code, out, _ = run(["distinguish", "--config", str(cfg), "--seed", "9", "--corpus", "zeros"], capsys)
    assert code == 0
    resolved = config_line(out)
    # flags beat the file, the file beats the defaults, untouched keys keep defaults
    assert (resolved["k"], resolved["trials"], resolved["seed"]) == (5, 3, 9)
    assert resolved["stage_cap"] == cli.DEFAULTS["distinguish"]["stage_cap"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kk": 5}))
    code, _, err = run(["distinguish", "--config", str(cfg)], capsys)
    assert code == 1 and "kk" in err


def test_scientific_integer_flags(capsys):
    code, out, _ = run(["distinguish", "--trials", "2", "--stage-cap", "1e5", "--corpus", "ones"], capsys)
    assert code == 0 and config_line(out)["stage_cap"] == 100_000


def test_distinguish_csv_shape(capsys):
    code, out, _ = run(["distinguish", "--trials", "4", "--k", "3", "--corpus", "zeros,alternating"], capsys)
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "seed,k,q,r,chooser,truth,answer,correct,stage,program_length,bits_consumed"
    assert len(rows) == 5
    assert any(l.startswith("# summary ") for l in out.splitlines())


@pytest.mark.parametrize("argv", [
    ["distinguish", "--trials", "3", "--k", "3", "--q", "0.15", "--r", "0.05", "--corpus", "ones"],
    ["mixture", "--trials", "3", "--corpus", "zeros"],
    ["mixture", "--improper", "--chooser", "zeros"],
    ["bell", "--rounds", "400", "--target", "quantum"],
    ["learn", "--source", "coin", "--rounds", "200", "--seed", "4"],
    ["bounds", "--k", "3,9", "--q", "0.1"],
])
def test_reruns_are_byte_identical(argv, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        assert cli.main(argv + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"# ctsim ")
    assert f"# vm_version {VM_VERSION}\n".encode() in outs[0]


def test_bell_report_json(tmp_path, capsys):
    rep = tmp_path / "r.json"
    code, _, err = run(["bell", "--rounds", "1000", "--report", str(rep)], capsys)
    assert code == 0
    d = json.loads(rep.read_text())
    assert d["vm_version"] == VM_VERSION and d["s_post_lock"] == 4.0
    assert "lock_round=" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ctsim", "bounds", "--k", "4"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "4,0.14285714285714285" in res.stdout
