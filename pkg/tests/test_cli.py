import json
import subprocess
import sys

import pytest

from famsynth.cli import main
from conftest import EXAMPLE1

MODEL = str(EXAMPLE1)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def members_of(block):
    out = set()
    for sub in block["subfamilies"]:
        values = [sub[name] for name in sorted(sub)]
        import itertools
        for combo in itertools.product(*values):
            out.add(combo)
    return out


def test_synth_threshold_json(capsys):
    code, out, _ = run_cli(capsys, "synth", "--mode", "threshold",
                           "--spec", "phi", MODEL)
    assert code == 0
    payload = json.loads(out)
    assert payload["T"]["members"] == 2
    assert payload["F"]["members"] == 2
    assert payload["undefined"]["members"] == 0
    assert payload["stats"]["iterations"] >= 1
    assert "timings" not in payload


def test_synth_max_json(capsys):
    code, out, _ = run_cli(capsys, "synth", "--mode", "max", "--spec", "obj",
                           MODEL)
    payload = json.loads(out)
    assert code == 0
    assert payload["value"] == pytest.approx(1.0, abs=1e-6)
    assert payload["best"]["k1"] == 1


def test_synth_feasibility(capsys):
    code, out, _ = run_cli(capsys, "synth", "--mode", "feasibility",
                           "--spec", "phi", MODEL)
    payload = json.loads(out)
    assert payload["found"] is True
    assert payload["member"]["k1"] == 1


def test_check_and_synth_agree_on_generated_input(tmp_path, capsys):
    gen_path = tmp_path / "fam.fmc"
    code, _, _ = run_cli(capsys, "gen", "--seed", "7", "--output",
                         str(gen_path))
    assert code == 0
    code, out_synth, _ = run_cli(capsys, "synth", "--mode", "threshold",
                                 str(gen_path))
    code2, out_check, _ = run_cli(capsys, "check", str(gen_path))
    assert code == code2 == 0
    synth = json.loads(out_synth)
    check = json.loads(out_check)
    for key in ("T", "F", "undefined"):
        assert members_of(synth[key]) == members_of(check[key])


def test_stdin_input(capsys, monkeypatch):
    import io
    monkeypatch.setattr(sys, "stdin",
                        io.StringIO(EXAMPLE1.read_text()))
    code, out, _ = run_cli(capsys, "check", "-", "--spec", "phi")
    assert code == 0
    assert json.loads(out)["T"]["members"] == 2


def test_json_output_is_byte_identical_across_runs(capsys):
    _, first, _ = run_cli(capsys, "synth", "--spec", "phi", MODEL)
    _, second, _ = run_cli(capsys, "synth", "--spec", "phi", MODEL)
    assert first == second


def test_timings_flag_adds_wall_clock_block(capsys):
    _, out, _ = run_cli(capsys, "synth", "--spec", "phi", "--timings", MODEL)
    assert "timings" in json.loads(out)


def test_exit_code_semantic_error(tmp_path, capsys):
    bad = tmp_path / "bad.fmc"
    bad.write_text("states 1\ninitial 0\nparams\nk : 0\ntrans\n0 : 0.9:k\n")
    code, _, err = run_cli(capsys, "check", str(bad))
    assert code == 2
    assert "row-sum" in err


def test_exit_code_resource_cap(capsys):
    code, _, err = run_cli(capsys, "allinone", MODEL, "--cap", "2")
    assert code == 3
    assert "size-cap" in err


def test_exit_code_undefined_reward(tmp_path, capsys):
    doc = """states 2
initial 0
params
a : 0
trans
0 : 1:a
1 : 1:a
rewards
0 : 1
1 : 0
labels
goal : 1
specs
obj : Emax F "goal"
"""
    path = tmp_path / "undef.fmc"
    path.write_text(doc)
    code, _, err = run_cli(capsys, "synth", "--mode", "max", str(path))
    assert code == 4
    assert "undefined-reward" in err


def test_exit_code_usage(capsys):
    code, _, err = run_cli(capsys, "synth", "--mode", "sideways", MODEL)
    assert code == 1
    code, _, err = run_cli(capsys, "check", "/nonexistent/file.fmc")
    assert code == 1


def test_trace_file_is_json_lines(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    code, _, _ = run_cli(capsys, "synth", "--spec", "phi", "--trace",
                         str(trace), MODEL)
    assert code == 0
    records = [json.loads(line) for line in trace.read_text().splitlines()]
    assert records
    assert {"index", "subfamily", "size", "min", "max", "decision",
            "split_param", "best_value"} <= set(records[0])


def test_csv_and_text_outputs(capsys):
    code, out, _ = run_cli(capsys, "synth", "--spec", "phi", "--out", "csv",
                           MODEL)
    assert code == 0
    assert out.splitlines()[0] == "bucket,k0,k1,k2"
    code, out, _ = run_cli(capsys, "synth", "--spec", "phi", "--out", "text",
                           MODEL)
    assert "T: 2 members" in out


def test_gen_is_deterministic(capsys):
    _, a, _ = run_cli(capsys, "gen", "--seed", "11")
    _, b, _ = run_cli(capsys, "gen", "--seed", "11")
    assert a == b
    _, c, _ = run_cli(capsys, "gen", "--seed", "12")
    assert a != c


def test_smt_export_writes_problem(tmp_path, capsys):
    doc = EXAMPLE1.read_text().replace(
        "labels", "rewards\n0 : 1\n1 : 1\n2 : 0\n3 : 5\n\nlabels", 1)
    doc = doc.replace('phi : P>=1/10 F "one"', 'phi : E<=5 F "two"')
    path = tmp_path / "rew.fmc"
    path.write_text(doc)
    out_path = tmp_path / "problem.smt2"
    code, _, _ = run_cli(capsys, "smt-export", "--spec", "phi", str(path),
                         "--output", str(out_path))
    assert code == 0
    text = out_path.read_text()
    assert text.startswith("(set-logic QF_LRA)")
    assert "(check-sat)" in text
    # unsupported spec exits semantically
    code, _, err = run_cli(capsys, "smt-export", "--spec", "obj", str(path))
    assert code == 2
    assert "unsupported-spec" in err


def test_bench_runs_all_approaches(capsys):
    code, out, _ = run_cli(capsys, "bench", "--spec", "phi", MODEL,
                           "--out", "json")
    assert code == 0
    payload = json.loads(out)
    names = [row["approach"] for row in payload["rows"]]
    assert names == ["one-by-one", "all-in-one", "consistent-enum",
                     "refinement"]
    assert all("time" in row for row in payload["rows"])


def test_console_entry_point_via_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "famsynth.cli", "synth", "--spec", "phi",
         MODEL],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["T"]["members"] == 2
