import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from liftlab.cli import load_schema, main

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(args, capsys, command):
    code, out, err = run(args, capsys)
    assert code == 0, err
    doc = json.loads(out)
    jsonschema.validate(doc, load_schema(command))
    assert doc["schema_version"] == "1.0" and doc["command"] == command
    return doc


def test_measures(capsys):
    doc = run_json(["measures", "parity:3"], capsys, "measures")
    assert doc["degree"] == 3 and doc["block_sensitivity"]["value"] == 3
    doc = run_json(["measures", "or:2"], capsys, "measures")
    assert doc["approx_degree"]["value"] == 2 and doc["dual_witness"]["d"] == 2


def test_measures_parse_error(capsys):
    code, _, err = run(["measures", "parity:x"], capsys)
    assert code == 1 and "column" in err


def test_approxdeg(capsys):
    doc = run_json(["approxdeg", "and:3", "--d", "2"], capsys, "approxdeg")
    assert doc["approx_degree"] == 2 and doc["dual_witness"]["d"] == 2
    assert doc["certifies"] and doc["errors_by_degree"] == pytest.approx([1, 2 / 3, 0.25], abs=1e-7)


def test_density_full_and_file(capsys):
    doc = run_json(["density", "--b", "2", "--n", "2"], capsys, "density")
    assert doc["rows"]["dense_high"] and doc["cols"]["dense_high"] and doc["rows"]["size"] == 16
    run_json(["density", "--supports", SAMPLES / "supports_b2.json"], capsys, "density")


def test_discrepancy(capsys):
    doc = run_json(["discrepancy", "parity:2", "--b", "2"], capsys, "discrepancy")
    assert doc["bound_bits"] == pytest.approx(0.09310940439148085, rel=1e-9)
    doc = run_json(["discrepancy", "const:2", "--b", "2"], capsys, "discrepancy")
    assert doc["vacuous"]


def test_guard_exit_code(capsys):
    code, _, err = run(["discrepancy", "parity:2", "--b", "11"], capsys)
    assert code == 2 and "guard" in err.lower()


def test_partition(capsys):
    doc = run_json(["partition", SAMPLES / "reveal_x1_b2n2.json"], capsys, "partition")
    assert len(doc["partition"]) == 4 and doc["c"] == 2


def test_lift_trivial(capsys):
    doc = run_json(["lift", "parity:2", SAMPLES / "trivial_b2n2.json"], capsys, "lift")
    assert doc["queried"] == 0


def test_lift_trace(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    out = tmp_path / "report.json"
    code, _, _ = run(["lift", "parity:2", SAMPLES / "reveal_x1_b2n2.json", "--delta-high", "0.9",
                      "--trace", trace, "--out", out], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, load_schema("lift"))
    assert doc["queried"] > 0
    lines = trace.read_text().splitlines()
    assert lines and all(json.loads(line)["step"] == k for k, line in enumerate(lines))


def test_lift_structured_failure(tmp_path, capsys):
    proto = tmp_path / "p.json"
    proto.write_text(json.dumps({"b": 1, "n": 2, "rounds": [{"speaker": "row", "bit": 0},
                                                           {"speaker": "col", "bit": 0},
                                                           {"speaker": "row", "bit": 1}]}))
    out = tmp_path / "r.json"
    code, _, _ = run(["lift", "parity:2", proto, "--out", out], capsys)
    assert code == 3
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, load_schema("lift"))
    assert doc["failure"] is not None


def test_missing_file(capsys):
    code, _, err = run(["lift", "parity:2", "/no/such/protocol.json"], capsys)
    assert code == 1 and err


def test_malformed_protocol(tmp_path, capsys):
    proto = tmp_path / "p.json"
    proto.write_text(json.dumps({"b": 1, "n": 1, "rounds": [{"bit": 7}]}))
    code, _, _ = run(["partition", proto], capsys)
    assert code == 1


def test_sweep_json_and_csv(capsys):
    args = ["sweep", "--seed", "3", "--n-values", "2", "--b-values", "2", "--c-max", "1", "--trials", "2",
            "--delta-high", "0.7", "--delta-low", "0.3"]
    doc = run_json(args, capsys, "sweep")
    assert len(doc["rows"]) == 2 * 2
    code, out, _ = run(args + ["--format", "csv"], capsys)
    assert code == 0 and out.splitlines()[0].startswith("index,trial,n,b,c,") and len(out.splitlines()) == 5


def test_sweep_deterministic_across_worker_counts(capsys):
    base = ["sweep", "--seed", "11", "--n-values", "2", "--b-values", "2", "3", "--c-max", "2", "--trials", "2",
            "--delta-high", "0.7", "--delta-low", "0.3"]
    outs = {run(base + ["--workers", str(w)], capsys)[1] for w in (1, 4, 4)}
    assert len(outs) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "liftlab", "measures", "parity:2"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["degree"] == 2


def test_every_schema_is_a_valid_schema():
    for name in ("measures", "approxdeg", "density", "discrepancy", "partition", "lift", "sweep"):
        jsonschema.Draft202012Validator.check_schema(load_schema(name))
