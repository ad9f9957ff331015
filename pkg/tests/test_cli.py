import csv
import json
from pathlib import Path

import pytest

from wsl.cli import PIPELINES, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def _summary(path):
    return dict(line.split(" = ", 1) for line in Path(path).read_text().splitlines())


def test_spectrum_first_eigenvalue(tmp_path):
    assert main(["spectrum", "--config", str(CONFIGS / "interval_unit.json"), "--out", str(tmp_path)]) == 0
    rows = _read(tmp_path / "spectrum.csv")
    first = next(r for r in rows[1:] if r[0] == "plus" and r[1] == "1")
    assert abs(float(first[2]) - 1.0) <= 1e-10
    assert _summary(tmp_path / "summary.txt")["status"] == "pass"


def test_zero_tau_exits_with_config_error(tmp_path, capsys):
    code = main(["spectrum", "--config", str(CONFIGS / "interval_zero_tau.json"), "--out", str(tmp_path)])
    assert code == 2
    assert "sign-change" in capsys.readouterr().err


def test_unknown_pipeline_lists_valid_ones(capsys):
    assert main(["nope", "--config", str(CONFIGS / "interval_unit.json")]) == 2
    err = capsys.readouterr().err
    assert all(p in err for p in PIPELINES)


def test_missing_config_file(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "absent.json")]) == 2


def test_schema_violation(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"domain": {"kind": "interval", "length": -1.0, "elements": 8}, "radii": [1.0]}))
    assert main(["spectrum", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_bad_flags():
    assert main(["spectrum", "--config", str(CONFIGS / "interval_unit.json"), "--threads", "0"]) == 2


def test_verify_bounds_has_case_row(tmp_path):
    assert main(["verify-bounds", "--config", str(CONFIGS / "three_domain.json"), "--out", str(tmp_path)]) == 0
    rows = _read(tmp_path / "bounds.csv")
    assert rows[0][-1] == "case row"
    assert all(r[-1] in {"1", "2", "3", "4"} for r in rows[1:])


def test_failed_assertion_exits_one(tmp_path):
    # decay needs the weights to push mass out of the tail; the sign-changing interval does not
    code = main(["decay", "--config", str(CONFIGS / "interval_sign.json"), "--out", str(tmp_path)])
    assert code == 1
    summary = _summary(tmp_path / "summary.txt")
    assert summary["status"] == "fail" and int(summary["assertions_failed"]) >= 1


def test_resonant_compatible_data_is_solved(tmp_path):
    assert main(["l1-solve", "--config", str(CONFIGS / "resonant_cos.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "solution.csv").exists()


def test_resonant_incompatible_data_is_refused(tmp_path):
    raw = json.loads((CONFIGS / "resonant_cos.json").read_text())
    raw["options"]["f0"] = {"kind": "constant", "value": 1.0}
    cfg = tmp_path / "const.json"
    cfg.write_text(json.dumps(raw))
    assert main(["l1-solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o" / "solution.csv").exists()


@pytest.mark.parametrize("pipeline,config", [("spectrum", "interval_sign.json"), ("degiorgi", "interval_sign.json"),
                                             ("resonance-scan", "interval_sign.json")])
def test_repeat_runs_are_byte_identical(tmp_path, pipeline, config):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert main([pipeline, "--config", str(CONFIGS / config), "--out", str(d), "--seed", "5"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
