import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from redux.cli import main
from redux.errors import ConfigurationError, RankError
from redux.hyper_reduction import rid_from_elements
from redux import pipeline
from redux.pipeline import (
    STAGES,
    PipelineConfig,
    Workspace,
    emit_geometry_report,
    run_pipeline,
)

TINY = {"n_angular": 8, "n_radial": 2, "grid_points": 2, "m": 4, "m_list": [2, 4], "deim_modes": 8,
        "deim_modes_list": [6, 8], "deim_modes_uq": 8, "hr_layers": 1, "hr_layers_list": [1],
        "hr_layers_uq": 1, "n_samples": 20}


def tiny(tmp_path, **extra):
    return PipelineConfig.from_dict(dict(TINY, out_dir=str(tmp_path), **extra))


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = tiny(out)
    return cfg, run_pipeline(cfg)


def test_case_a_path():
    A = pipeline.testcase_A()
    assert len(A) == 101
    assert A[0].to_list() == [0, 0, 1, 1, 0.5]
    assert A[100].to_list() == [1, 1, 2, 1, 0.5]
    assert A[50].to_list() == [0.5, 0.5, 1.5, 1, 0.5]


def test_case_b_uses_uq_samples():
    cfg = PipelineConfig(n_samples=30, seed=11)
    B = pipeline.testcase_B(cfg)
    assert len(B) == 30 and B == pipeline.testcase_B(cfg)


def test_tiny_pipeline_emits_every_report(tiny_run):
    cfg, produced = tiny_run
    assert list(produced) == list(STAGES)
    reports = {p.split("/")[-1] for files in produced.values() for p in files}
    for name in ["projection_errors.csv", "errors_A.csv", "eta_A.csv", "delta_summary_A.csv", "cdf_A.csv",
                 "costs_A.csv", "errors_B.csv", "moment_errors.csv", "uq_summary.csv",
                 "sampling_sets.csv", "geometry.csv"]:
        assert name in reports
    E = [float(r["E_m"]) for r in read_rows(f"{cfg.out_dir}/reports/projection_errors.csv")]
    assert all(b <= a for a, b in zip(E, E[1:]))
    eta_rows = read_rows(f"{cfg.out_dir}/reports/eta_A.csv")
    assert [int(r["m"]) for r in eta_rows] == [2, 4]
    assert all(float(r["min"]) >= 1 - 1e-9 for r in eta_rows)
    moments = read_rows(f"{cfg.out_dir}/reports/moment_errors.csv")
    assert [int(r["k"]) for r in moments] == list(range(1, 8))
    assert all(math.isfinite(float(r["E_RB"])) for r in moments)


def test_rerun_is_bitwise_identical(tiny_run, tmp_path):
    cfg, _ = tiny_run
    run_pipeline(tiny(tmp_path))
    first = sorted((p.name, digest(p)) for p in (Path(cfg.out_dir) / "reports").glob("*.csv"))
    second = sorted((p.name, digest(p)) for p in (tmp_path / "reports").glob("*.csv"))
    assert first == second


def test_online_stages_leave_offline_artifacts_untouched(tmp_path):
    cfg = tiny(tmp_path)
    run_pipeline(cfg, STAGES[:5])
    art = tmp_path / "artifacts"
    before = {p: digest(p) for p in art.rglob("*") if p.is_file()}
    run_pipeline(cfg, STAGES[5:])
    assert {p: digest(p) for p in before} == before


def test_geometry_counts_match_sampling_sets(tmp_path):
    cfg = tiny(tmp_path)
    ws = Workspace(cfg)
    mesh = ws.mesh()
    rid = ws.rid(1)
    mp = ws.magic_points(8)
    rows = emit_geometry_report(mesh, rid, mp)
    hr = [r[3] for r in rows]
    de = [r[4] for r in rows]
    assert hr.count("internal") == rid.l
    assert hr.count("internal") + hr.count("rid") == rid.l_bar
    assert de.count("magic") == mp.M
    assert de.count("magic") + de.count("stencil") == len(mp.stencil_nodes)


def test_full_domain_geometry(small_plate):
    rid = rid_from_elements(small_plate, np.arange(small_plate.n_el))
    rows = emit_geometry_report(small_plate, rid)
    assert {r[3] for r in rows} <= {"internal", "rid"}


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigurationError, match="bogus"):
        PipelineConfig.from_dict({"bogus": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"m": 4, "bogus": 1}))
    assert main(["mesh", "-c", str(path)]) == 2


def test_stage_failure_names_stage(tmp_path):
    cfg = tiny(tmp_path, m=8, m_list=[8])
    with pytest.raises(RankError, match="stage pod"):
        run_pipeline(cfg, ["mesh", "snapshots", "pod"])
    # artifacts of the completed stages survive the failure
    assert (tmp_path / "artifacts" / "snapshots" / "manifest.json").exists()
    with pytest.raises(ConfigurationError):
        run_pipeline(cfg, ["nonsense"])


def test_cli_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(dict(TINY, out_dir=str(tmp_path / "out"))))
    c = ["-c", str(cfg_path)]
    assert main(["mesh"] + c) == 0
    assert json.loads(capsys.readouterr().out)["n_el"] == 16
    assert main(["solve", "rb", "--param", "1,1,2", "--compare"] + c) == 0
    assert json.loads(capsys.readouterr().out)["delta"] < 1e-1
    assert main(["solve", "fe", "--param", "2,0,1"] + c) == 2
    assert main(["solve", "fe", "--param", "a,b"] + c) == 2
    assert main(["solve", "deim", "--param", "1,1,2", "--modes", "2"] + c) == 2
    assert main(["pod", "--m", "8"] + c) == 3
    assert main(["solve", "rb", "--param", "1,1,2", "--max-iter", "1"] + c) == 4


def test_cli_solve_writes_field(tmp_path, capsys):
    out = tmp_path / "u.csv"
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(dict(TINY, out_dir=str(tmp_path / "o"))))
    args = ["solve", "hr", "--param", "0.5,0.5,1.5", "--output", str(out), "-c", str(cfg_path)]
    assert main(args + ["--m", "10"]) == 2
    assert "m_list" in capsys.readouterr().err
    assert main(args) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["l"] >= result["m"]
    assert len(read_rows(out)) == 8 * 2 * 3 + 8 * 2


def test_tampered_artifact_is_rejected(tmp_path):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(dict(TINY, out_dir=str(tmp_path / "out"))))
    assert main(["pod", "-c", str(cfg_path)]) == 0
    S = tmp_path / "out" / "artifacts" / "snapshots" / "S.rbmx"
    data = bytearray(S.read_bytes())
    data[-1] ^= 0xFF
    S.write_bytes(bytes(data))
    assert main(["pod", "-c", str(cfg_path)]) == 2


def test_threads_env_mirrors_flag(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("REDUX_THREADS", "2")
    args = ["snapshots", "--out-dir", str(tmp_path), "--n-angular", "8", "--n-radial", "2", "--grid-points", "2"]
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out)["snapshots"] == 8
    monkeypatch.setenv("REDUX_THREADS", "many")
    assert main(args[:1] + ["--out-dir", str(tmp_path / "b")] + args[3:]) == 2
    # the flag takes precedence over the environment
    assert main(args[:1] + ["--out-dir", str(tmp_path / "c")] + args[3:] + ["--threads", "2"]) == 0
