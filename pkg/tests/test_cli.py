"""End-to-end tests of the command-line interface (in-process, no subprocess)."""

import json
import math

import pytest

from freeconv import cli
from freeconv.errors import SpecValidationError

GIN = {"kind": "ginibre", "n": 24}
GUE = {"kind": "gue", "n": 24}
SHIFTED_GUE = {"kind": "elliptic", "n": 24, "tau": 1.0, "shift": 1.0}
# even node counts keep z = 0 off the grid; wide enough for finite-n outliers
COMPARE_GRID = {"kind": "cartesian", "ranges": [[-1.6, 1.6], [-1.6, 1.6]],
                "resolution": [18, 18]}


@pytest.fixture(autouse=True)
def _no_worker_env(monkeypatch):
    monkeypatch.delenv("FREECONV_WORKERS", raising=False)


def run_cli(tmp_path, command, config, name="job.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return cli.main([command, "--config", str(path)])


def read_csv(path):
    raw = path.read_bytes().decode("utf-8")
    lines = raw.split("\r\n")
    assert lines[0].startswith("# provenance: ")
    assert lines[1].startswith("# summary: ")
    provenance = json.loads(lines[0][len("# provenance: "):])
    summary = json.loads(lines[1][len("# summary: "):])
    header = lines[2].split(",")
    rows = [line.split(",") for line in lines[3:] if line]
    return provenance, summary, header, rows


# ---------------------------------------------------------------------------
# transform
# ---------------------------------------------------------------------------


def test_transform_s_values(tmp_path):
    out = tmp_path / "s.csv"
    rc = run_cli(tmp_path, "transform", {
        "ensemble_a": SHIFTED_GUE, "variable": "y",
        "start": 0.25, "stop": 1.0, "count": 2, "output": str(out)})
    assert rc == 0
    _, summary, header, rows = read_csv(out)
    assert summary == {"points": 2, "variable": "y"}
    assert header[:3] == ["y", "s_re", "s_im"]
    s_of = {float(r[0]): float(r[1]) for r in rows}
    assert s_of[0.25] == pytest.approx(2.0 / (1.0 + math.sqrt(2.0)), abs=1e-12)
    assert s_of[1.0] == pytest.approx(2.0 / (1.0 + math.sqrt(5.0)), abs=1e-12)


def test_transform_hermitian_section(tmp_path):
    out = tmp_path / "g.csv"
    rc = run_cli(tmp_path, "transform", {
        "ensemble_a": GUE, "start": -0.5, "stop": 0.5, "count": 3,
        "output": str(out)})
    assert rc == 0
    _, summary, header, rows = read_csv(out)
    assert summary["section"] == "scalar"
    row0 = dict(zip(header, rows[1]))          # the x = 0 row
    assert float(row0["z"]) == 0.0
    assert float(row0["density"]) == pytest.approx(1.0 / math.pi, abs=1e-4)
    assert row0["s"] == "undefined"            # centered: no S transform


def test_transform_s_column_defined_off_support(tmp_path):
    out = tmp_path / "gs.csv"
    rc = run_cli(tmp_path, "transform", {
        "ensemble_a": SHIFTED_GUE, "start": 4.0, "stop": 6.0, "count": 4,
        "output": str(out)})
    assert rc == 0
    _, _, header, rows = read_csv(out)
    checked = 0
    for r in rows:
        row = dict(zip(header, r))
        if row["s"] == "undefined":
            continue
        y = float(row["y_re"])
        assert float(row["s"]) == pytest.approx(
            2.0 / (1.0 + math.sqrt(1.0 + 4.0 * y)), abs=1e-6)
        checked += 1
    assert checked >= 3


def test_transform_matrix_section(tmp_path):
    out = tmp_path / "m.csv"
    rc = run_cli(tmp_path, "transform", {
        "ensemble_a": GIN, "start": 0.5, "stop": 2.0, "count": 2,
        "output": str(out)})
    assert rc == 0
    _, summary, header, rows = read_csv(out)
    assert summary["section"] == "matrix"
    inside = dict(zip(header, rows[0]))
    assert float(inside["a_re"]) == pytest.approx(0.5, abs=1e-9)
    assert float(inside["b_abs"]) == pytest.approx(math.sqrt(0.75), abs=1e-9)
    assert inside["branch"] == "nonholomorphic"
    assert inside["s"] == "undefined"
    outside = dict(zip(header, rows[1]))
    assert float(outside["a_re"]) == pytest.approx(0.5, abs=1e-9)
    assert outside["branch"] == "holomorphic"


def test_transform_failure_is_total(tmp_path, capsys):
    # the scan hits z = 0 exactly, where no phase split exists
    rc = run_cli(tmp_path, "transform", {
        "ensemble_a": GIN, "start": -1.0, "stop": 1.0, "count": 3,
        "output": str(tmp_path / "x.csv")})
    assert rc == 3
    assert "transform failed" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# solve-product / density
# ---------------------------------------------------------------------------


def test_solve_product_csv(tmp_path):
    out = tmp_path / "sp.csv"
    rc = run_cli(tmp_path, "solve-product", {
        "ensemble_a": GIN, "ensemble_b": GIN,
        "grid": {"kind": "polar", "ranges": [[0.25, 0.75], [-0.2, 0.2]],
                 "resolution": [3, 3]},
        "output": str(out)})
    assert rc == 0
    _, summary, header, rows = read_csv(out)
    assert summary == {"points": 9, "failed": 0}
    assert "rot" not in header               # needs >= 5 nodes per axis
    mid = dict(zip(header, rows[4]))         # r = 0.5, phi = 0
    assert float(mid["correlator"]) == pytest.approx(0.5, abs=1e-8)
    assert mid["status"] == "ok"


def test_solve_product_partial_failure(tmp_path, capsys):
    out = tmp_path / "sp2.csv"
    rc = run_cli(tmp_path, "solve-product", {
        "ensemble_a": GIN, "ensemble_b": GIN,
        "grid": {"kind": "cartesian", "ranges": [[-0.5, 0.5], [-0.5, 0.5]],
                 "resolution": [3, 3]},
        "output": str(out)})
    assert rc == 2                           # the z = 0 node cannot be solved
    assert "failed" in capsys.readouterr().err
    _, summary, header, rows = read_csv(out)
    assert summary == {"points": 9, "failed": 1}
    failed = [dict(zip(header, r)) for r in rows if r[-1] == "failed"]
    assert len(failed) == 1
    assert failed[0]["x"] == "0" and failed[0]["y"] == "0"
    assert failed[0]["a_re"] == ""           # numeric cells emptied


def test_density_json(tmp_path):
    out = tmp_path / "d.json"
    rc = run_cli(tmp_path, "density", {
        "ensemble_a": GIN, "ensemble_b": GIN, "format": "json",
        "grid": {"kind": "polar", "ranges": [[0.2, 0.8], [-3.0, 3.0]],
                 "resolution": [5, 7]},
        "output": str(out)})
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["schema_version"] == 1
    assert payload["summary"]["route"] == "closed-form:circular"
    assert payload["summary"]["rot_residual"] == 0.0
    assert payload["summary"]["holes"] == 0
    cols = payload["columns"]
    irho, ir = cols.index("rho"), cols.index("r")
    for row in payload["rows"]:
        assert row[irho] == pytest.approx(
            1.0 / (2.0 * math.pi * row[ir]), rel=1e-12)


def test_density_origin_grid_rejected(tmp_path, capsys):
    rc = run_cli(tmp_path, "density", {
        "ensemble_a": GIN, "ensemble_b": GIN,
        "grid": {"kind": "cartesian", "ranges": [[-1.0, 1.0], [-1.0, 1.0]],
                 "resolution": [5, 5]},
        "output": str(tmp_path / "d.csv")})
    assert rc == 1
    assert "z = 0" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# boundary
# ---------------------------------------------------------------------------


def test_boundary_circle(tmp_path):
    out = tmp_path / "b.csv"
    rc = run_cli(tmp_path, "boundary", {
        "ensemble_a": GIN, "ensemble_b": GIN, "angular_samples": 8,
        "output": str(out)})
    assert rc == 0
    _, summary, header, rows = read_csv(out)
    assert summary["located"] == 8 and summary["empty"] == 0
    assert header == ["phi", "r", "r_reference", "status"]
    for r in rows:
        assert abs(float(r[1]) - 1.0) <= 1e-4
        assert float(r[2]) == 1.0
        assert r[3] == "ok"


def test_boundary_empty_when_capped(tmp_path, capsys):
    rc = run_cli(tmp_path, "boundary", {
        "ensemble_a": GIN, "ensemble_b": GIN, "angular_samples": 8,
        "r_max": 0.4, "output": str(tmp_path / "b.csv")})
    assert rc == 3
    assert "no support boundary" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# sample / compare
# ---------------------------------------------------------------------------


def test_sample_csv(tmp_path):
    out = tmp_path / "ev.csv"
    rc = run_cli(tmp_path, "sample", {
        "ensemble_a": {"kind": "ginibre", "n": 8},
        "ensemble_b": {"kind": "ginibre", "n": 8},
        "trials": 3, "output": str(out)})
    assert rc == 0
    _, summary, header, rows = read_csv(out)
    assert header == ["trial", "re", "im"]
    assert len(rows) == 24
    assert summary["skipped"] == [] and summary["eigenvalues"] == 24
    assert {r[0] for r in rows} == {"0", "1", "2"}


def test_compare_json(tmp_path):
    out = tmp_path / "cmp.json"
    rc = run_cli(tmp_path, "compare", {
        "ensemble_a": GIN, "ensemble_b": GIN, "trials": 30,
        "grid": COMPARE_GRID, "output": str(out)})
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["schema_version"] == 1
    assert payload["analytic_route"] == "closed-form:circular"
    assert payload["l1_distance"] >= 0.0
    assert payload["skipped_trials"] == []
    assert len(payload["radial"]["density"]) == 16
    assert "slice" not in payload            # quick profile: no slice section
    prov = payload["provenance"]
    assert "output" not in prov and "workers" not in prov


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


def test_output_bytes_independent_of_path_and_workers(tmp_path):
    base = {"ensemble_a": GIN, "ensemble_b": GIN, "trials": 30, "seed": 5,
            "grid": COMPARE_GRID}
    outs = []
    for name, workers in (("a.json", 1), ("b.json", 4)):
        cfg = dict(base, output=str(tmp_path / name), workers=workers)
        assert run_cli(tmp_path, "compare", cfg, name=f"cfg_{name}") == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_rerun_bytes_identical(tmp_path):
    cfg = {"ensemble_a": SHIFTED_GUE, "variable": "y",
           "start": 0.1, "stop": 2.0, "count": 20}
    blobs = []
    for name in ("r1.csv", "r2.csv"):
        assert run_cli(tmp_path, "transform",
                       dict(cfg, output=str(tmp_path / name)),
                       name=f"cfg_{name}") == 0
        blobs.append((tmp_path / name).read_bytes())
    assert blobs[0] == blobs[1]


# ---------------------------------------------------------------------------
# validation and merging
# ---------------------------------------------------------------------------


def test_validation_aggregates_everything(tmp_path, capsys):
    rc = run_cli(tmp_path, "density", {
        "ensemble_a": {"kind": "wishart", "n": 1},
        "ensemble_b": GIN,
        "grid": {"kind": "spherical", "ranges": [[0.1, 1.0], [0.0, 1.0]],
                 "resolution": [4, 4]},
        "format": "xml",
        "output": str(tmp_path / "x.csv")})
    assert rc == 1
    err = capsys.readouterr().err
    assert err.count("- ") >= 4              # all violations in one report
    assert "kind" in err and "format" in err


def test_unknown_key_rejected(tmp_path, capsys):
    rc = run_cli(tmp_path, "transform", {
        "ensemble_a": GUE, "output": str(tmp_path / "x.csv"), "bins": 9})
    assert rc == 1
    assert "'bins' is not used" in capsys.readouterr().err


def test_command_mismatch_rejected(tmp_path, capsys):
    rc = run_cli(tmp_path, "transform", {
        "command": "density", "ensemble_a": GUE,
        "output": str(tmp_path / "x.csv")})
    assert rc == 1
    assert "names command" in capsys.readouterr().err


def test_flag_overrides_config(tmp_path):
    path = tmp_path / "cfg.json"
    out = tmp_path / "o.csv"
    path.write_text(json.dumps({
        "ensemble_a": SHIFTED_GUE, "variable": "y", "seed": 5,
        "start": 0.5, "stop": 1.0, "count": 2, "output": str(out)}))
    rc = cli.main(["transform", "--config", str(path), "--seed", "9",
                   "--count", "3"])
    assert rc == 0
    provenance, summary, _, _ = read_csv(out)
    assert provenance["seed"] == 9
    assert summary["points"] == 3


def test_variable_y_needs_shifted_hermitian(tmp_path, capsys):
    rc = run_cli(tmp_path, "transform", {
        "ensemble_a": GUE, "variable": "y", "start": 0.1, "stop": 1.0,
        "output": str(tmp_path / "x.csv")})
    assert rc == 1
    assert "non-centered hermitian" in capsys.readouterr().err


def test_build_job_defaults():
    cfg = cli.build_job("transform", {"ensemble_a": GUE, "output": "o.csv"})
    assert cfg.epsilon == 1e-6 and cfg.workers == 1 and cfg.seed == 0
    cfg2 = cli.build_job("compare", {
        "ensemble_a": GIN, "ensemble_b": GIN, "output": "o.json",
        "grid": {"kind": "cartesian", "ranges": [[-1.4, 1.4], [-1.4, 1.4]],
                 "resolution": [8, 8]}})
    assert cfg2.epsilon == 1e-2 and cfg2.trials == 100 and cfg2.format == "json"


def test_build_job_profile_sets_trials():
    cfg = cli.build_job("sample", {
        "ensemble_a": GIN, "ensemble_b": GIN, "output": "o.csv",
        "profile": "paper-scale"})
    assert cfg.trials == 20000


def test_build_job_workers_env(monkeypatch):
    monkeypatch.setenv("FREECONV_WORKERS", "3")
    cfg = cli.build_job("transform", {"ensemble_a": GUE, "output": "o.csv"})
    assert cfg.workers == 3
    monkeypatch.setenv("FREECONV_WORKERS", "many")
    with pytest.raises(SpecValidationError):
        cli.build_job("transform", {"ensemble_a": GUE, "output": "o.csv"})


def test_compare_rejects_polar_and_csv():
    with pytest.raises(SpecValidationError) as err:
        cli.build_job("compare", {
            "ensemble_a": GIN, "ensemble_b": GIN, "output": "o.csv",
            "format": "csv",
            "grid": {"kind": "polar", "ranges": [[0.1, 1.0], [-3.0, 3.0]],
                     "resolution": [8, 8]}})
    text = "\n".join(err.value.violations)
    assert "cartesian" in text and "JSON only" in text


def test_missing_output_rejected():
    with pytest.raises(SpecValidationError) as err:
        cli.build_job("transform", {"ensemble_a": GUE})
    assert any("output" in v for v in err.value.violations)
