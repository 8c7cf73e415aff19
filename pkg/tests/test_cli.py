import json

import numpy as np
import pytest
from jsonschema import validate

from hypdens.cli import (
    EXIT_ERROR,
    EXIT_INDETERMINATE,
    EXIT_OK,
    EXIT_USAGE,
    RunConfig,
    SCHEMAS,
    main,
    parse_point,
    read_points,
    schema_document,
    write_points,
)
from hypdens.density import ring_lattice


@pytest.fixture(scope="module")
def lattice_csv(tmp_path_factory):
    # step 3 ring lattice, 444 points; D+ = 0.689 for alpha = 1
    path = tmp_path_factory.mktemp("seq") / "lattice.csv"
    write_points(path, ring_lattice(3.0, 3.0, 7.5).points)
    return path


def load(path):
    return json.loads(path.read_text())


# schema


def test_schema_keys(capsys):
    assert main(["schema"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert {"classification", "density", "funnels"} <= set(doc["keys"])
    assert doc["exit_codes"] == {"ok": 0, "error": 1, "indeterminate": 2, "usage": 64}
    assert doc == schema_document()


def test_schema_round_trip(tmp_path, lattice_csv):
    out = tmp_path / "c"
    assert main(["classify", "--domain", "disk", "--seq", str(lattice_csv), "--out", str(out)]) == 0
    report = load(out / "classification.json")
    validate(report, schema_document()["reports"]["classification"])
    validate(json.loads(json.dumps(report)), SCHEMAS["classification"])


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["classify", "--domain", "disk"],
                                  ["metric", "--domain", "disk", "--h", "abc"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


# classify


def test_classify_interpolating(tmp_path, lattice_csv):
    out = tmp_path / "c"
    code = main(["classify", "--domain", "disk", "--seq", str(lattice_csv), "--out", str(out)])
    assert code == EXIT_OK
    c = load(out / "classification.json")["classification"]
    assert c["verdict"] == "interpolating"
    assert c["threshold"] == 1.0
    assert {p.name for p in out.iterdir()} == {"classification.json", "meta.json", "samples.csv",
                                               "ratios.svg"}


def test_classify_near_threshold_indeterminate(tmp_path, lattice_csv):
    out = tmp_path / "c"
    code = main(["classify", "--domain", "disk", "--seq", str(lattice_csv), "--alpha", "0.689",
                 "--out", str(out)])
    assert code == EXIT_INDETERMINATE
    assert load(out / "classification.json")["classification"]["verdict"] == "indeterminate"


def test_classify_missing_domain(tmp_path, lattice_csv):
    out = tmp_path / "c"
    code = main(["classify", "--domain", str(tmp_path / "nope.json"), "--seq", str(lattice_csv),
                 "--out", str(out)])
    assert code == EXIT_ERROR
    err = load(out / "error.json")
    assert err["error"] == "FileNotFoundError"
    assert "domain" in err["message"]
    validate(err, SCHEMAS["error"])


def test_classify_module_error_is_structured(tmp_path):
    seq = tmp_path / "out.csv"
    write_points(seq, np.array([0.1, 1.5]))
    out = tmp_path / "c"
    assert main(["classify", "--domain", "disk", "--seq", str(seq), "--out", str(out)]) == EXIT_ERROR
    assert load(out / "error.json")["kind"] == "error"


# pipeline


def test_pipeline_annulus_funnels(tmp_path):
    out = tmp_path / "p"
    assert main(["pipeline", "--domain", "annulus:2", "--h", "0.12", "--out", str(out)]) == EXIT_OK
    rep = load(out / "pipeline.json")
    assert rep["metric"]["connectivity"] == 2
    assert len(rep["funnels"]) == 2
    for f in rep["funnels"]:
        assert f["collar"] == pytest.approx(np.pi**2 / f["length"], rel=1e-12)
        assert f["length"] == pytest.approx(np.pi**2 / 2, rel=0.03)
    assert "oracle" not in rep


def test_pipeline_disk_oracle_field(tmp_path, lattice_csv):
    out = tmp_path / "p"
    assert main(["pipeline", "--domain", "disk", "--h", str(1 / 64), "--out", str(out)]) == EXIT_OK
    assert load(out / "pipeline.json")["oracle"]["agreement"] is None
    out = tmp_path / "q"
    code = main(["pipeline", "--domain", "disk", "--h", str(1 / 64), "--seq", str(lattice_csv),
                 "--out", str(out)])
    assert code == EXIT_OK
    rep = load(out / "pipeline.json")
    assert rep["oracle"]["verdict"] == "bounded"
    assert rep["oracle"]["agreement"] is True
    assert rep["classification"]["verdict"] == "interpolating"


@pytest.mark.parametrize("radii", ["3,2", "2,2", "-1,2"])
def test_pipeline_invalid_radii(tmp_path, radii):
    out = tmp_path / "p"
    code = main(["pipeline", "--domain", "disk", f"--radii={radii}", "--out", str(out)])
    assert code == EXIT_ERROR
    assert "radii" in load(out / "error.json")["message"]


# reproducibility


def test_reports_byte_identical(tmp_path, lattice_csv):
    args = ["classify", "--domain", "disk", "--seq", str(lattice_csv), "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("classification.json", "samples.csv", "ratios.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_hash_embedded(tmp_path, lattice_csv):
    out = tmp_path / "a"
    main(["classify", "--domain", "disk", "--seq", str(lattice_csv), "--out", str(out)])
    rep = load(out / "classification.json")
    meta = load(out / "meta.json")
    assert rep["config_hash"] == meta["config_hash"]
    cfg = RunConfig(**{k: v for k, v in rep["config"].items() if k != "radii"},
                    radii=tuple(rep["config"]["radii"]))
    assert cfg.digest() == rep["config_hash"]
    other = RunConfig(**{**rep["config"], "seed": 1})
    assert other.digest() != rep["config_hash"]


def test_workers_env(monkeypatch):
    from hypdens.cli import worker_count

    monkeypatch.setenv("HYPDENS_WORKERS", "3")
    assert worker_count(None) == 3
    assert worker_count(2) == 2


# parsing


def test_point_io(tmp_path):
    pts = np.array([0.1 + 0.2j, -0.3j])
    path = tmp_path / "p.csv"
    write_points(path, pts)
    np.testing.assert_allclose(read_points(path), pts)
    assert parse_point("0.5,-0.25") == 0.5 - 0.25j
