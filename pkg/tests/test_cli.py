import csv
import json

import numpy as np
import pytest

from bzwalk.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main


def read_table(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[0], [[float(x) for x in r] for r in rows[1:]]


def test_walk_writes_csv_and_manifest(tmp_path):
    assert main(["walk", "--steps", "10", "--output-dir", str(tmp_path)]) == EXIT_OK
    header, rows = read_table(tmp_path / "walk.csv")
    assert header == ["site", "k", "p", "p_up", "p_down"]
    p = np.array([r[2] for r in rows])
    assert p.sum() == pytest.approx(1.0, abs=1e-14)
    assert p[15] == pytest.approx(269 / 1024, abs=1e-15)
    manifest = json.loads((tmp_path / "walk_manifest.json").read_text())
    assert manifest["command"] == "walk" and manifest["outputs"] == ["walk.csv"]
    assert manifest["config"]["steps"] == 10


def test_zero_steps_returns_initial_state(tmp_path):
    assert main(["walk", "--steps", "0", "--output-dir", str(tmp_path)]) == EXIT_OK
    _, rows = read_table(tmp_path / "walk.csv")
    assert rows[9][2] == pytest.approx(1.0)


def test_outputs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["band", "--V0", "5", "--nk", "32", "--m-max", "8", "--output-dir", str(tmp_path),
                     "--name", name]) == EXIT_OK
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_depth_scan_parallel_matches_serial(tmp_path):
    args = ["fig2", "--V0", "20", "30", "--j", "10", "50", "--nk", "64", "--m-max", "16", "--output-dir",
            str(tmp_path)]
    assert main(args + ["--name", "serial"]) == EXIT_OK
    assert main(args + ["--name", "pool", "--threads", "2"]) == EXIT_OK
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "pool.csv").read_bytes()


def test_depth_scan_flat_band_and_zero_steps(tmp_path):
    assert main(["fig2", "--V0", "20", "--j", "0", "10", "--flat-band", "--nk", "64", "--output-dir",
                 str(tmp_path)]) == EXIT_OK
    _, rows = read_table(tmp_path / "fig2.csv")
    assert all(abs(r[2]) < 1e-12 for r in rows)


def test_env_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("BZWALK_OUTPUT_DIR", str(tmp_path))
    assert main(["walk", "--steps", "2"]) == EXIT_OK
    assert (tmp_path / "walk.csv").exists()


def test_manifest_reruns_the_same_configuration(tmp_path):
    first, second = tmp_path / "1", tmp_path / "2"
    assert main(["walk", "--steps", "7", "--twist", "0.4", "--output-dir", str(first)]) == EXIT_OK
    assert main(["walk", "--config", str(first / "walk_manifest.json"), "--output-dir", str(second)]) == EXIT_OK
    assert (first / "walk.csv").read_bytes() == (second / "walk.csv").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"steps": 3, "alpha": 0.0}))
    assert main(["walk", "--config", str(cfg), "--steps", "5", "--output-dir", str(tmp_path)]) == EXIT_OK
    manifest = json.loads((tmp_path / "walk_manifest.json").read_text())
    assert manifest["config"]["steps"] == 5 and manifest["config"]["alpha"] == 0.0


def test_unknown_config_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"stepz": 3}))
    assert main(["walk", "--config", str(cfg), "--output-dir", str(tmp_path)]) == EXIT_USAGE
    assert "stepz" in capsys.readouterr().err


@pytest.mark.parametrize("args,field", [(["walk", "--steps", "-1"], "steps"), (["walk", "--n-sites", "7"], "n_sites"),
                                        (["fig2", "--j", "-3"], "j"), (["band", "--threads", "0"], "threads")])
def test_invalid_parameters_exit_usage(tmp_path, capsys, args, field):
    assert main(args + ["--output-dir", str(tmp_path)]) == EXIT_USAGE
    assert field in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["walk", "--no-such-flag"]) == EXIT_USAGE
    assert main(["walk", "--spinor", "sideways"]) == EXIT_USAGE


def test_open_boundary_violation_exits_numerical(tmp_path, capsys):
    assert main(["walk", "--steps", "15", "--boundary", "open", "--output-dir", str(tmp_path)]) == EXIT_NUMERICAL
    assert "edge" in capsys.readouterr().err


def test_decohere_defaults(tmp_path):
    assert main(["decohere", "--monte-carlo", "4000", "--output-dir", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "decohere.json").read_text())
    assert report["p"] == pytest.approx(3.6e-5, rel=1e-9)
    assert report["coin_error"] < 1e-10
    assert 500 < report["coherent_steps"] < 2000
    assert report["monte_carlo"]["within_3_sigma"]
    header, rows = read_table(tmp_path / "decohere.csv")
    assert header[:2] == ["step", "coherence_analytic"] and len(rows) == 21


def test_decohere_bad_spectrum(tmp_path, capsys):
    assert main(["decohere", "--field-spectrum-csv", str(tmp_path / "missing.csv"), "--output-dir",
                 str(tmp_path)]) == EXIT_USAGE
    assert "field_spectrum.path" in capsys.readouterr().err
