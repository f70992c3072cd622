import csv

import numpy as np
import pytest

from conftest import cos_modulated
from htfkit import cli
from htfkit.hss import htf_evaluate


@pytest.fixture
def params_file(tmp_path):
    path = tmp_path / "vsi.txt"
    path.write_text("# rated inverter\nV0 = 1.0\nm = 0.02\nphi_deg = 188\n")
    return path


@pytest.fixture
def lti_file(tmp_path):
    path = tmp_path / "lti.txt"
    path.write_text("omega_p = 1\nstates = 1\ninputs = 1\noutputs = 1\n"
                    "A 0 0 0 -1 0\nB 0 0 0 1 0\nC 0 0 0 1 0\n")
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_htf_lti_is_block_diagonal(lti_file, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["htf", "--model", str(lti_file), "--s", "0.5j", "--h", "2",
                     "--out", str(out)]) == 0
    rows = read_csv(out / "htf.csv")
    assert tuple(rows[0]) == cli.HTF_HEADER
    for r in rows[1:]:
        if r[5] != "0":
            assert float(r[6]) == 0 and float(r[7]) == 0
    centre = [r for r in rows[1:] if r[1] == r[2] == "2"][0]
    assert complex(float(centre[6]), float(centre[7])) == pytest.approx(1 / (1 + 0.5j), rel=1e-11)


def test_model_round_trip(tmp_path):
    path = tmp_path / "cos.txt"
    model = cos_modulated()
    cli.write_model(model, path)
    again = cli.read_model(path)
    np.testing.assert_allclose(htf_evaluate(again, 0.3j, 4).matrix,
                               htf_evaluate(model, 0.3j, 4).matrix, rtol=1e-11)


def test_output_is_deterministic(params_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["stability", "--params", str(params_file), "--m", "1x,10x",
                         "--points", "60", "--out", str(out)]) == 0
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_stability_report(params_file, tmp_path, capsys):
    out = tmp_path / "o"
    code = cli.main(["stability", "--params", str(params_file), "--m", "0,1x,10x",
                     "--bracket", "1x:3x", "--out", str(out)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert "phase_margin_deg=none" in lines[0] and lines[0].endswith("verdict=stable")
    assert lines[1].endswith("verdict=stable")
    assert lines[2].endswith("verdict=unstable")
    assert lines[3].startswith("m_crit=")
    assert 1.4 < float(lines[3].split("(")[1].rstrip("x)")) < 1.5
    rows = read_csv(out / "bode_symmetric_m0.02.csv")
    assert tuple(rows[0]) == cli.BODE_HEADER and len(rows) == 401


def test_stability_indeterminate_bracket(params_file):
    assert cli.main(["stability", "--params", str(params_file), "--m", "1x",
                     "--bracket", "0.1x:1x", "--points", "50"]) == cli.EXIT_INDETERMINATE


def test_transform_report(params_file, capsys):
    code = cli.main(["transform", "--params", str(params_file), "--f", "5", "--h", "4",
                     "--transform", "rotation"])
    assert code == 0
    report = [l for l in capsys.readouterr().out.splitlines() if l.startswith("s=")]
    assert "block_diagonal=True" in report[0] and "entry_diagonal=False" in report[0]


def test_transform_identity_and_unknown(params_file, capsys):
    assert cli.main(["transform", "--params", str(params_file), "--f", "5",
                     "--transform", "identity"]) == 0
    assert "block_diagonal=False" in capsys.readouterr().out
    assert cli.main(["transform", "--params", str(params_file), "--f", "5",
                     "--transform", "shear"]) == cli.EXIT_INPUT


def test_sweep_model_only(params_file, tmp_path):
    out = tmp_path / "o"
    assert cli.main(["sweep", "--params", str(params_file), "--band", "1:100",
                     "--points", "10", "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert tuple(rows[0]) == cli.SWEEP_HEADER
    assert len(rows) == 41 and {r[4] for r in rows[1:]} == {"model"}


def test_sweep_with_simulation(tmp_path, params_file):
    out = tmp_path / "o"
    assert cli.main(["sweep", "--params", str(params_file), "--band", "4:6",
                     "--points", "2", "--simulate", "--out", str(out)]) == 0
    sources = [r[4] for r in read_csv(out / "sweep.csv")[1:]]
    assert sources.count("simulation") == 8


@pytest.mark.parametrize("argv", [
    ["sweep", "--band", "5:1"],
    ["sweep", "--band", "x"],
    ["htf", "--s", "0.1j"],
    ["stability"],
    ["htf", "--h", "0", "--s", "1j"],
    ["bogus"],
])
def test_usage_errors(argv, params_file):
    if "--params" not in argv and argv[0] in ("sweep",):
        argv = argv + ["--params", str(params_file)]
    assert cli.main(argv) == cli.EXIT_INPUT


def test_bad_key_reports_location(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("V0 = 1\nLf = 0.1\n")
    assert cli.main(["stability", "--params", str(path)]) == cli.EXIT_INPUT
    err = capsys.readouterr().err
    assert f"{path}:2" in err and "'Lf'" in err


def test_bad_model_line(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("omega_p = 1\nstates = 1\ninputs = 1\noutputs = 1\nA 0 0 3 1 0\n")
    assert cli.main(["htf", "--model", str(path), "--s", "1j"]) == cli.EXIT_INPUT
    assert f"{path}:5" in capsys.readouterr().err


def test_pole_is_numerical_failure(lti_file, capsys):
    assert cli.main(["htf", "--model", str(lti_file), "--s=-1+0j"]) == cli.EXIT_NUMERIC
    assert "singular" in capsys.readouterr().err


def test_gain_list_parsing():
    assert cli.parse_m_list("1x, 0.05,10x") == pytest.approx([0.02, 0.05, 0.2])
