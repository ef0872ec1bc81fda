import csv

import pytest

from tbma.cli import main
from tbma.learning import load_model


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_exponents_command(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["exponents", "--out", str(out)]) == 0
    (row,) = rows(out)
    assert float(row["e_edge"]) == pytest.approx(0.2085408662538361, rel=1e-9)
    # H01 and H10 share one signal law when mu_G = mu_H, so the cloud exponent is exactly zero
    assert float(row["e_cloud"]) == 0.0


def test_config_file_is_used(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("sigma2_g = 10\nmu_g = 0\n")
    out = tmp_path / "e.csv"
    assert main(["exponents", "--config", str(cfg), "--out", str(out)]) == 0
    assert float(rows(out)[0]["e_edge"]) < 0.06


def test_pe_command(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["pe", "--detector", "CloudOptimal", "--trials", "500", "--seed", "3", "--out", str(out)]) == 0
    (row,) = rows(out)
    assert row["detector"] == "CloudOptimal" and row["trials"] == "500"
    assert float(row["ci_lo"]) <= float(row["pe"]) <= float(row["ci_hi"])


def test_train_command(tmp_path):
    model, data = tmp_path / "m.txt", tmp_path / "d.csv"
    assert main(["train", "--target", "EdgeCell1", "--trials", "200", "--epochs", "5",
                 "--out", str(model), "--dataset-out", str(data)]) == 0
    assert load_model(model).layer_dims == (40, 32, 32, 1)
    assert data.read_text().count("\n") == 201


def test_figure_command_deterministic_across_workers(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["figure", "fig6", "--trials", "300", "--seed", "9", "--workers", "1", "--out", str(a)]) == 0
    assert main(["figure", "fig6", "--trials", "300", "--seed", "9", "--workers", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(rows(a)) == 12


@pytest.mark.parametrize("argv", [
    ["exponents", "--config", "/nonexistent/file.cfg"],
    ["figure", "fig99"],
    ["pe", "--trials", "0"],
    ["bogus"],
    ["train", "--trials", "10"],
])
def test_config_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "config error" in capsys.readouterr().err


def test_invalid_config_value_exit_1(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("pmf_cell1_h0 = 0.5, 0.6, 0, 0\n")
    assert main(["exponents", "--config", str(cfg)]) == 1


def test_runtime_error_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c0.cfg"
    cfg.write_text("fronthaul_capacity = 0\n")
    assert main(["exponents", "--config", str(cfg)]) == 2
    assert "C=0" in capsys.readouterr().err
