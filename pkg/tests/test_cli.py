import csv
import io
import json
import math

import pytest

from stripent import cli, strip_transfer
from stripent.sft_model import hard_square, save_sft
from stripent.strip_transfer import TransferMatrix


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_entropy_csv(capsys):
    assert cli.main(["entropy", "--spec", "hardsquare", "--n-max", "12", "--tol", "1e-10"]) == 0
    out, err = capsys.readouterr()
    rows = rows_of(out)
    assert len(rows) == 12
    assert list(rows[0]) == ["n", "h_n", "lo", "hi", "h_n_over_n", "delta_n", "delta_lo", "delta_hi"]
    for r in rows:
        assert float(r["lo"]) <= float(r["h_n"]) <= float(r["hi"])
    deltas = [float(r["delta_n"]) for r in rows[:-1]]
    gaps = [abs(b - a) for a, b in zip(deltas, deltas[1:])]
    assert gaps[-1] < gaps[0] * 1e-5
    manifest = json.loads(err)
    assert manifest["command"] == "entropy" and manifest["inputs"]["n_max"] == 12


def test_perc_example(tmp_path, capsys):
    out = tmp_path / "perc.csv"
    assert cli.main(["perc", "--p", "0.5", "--n", "1", "--trials", "1000000", "--seed", "7", "--out", str(out)]) == 0
    assert "seed=7" in capsys.readouterr().err
    row = rows_of(out.read_text())[0]
    est = float(row["estimate"])
    sigma = math.sqrt(est * (1 - est) / 1e6)
    assert abs(est - 15 / 32) <= 4 * sigma
    manifest = json.loads((tmp_path / "perc.csv.manifest.json").read_text())
    assert manifest["seed"] == 7 and "wall_time_s" in manifest and "numpy" in manifest["versions"]


def test_counterexample_example(tmp_path):
    out = tmp_path / "y.csv"
    assert cli.main(["counterexample", "--k", "1073741824", "--n-max", "5", "--out", str(out)]) == 0
    rows = rows_of(out.read_text())
    assert len(rows) == 5
    assert all(r["bound_check"] == "ok" for r in rows)


def test_default_seed_printed(capsys):
    assert cli.main(["perc", "--trials", "100"]) == 0
    assert f"seed={cli.DEFAULT_SEED}" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["cftp", "--samples", "3000", "--seed", "5"],
        ["perc", "--p", "0.3,0.6", "--n", "2,3", "--trials", "5000", "--seed", "1"],
        ["entropy", "--n-max", "6", "--format", "json"],
    ],
)
def test_same_seed_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    assert cli.main(argv + ["--out", str(a)]) == 0
    assert cli.main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_json_schema(capsys):
    assert cli.main(["trace-bound", "--n-max", "4", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert doc["columns"][:3] == ["n", "dim", "k"]
    assert len(doc["rows"]) == 4
    assert all(row[-1] is True for row in doc["rows"])


def test_spec_from_file(tmp_path, capsys):
    path = tmp_path / "hs.sft"
    path.write_text(save_sft(hard_square()))
    assert cli.main(["entropy", "--spec", str(path), "--n-max", "3"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert float(rows[0]["h_n"]) == pytest.approx(math.log((1 + math.sqrt(5)) / 2), abs=1e-14)


@pytest.mark.parametrize("spec", ["full3", "y:7"])
def test_builtin_specs(spec, capsys):
    assert cli.main(["entropy", "--spec", spec, "--n-max", "3"]) == 0
    assert len(rows_of(capsys.readouterr().out)) == 3


def test_contract_error_exit(capsys):
    assert cli.main(["entropy", "--spec", "nosuch"]) == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error code=2 kind=ContractError msg=")
    assert cli.main(["cftp", "--labels", "zero,up,zero,zero"]) == 2


def test_bad_sft_file_exit(tmp_path, capsys):
    path = tmp_path / "bad.sft"
    path.write_text("sft bad\nsymbol 0 1\nsymbol 1 0\n")
    assert cli.main(["entropy", "--spec", str(path)]) == 2
    err = capsys.readouterr().err
    assert "kind=SftParseError" in err and "line 3" in err


def test_resource_exit_sites(monkeypatch, capsys):
    monkeypatch.setenv("STRIPENT_MAX_SITES", "3")
    assert cli.main(["cftp", "--width", "2", "--height", "2", "--samples", "10"]) == 3
    assert "error code=3 kind=ResourceError" in capsys.readouterr().err


def test_resource_exit_columns(monkeypatch, capsys):
    monkeypatch.setenv("STRIPENT_MAX_COLUMNS", "10")
    assert cli.main(["trace-bound", "--n-max", "8"]) == 3
    assert "STRIPENT_MAX_COLUMNS" in capsys.readouterr().err


def test_partial_table_exit(monkeypatch, capsys):
    monkeypatch.setenv("STRIPENT_MAX_COLUMNS", "10")
    assert cli.main(["entropy", "--n-max", "8"]) == 3
    out, err = capsys.readouterr()
    assert len(rows_of(out)) == 4
    assert "partial table" in err.strip().splitlines()[-1]


def test_gibbs_and_rowent_and_parry(capsys):
    assert cli.main(["gibbs", "--size", "2"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert len(rows) == 2 * (1 + 2 + 2 + 4)
    assert all(r["ok"] == "True" for r in rows)
    assert cli.main(["rowent", "--n-max", "4", "--m", "4"]) == 0
    assert len(rows_of(capsys.readouterr().out)) == 2
    assert cli.main(["parry", "--n-max", "4"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert {r["alignment"] for r in rows} == {"bottom", "top"}


def test_cftp_output(capsys):
    assert cli.main(["cftp", "--width", "2", "--height", "3", "--samples", "20000", "--seed", "3", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert sum(int(r[doc["columns"].index("observed")]) for r in doc["rows"]) == 20000


def test_selftest_passes(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.strip().splitlines()[-1] == "selftest: pass"
    for name, _ in cli.SELFTEST_CHECKS:
        assert f"{name}: pass" in out


def test_selftest_catches_wrong_transfer_entry(monkeypatch, capsys):
    real = strip_transfer.build_transfer

    def corrupted(spec, n, *args, **kwargs):
        tm = real(spec, n, *args, **kwargs)
        M = tm.matrix.tolil()
        M[tm.dim - 1, tm.dim - 1] = 1.0  # the last column holds a 1, so it cannot sit beside itself
        return TransferMatrix(tm.columns, M.tocsr(), tm.column_weight, tm.symmetric)

    monkeypatch.setattr(strip_transfer, "build_transfer", corrupted)
    assert cli.main(["selftest"]) == 4
    out = capsys.readouterr().out
    assert "transfer-count-oracle: FAIL" in out
    assert out.strip().splitlines()[-1].startswith("selftest: FAIL")
    assert "transfer-count-oracle" in out.strip().splitlines()[-1]
