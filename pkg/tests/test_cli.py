import numpy as np
import pytest

from ptmoments import cli
from ptmoments.linalg import Bipartition, DensityOperator, write_qdm

from conftest import bell_state


@pytest.fixture
def bell_file(tmp_path):
    path = tmp_path / "bell.qdm"
    write_qdm(path, bell_state())
    return path


def read_rows(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


def test_analyze_bell(bell_file, tmp_path):
    out = tmp_path / "r.csv"
    code = cli.main(["analyze", str(bell_file), "--conditions", "p3ppt,d3,sr-d2", "--sectors", "0",
                     "--oracle", "--out", str(out)])
    assert code == 0
    rows = {r["condition"]: r for r in read_rows(out)}
    assert float(rows["p3PPT"]["margin"]) == pytest.approx(0.75, abs=1e-12)
    assert float(rows["SR-D2"]["margin"]) == pytest.approx(0.5, abs=1e-12)
    assert rows["SR-D2"]["sector"] == "0"
    assert float(rows["p3PPT"]["negativity"]) == pytest.approx(0.5, abs=1e-12)
    assert all(r["verdict"] == "detected" for r in rows.values())


def test_analyze_mixed_state_not_detected(tmp_path):
    path = tmp_path / "mixed.qdm"
    write_qdm(path, DensityOperator(np.eye(4) / 4, Bipartition(1, 1)))
    out = tmp_path / "r.csv"
    assert cli.main(["analyze", str(path), "--out", str(out)]) == 0
    assert all(r["verdict"] == "not_detected" for r in read_rows(out))


def test_analyze_asymmetric_needs_flag(tmp_path, capsys):
    psi = np.array([1, 1, 0, 0]) / np.sqrt(2)
    path = tmp_path / "asym.qdm"
    write_qdm(path, DensityOperator(np.outer(psi, psi), Bipartition(1, 1)))
    assert cli.main(["analyze", str(path), "--conditions", "SR-D2"]) == 2
    assert "symmetrize" in capsys.readouterr().err
    assert cli.main(["analyze", str(path), "--conditions", "SR-D2", "--symmetrize",
                     "--out", str(tmp_path / "o.csv")]) == 0


def test_user_errors(tmp_path, bell_file):
    assert cli.main(["analyze", str(tmp_path / "missing.qdm")]) == 2
    assert cli.main(["analyze", str(bell_file), "--conditions", "bogus"]) == 2
    assert cli.main(["shadow", str(bell_file), "-N", "100"]) == 2  # no seed
    assert cli.main(["shadow", str(bell_file), "-N", "100", "--seed", "-1"]) == 2
    assert cli.main(["model", "nope"]) == 2
    assert cli.main(["budget", "--n-a", "1", "--n-b", "1"]) == 2  # simplified constants need 4 qubits
    assert cli.main(["frobnicate"]) == 2


def test_config_file_and_flag_precedence(tmp_path, bell_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# analysis\ninput = {bell_file}\nconditions = p3PPT\nout = {tmp_path / 'a.csv'}\n")
    assert cli.main(["analyze", "--config", str(cfg)]) == 0
    assert [r["condition"] for r in read_rows(tmp_path / "a.csv")] == ["p3PPT"]
    assert cli.main(["analyze", "--config", str(cfg), "--conditions", "D3"]) == 0
    assert [r["condition"] for r in read_rows(tmp_path / "a.csv")] == ["D3"]
    assert cli.main(["analyze", "--config", str(cfg), "--set", "conditions=D2"]) == 0
    assert [r["condition"] for r in read_rows(tmp_path / "a.csv")] == ["D2"]
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign\n")
    assert cli.main(["analyze", "--config", str(bad)]) == 2


def test_budget_command(tmp_path):
    out = tmp_path / "b.csv"
    assert cli.main(["budget", "--n-a", "2", "--n-b", "2", "--sectors", "1", "--out", str(out)]) == 0
    row = read_rows(out)[0]
    assert row["N"] == "512033" and row["trace_p"] == "4"
    assert float(row["radius_at_N"]) <= 0.1


def test_shadow_deterministic_and_archive_roundtrip(tmp_path, bell_file):
    args = ["shadow", str(bell_file), "-N", "2000", "--seed", "12345"]
    for tag in "ab":
        assert cli.main(args + ["--out", str(tmp_path / f"{tag}.csv"),
                                "--archive", str(tmp_path / f"{tag}.qsh")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.qsh").read_bytes() == (tmp_path / "b.qsh").read_bytes()
    assert cli.main(["shadow", "--archive-in", str(tmp_path / "a.qsh"),
                     "--out", str(tmp_path / "c.csv")]) == 0
    assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "a.csv").read_bytes()
    rows = read_rows(tmp_path / "a.csv")
    d2 = [r for r in rows if r["sector"] == "0" and r["quantity"] == "D2"][0]
    assert float(d2["rigorous_radius"]) > 0 and float(d2["jackknife_sigma"]) > 0


def test_shadow_global_ensemble(tmp_path, bell_file):
    out = tmp_path / "g.csv"
    assert cli.main(["shadow", str(bell_file), "-N", "400", "--seed", "3", "--ensemble", "global",
                     "--archive", str(tmp_path / "g.qsh"), "--out", str(out)]) == 0
    assert [r["quantity"] for r in read_rows(out)] == ["p1", "p2", "p3", "p4"]
    assert cli.main(["shadow", "--archive-in", str(tmp_path / "g.qsh"), "--ensemble", "global"]) == 2
    assert cli.main(["shadow", "--archive-in", str(tmp_path / "g.qsh"), "--ensemble", "global",
                     "--seed", "3", "--out", str(tmp_path / "h.csv")]) == 0
    assert (tmp_path / "h.csv").read_bytes() == out.read_bytes()


def test_shadow_budget_only(tmp_path, bell_file):
    out = tmp_path / "n.csv"
    assert cli.main(["shadow", str(bell_file), "--budget-only", "--c1", "2", "--c2", "2",
                     "--sectors", "0", "--out", str(out)]) == 0
    assert int(read_rows(out)[0]["N"]) > 30000


def test_model_commands(tmp_path):
    out = tmp_path / "q.csv"
    assert cli.main(["model", "quench", "--set", "n_sites=4", "--set", "gamma=0.1,0.2",
                     "--set", "t_grid=0,0.01", "--out", str(out)]) == 0
    assert len(read_rows(out)) == 4
    out = tmp_path / "x.csv"
    assert cli.main(["model", "xxz", "--set", "l_sites=8", "--set", "ell=4",
                     "--set", "jz_grid=-1,0", "--emit-states", str(tmp_path / "st"),
                     "--out", str(out)]) == 0
    rows = read_rows(out)
    assert all(r["sound"] == "true" for r in rows)
    assert len(list((tmp_path / "st").glob("*.qdm"))) == 2
    out = tmp_path / "p.csv"
    assert cli.main(["model", "pxp", "--set", "n_sites=8", "--set", "subsystem=2,3,4,5",
                     "--set", "t_grid=0,1,2", "--out", str(out)]) == 0
    assert len(read_rows(out)) == 3
    assert cli.main(["model", "xxz", "--set", "geometry=ring"]) == 2
