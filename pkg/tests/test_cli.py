import csv
import json

import pytest

from cvpostselect import cli
from cvpostselect.postselect import GridSpec, info_map, key_rate
from cvpostselect.coherent_info import ChannelParams

SMALL = ["--n-e", "101", "--n-x", "201"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_keyrate_json_fields(capsys):
    code, out, _ = run(capsys, "keyrate", "--loss", "0.5", "--d", "2.1", *SMALL)
    assert code == 0
    data = json.loads(out)
    for key in ("rate", "selected_mass", "d", "eta", "grid", "converged"):
        assert key in data
    assert data["eta"] == 0.5 and data["d"] == 2.1


def test_loss_and_eta_agree(capsys):
    _, a, _ = run(capsys, "keyrate", "--loss", "0.25", *SMALL)
    _, b, _ = run(capsys, "keyrate", "--eta", "0.75", *SMALL)
    assert a == b


def test_loss_db(capsys):
    _, out, _ = run(capsys, "keyrate", "--loss-db", "3", *SMALL)
    assert json.loads(out)["eta"] == pytest.approx(10 ** -0.3)


def test_lossless_beats_half_loss(capsys):
    _, a, _ = run(capsys, "keyrate", "--eta", "1", *SMALL)
    _, b, _ = run(capsys, "keyrate", "--eta", "0.5", *SMALL)
    assert json.loads(a)["rate"] > json.loads(b)["rate"]


@pytest.mark.parametrize(
    "argv",
    [
        ["keyrate", "--eta", "0.5", "--loss", "0.5"],
        ["keyrate"],
        ["keyrate", "--eta", "1.5"],
        ["keyrate", "--eta", "0.5", "--bogus"],
        ["frobnicate"],
        ["keyrate", "--eta", "0.5", "--d", "-1"],
        ["simulate", "--eta", "0.5", "--n", "0"],
    ],
)
def test_usage_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_unwritable_output(capsys, tmp_path):
    code, _, err = run(capsys, "keyrate", "--eta", "0.5", *SMALL, "-o", str(tmp_path / "no" / "such" / "f.json"))
    assert code == 2
    assert "cannot write" in err


def test_non_convergence_exit_code(capsys):
    code, out, _ = run(capsys, "keyrate", "--eta", "0.5", "--n-e", "3", "--n-x", "5")
    assert code == 1
    assert json.loads(out)["converged"] is False


def test_map_csv(capsys, tmp_path):
    path = tmp_path / "map.csv"
    code, _, _ = run(capsys, "map", "--eta", "0.5", "--n-e", "11", "--n-x", "21", "-o", str(path))
    assert code == 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["E", "x", "delta_I"]
    assert len(rows) - 1 == 11 * 21
    m = info_map(0.5, GridSpec(n_e=11, n_x=21))
    assert float(rows[1 + 5 * 21 + 3][2]) == m.values[5, 3]


def test_map_json(capsys):
    code, out, _ = run(capsys, "map", "--eta", "0.5", "--n-e", "5", "--n-x", "9", "--format", "json")
    data = json.loads(out)
    assert len(data["delta_I"]) == 5 and len(data["delta_I"][0]) == 9
    assert data["boundary"][0] is None


def test_simulate_deterministic(capsys, tmp_path):
    args = ["simulate", "--loss", "0.5", "--d", "2.1", "--n", "20000", "--seed", "7"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args, "--threads", "3")
    assert a == b
    data = json.loads(a)
    assert data["n_total"] == 20000
    assert sum(data["basis_counts"].values()) == 20000


def test_simulate_event_log_and_checks(capsys, tmp_path):
    log = tmp_path / "events.csv"
    code, out, _ = run(capsys, "simulate", "--eta", "0.5", "--n", "2000", "--seed", "1",
                       "--event-log", str(log), "--check", *SMALL)
    assert code == 0
    data = json.loads(out)
    assert set(data["checks"]) == {"key_rate", "error_selected"}
    lines = log.read_text().splitlines()
    assert lines[0] == "amp_q,amp_p,basis,bit,x_out,eve_correct,selected"
    assert len(lines) == 2001


def test_optimize_reports_both(capsys):
    code, out, _ = run(capsys, "optimize", "--eta", "0.5", "--n-e", "101", "--n-x", "201", "--tol", "0.01")
    data = json.loads(out)
    assert code == 0
    assert data["optimum"]["rate"] >= data["reference"]["rate"]
    assert data["reference"]["d"] == 2.1


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# half loss\nloss = 0.5\nd = 2.1\nn-e = 101\nn_x = 201\n")
    _, a, _ = run(capsys, "keyrate", "--config", str(cfg))
    _, b, _ = run(capsys, "keyrate", "--loss", "0.5", *SMALL)
    assert a == b
    _, c, _ = run(capsys, "keyrate", "--config", str(cfg), "--d", "3")
    assert json.loads(c)["d"] == 3.0


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run(capsys, "keyrate", "--eta", "0.5", "--config", str(cfg))[0] == 2


def test_threads_env_default(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    args = cli.build_parser().parse_args(["keyrate", "--eta", "0.5"])
    assert args.threads == 3


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["keyrate", "--help"])
    out = capsys.readouterr().out
    assert "801" in out and "1601" in out and "2.1" in out


def test_emit_roundtrip(tmp_path):
    res = key_rate(ChannelParams(0.5, 2.1), GridSpec(n_e=51, n_x=101))
    path = tmp_path / "r.json"
    cli.emit(res, "json", str(path))
    data = json.loads(path.read_text())
    assert data["rate"] == res.rate
    assert data["grid"] == res.grid.to_dict()


def test_emit_csv_keyvalue(tmp_path):
    res = key_rate(ChannelParams(0.5, 2.1), GridSpec(n_e=51, n_x=101))
    path = tmp_path / "r.csv"
    cli.emit(res, "csv", str(path))
    rows = dict(csv.reader(path.open()))
    assert float(rows["rate"]) == res.rate
    assert rows["grid.n_e"] == "51"
