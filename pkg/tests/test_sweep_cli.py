import csv
import hashlib
import json
from dataclasses import replace

import pytest

from intercavity import sweep as sweep_mod
from intercavity.cli import main
from intercavity.config import (ConfigError, RunConfig, load_config, parse_config,
                                parse_grid)
from intercavity.protocol import Model, run_entanglement, run_transfer
from intercavity.sweep import (CSV_COLUMNS, SweepSpec, emit_outputs, fig3_config,
                               fig4_config, run_sweep)

SMALL = """
[protocol]
kind = entanglement
model = effective

[sweep]
b = 9:11:1
g12_fraction = 0, 0.2
"""


def test_parse_grid():
    assert parse_grid("7:8:0.5") == (7.0, 7.5, 8.0)
    assert parse_grid("0:1:0.1")[3] == 0.3
    assert len(parse_grid("0:1:0.1")) == 11
    assert parse_grid("0, 0.2; 0.4") == (0.0, 0.2, 0.4)
    assert parse_grid("") == ()
    with pytest.raises(ConfigError):
        parse_grid("1:2")
    with pytest.raises(ConfigError):
        parse_grid("3:1:0.5")


def test_defaults_and_roundtrip():
    cfg = parse_config(SMALL)
    assert cfg.model is Model.EFFECTIVE
    assert cfg.b_grid == (9.0, 10.0, 11.0)
    assert cfg.base.delta1_ghz == -0.5
    assert cfg.base.lifetimes.tphi1_us == 2.5
    assert cfg.settings.dt == pytest.approx(0.01)
    assert parse_config(cfg.to_ini()) == cfg


def test_inline_comments():
    cfg = parse_config("[protocol]\nkind = transfer   # or entanglement\n"
                       "[sweep]\nalpha = 0:1:0.5 ; three points\n")
    assert cfg.kind == "transfer"
    assert cfg.alpha_grid == (0.0, 0.5, 1.0)


def test_inf_lifetime_disables_channel():
    cfg = parse_config("[rates]\nt1_us = inf\n")
    assert cfg.base.lifetimes.rates().gamma == (0.0, 0.0, 0.0)
    assert parse_config(cfg.to_ini()) == cfg


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[system]\nbee = 3\n",
                                  "[protocol]\nkind = teleport\n", "[system]\nb = eleven\n",
                                  "[integrator]\ntruncation = 2\n", "[sweep]\nalpha = 0:2:1\n",
                                  "no section\n"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_empty_grids_rejected():
    with pytest.raises(ConfigError):
        SweepSpec(RunConfig())
    with pytest.raises(ConfigError):
        SweepSpec(replace(RunConfig(), kind="transfer", b_grid=(9.0,), g12_grid=(0.2,)))


def test_validation_before_compute(monkeypatch):
    calls = []
    monkeypatch.setattr(sweep_mod, "evaluate_point", lambda *a: calls.append(a))
    cfg = replace(RunConfig(), b_grid=(4.0, 11.0), g12_grid=(0.0,))
    with pytest.raises(ConfigError, match="b=4.0"):
        run_sweep(SweepSpec(cfg))
    cfg = replace(cfg, b_grid=(2.0,))
    with pytest.raises(ConfigError, match="dispersive"):
        run_sweep(SweepSpec(cfg))
    assert not calls


def test_rows_are_lexicographic():
    cfg = parse_config(SMALL)
    result = run_sweep(SweepSpec(cfg))
    assert len(result.rows) == 3 * 2
    keys = [(float(r["b"]), float(r["g12_fraction"])) for r in result.rows]
    assert keys == sorted(keys)
    assert all(float(r["fidelity"]) == pytest.approx(1.0, abs=1e-8) for r in result.rows)
    assert result.all_converged


def test_transfer_axes():
    cfg = replace(parse_config(SMALL), kind="transfer", b_grid=(9.0,), g12_grid=(0.2,),
                  alpha_grid=(0.0, 0.5, 1.0))
    result = run_sweep(SweepSpec(cfg))
    assert [r["alpha"] for r in result.rows] == ["0.0", "0.5", "1.0"]


def test_single_point_matches_direct_run():
    cfg = replace(RunConfig(), b_grid=(11.0,), g12_grid=(0.2,))
    row = run_sweep(SweepSpec(cfg)).rows[0]
    direct = run_entanglement(cfg.base.params(11.0, 0.2))
    assert row["fidelity"] == repr(direct.fidelity)
    assert row["max_photon_expectation"] == repr(direct.max_photons)

    tcfg = replace(cfg, kind="transfer", alpha_grid=(0.3,))
    trow = run_sweep(SweepSpec(tcfg)).rows[0]
    assert trow["fidelity"] == repr(run_transfer(cfg.base.params(11.0, 0.2), alpha=0.3).fidelity)


def test_worker_count_does_not_change_rows():
    cfg = replace(parse_config(SMALL), model=Model.FULL_LINDBLAD, b_grid=(9.0, 11.0),
                  g12_grid=(0.0,))
    one = run_sweep(SweepSpec(cfg), workers=1)
    two = run_sweep(SweepSpec(cfg), workers=2)
    assert one.rows == two.rows


def test_point_failure_is_recorded(monkeypatch):
    real = sweep_mod.run_entanglement

    def flaky(params, *args, **kwargs):
        if abs(params.b - 10.0) < 1e-9:
            raise RuntimeError("boom")
        return real(params, *args, **kwargs)

    monkeypatch.setattr(sweep_mod, "run_entanglement", flaky)
    result = run_sweep(SweepSpec(parse_config(SMALL)))
    assert len(result.rows) == 6
    failed = [r for r in result.rows if r["error"]]
    assert len(failed) == 2
    assert failed[0]["error"] == "RuntimeError: boom"
    assert failed[0]["converged"] == "false"
    assert not result.all_converged


def test_emit_outputs(tmp_path):
    cfg_path = tmp_path / "small.ini"
    cfg_path.write_text(SMALL, encoding="utf-8")
    spec = SweepSpec(load_config(cfg_path), source_path=str(cfg_path))
    result = run_sweep(spec)
    paths = emit_outputs(result, tmp_path / "out" / "small")
    raw = paths["csv"].read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode("utf-8").splitlines()))
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 6 + 1

    manifest = json.loads(paths["manifest"].read_text(encoding="utf-8"))
    echoed = hashlib.sha256(paths["config"].read_bytes()).hexdigest()
    assert manifest["config_sha256"] == echoed
    assert manifest["source_config_sha256"] == hashlib.sha256(cfg_path.read_bytes()).hexdigest()
    assert manifest["csv_sha256"] == hashlib.sha256(raw).hexdigest()
    assert len(manifest["point_seconds"]) == 6
    assert load_config(paths["config"]) == spec.config

    script = paths["plot"].read_text(encoding="utf-8")
    assert "set datafile separator ','" in script
    assert "'small.csv'" in script
    assert script.count("title 'g12 =") == 2


def test_transfer_plot_script(tmp_path):
    cfg = replace(parse_config(SMALL), kind="transfer", b_grid=(9.0, 10.0), g12_grid=(0.2,),
                  alpha_grid=(0.0, 1.0))
    paths = emit_outputs(run_sweep(SweepSpec(cfg)), tmp_path / "t")
    assert "splot 't.csv'" in paths["plot"].read_text(encoding="utf-8")


def test_emit_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    result = run_sweep(SweepSpec(parse_config(SMALL)))
    with pytest.raises(OSError, match="file"):
        emit_outputs(result, blocker / "sub" / "out")


def test_canned_grids():
    f3, f4 = fig3_config(), fig4_config()
    assert f3.b_grid[0] == 7.0 and f3.b_grid[-1] == 15.0 and len(f3.b_grid) == 17
    assert f3.g12_grid == (0.0, 0.2, 0.4, 0.6, 0.8)
    assert f4.b_grid[-1] == 13.0 and f4.g12_grid == (0.2,)
    assert f4.alpha_grid == tuple(round(0.1 * k, 12) for k in range(11))
    assert SweepSpec(f3).points()[:2] == [(7.0, 0.0, None), (7.0, 0.2, None)]


def test_cli_validate(capsys):
    assert main(["validate"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["validate", "--b", "4"]) == 1


def test_cli_run(tmp_path, capsys):
    out = tmp_path / "r"
    code = main(["run", "--model", "effective", "--protocol", "transfer", "--alpha", "0.6",
                 "--b", "9", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[0] == ",".join(CSV_COLUMNS)
    assert printed[1].startswith("transfer,effective,9.0,0.2,0.6,")
    assert (tmp_path / "r.csv").exists()
    assert (tmp_path / "r.trace.csv").exists()


def test_cli_run_regime_failure(capsys):
    assert main(["run", "--b", "4", "--model", "effective"]) == 1
    assert "regime" in capsys.readouterr().err
    assert main(["run", "--b", "4", "--model", "effective", "--override-regime-check"]) == 0


def test_cli_sweep(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL, encoding="utf-8")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 7


def test_cli_overrides(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL, encoding="utf-8")
    code = main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--model",
                 "full", "--dt-ps", "5", "--truncation", "4"])
    assert code == 0
    echoed = load_config(tmp_path / "s.config.ini")
    assert echoed.model is Model.FULL_UNITARY
    assert echoed.settings.dt == pytest.approx(0.005)
    assert echoed.settings.truncation == 4


def test_cli_exit_status_on_failed_rows(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("no")

    monkeypatch.setattr(sweep_mod, "run_entanglement", broken)
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL, encoding="utf-8")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 1
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 7


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nnope = 1\n", encoding="utf-8")
    assert main(["validate", "--config", str(bad)]) == 2
    assert main(["sweep"]) == 2
    assert main(["run", "--truncation", "2"]) == 2
    assert "configuration error" in capsys.readouterr().err
