import csv
import math
import re

import numpy as np
import pytest

import mrrlink.sensing
from mrrlink import cli
from mrrlink.channel_model import gg_shape_params
from mrrlink.config import ConfigError, Scenario, load_scenario, write_manifest
from mrrlink.sensing import estimator_pdf


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def read_manifest(path):
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------- config


def test_unknown_key_names_the_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("w_zs = 80\nsigma_bogus = 1\n")
    with pytest.raises(ConfigError, match="sigma_bogus"):
        load_scenario(cfg)


def test_bad_value_rejected():
    with pytest.raises(ConfigError, match="K_d"):
        load_scenario(overrides=["K_d=1.5"])


def test_error_radius_must_stay_below_threshold():
    with pytest.raises(ConfigError):
        Scenario(R_e=200.0, R_th=150.0)


def test_overrides_beat_file_and_comments_ignored(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("# comment\nw_zs = 70   # inline\nK_d = 100\nrun.seed = 5\n")
    scn, meta = load_scenario(cfg, ["w_zs=90"])
    assert (scn.w_zs, scn.K_d) == (90.0, 100)
    assert meta == {"run.seed": "5"}


def test_manifest_round_trip(tmp_path):
    scn = Scenario(w_zs=72.5, sigma_theta_e=1.234567890123e-6, sigma_R2=0.05)
    write_manifest(tmp_path / "m.txt", scn, {"seed": 9})
    back, meta = load_scenario(tmp_path / "m.txt")
    assert back == scn
    assert meta["run.seed"] == "9"


# ---------------------------------------------------------------- cli


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_help_lists_every_flag(capsys):
    parser = cli.build_parser()
    subs = parser._subparsers._group_actions[0].choices
    for name, p in [("", parser), *subs.items()]:
        text = p.format_help()
        for action in p._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
        for g in cli.GLOBAL_FLAGS:
            assert f"--{g}" in text


def test_linkbudget_matches_module_values(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "linkbudget", "--json", "--out", tmp_path)
    assert code == 0
    vals = __import__("json").loads(out)
    scn = Scenario()
    a, b = gg_shape_params(scn.rytov(), scn.wave_model)
    assert vals["Z"] == scn.Z == 500e3
    assert vals["h_L"] == scn.link().h_L
    assert vals["sigma_R2"] == scn.rytov()
    assert (vals["alpha"], vals["beta"]) == (a, b)
    assert vals["h_pg_sensing"] == scn.sensing_model().h_pg
    assert (tmp_path / "linkbudget.csv").exists()


def test_linkbudget_zenith_range(capsys, tmp_path):
    code, out, _ = run_cli(
        capsys, "linkbudget", "--json", "--out", tmp_path, "--set", f"zeta_elev={math.pi / 2}", "--set", "H_s=400000"
    )
    assert code == 0
    assert __import__("json").loads(out)["Z"] == pytest.approx(400e3, rel=1e-15)


def test_missing_config_exit_code(capsys, tmp_path):
    code, _, err = run_cli(capsys, "linkbudget", "--config", tmp_path / "nope.cfg")
    assert code == 2
    assert "nope.cfg" in err


def test_unknown_key_exit_code(capsys, tmp_path):
    code, _, err = run_cli(capsys, "linkbudget", "--out", tmp_path, "--set", "w_zz=3")
    assert code == 2
    assert "w_zz" in err


def test_invalid_error_radius_rejected(capsys, tmp_path):
    code, _, err = run_cli(capsys, "sense", "--Ri", 10, "--out", tmp_path, "--set", "R_e=150")
    assert code == 2
    assert err


def test_global_flags_after_subcommand(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "--set", "w_zs=70", "linkbudget", "--out", tmp_path, "--seed", 3, "--set", "K_d=20")
    assert code == 0
    m = read_manifest(tmp_path / "manifest.txt")
    assert (m["w_zs"], m["K_d"], m["run.seed"]) == ("70", "20", "3")


def test_sense_preset_fig6(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "sense", "--preset", "fig6", "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "fig6_7_sensing_time.csv")
    assert {float(r["R_e"]) for r in rows} == {5.0, 10.0, 15.0}
    assert all(float(r["N_aq"]) >= 1 for r in rows)


def test_sense_single_point_pdf(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "sense", "--Ri", 120, "--wzs", 80, "--Kd", 500, "--trials", 0, "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "sense_estimator_pdf.csv")
    x = np.array([float(r["R_hat"]) for r in rows])
    f = np.array([float(r["pdf_analytical"]) for r in rows])
    model = Scenario(w_zs=80.0, K_d=500).sensing_model()
    assert np.allclose(f, estimator_pdf(x, 120.0, model), rtol=1e-15, atol=0)
    assert np.trapezoid(f, x) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("cmd", [("sense", "--preset", "fig4"), ("position", "--Remb", 30)])
def test_zero_trials_rejected(capsys, tmp_path, cmd):
    code, _, err = run_cli(capsys, *cmd, "--trials", 0, "--out", tmp_path)
    assert code == 2
    assert "trial" in err


def test_position_three_curves_and_override_in_manifest(capsys, tmp_path):
    code, _, _ = run_cli(
        capsys, "position", "--preset", "fig8", "--Remb", 30, "--trials", 40,
        "--set", "sigma_theta_e=1e-5", "--out", tmp_path,
    )
    assert code in (0, 1)  # 40 trials is too few for the preset's trend checks
    rows = read_csv(tmp_path / "fig8_positioning_mse.csv")
    for col in ("w_zp", "mse_method1", "mse_method2", "mse_ideal", "trials", "skipped_samples_mean"):
        assert col in rows[0]
    assert {float(r["R_emb"]) for r in rows} == {30.0}
    assert all(float(r["mse_ideal"]) > 0 for r in rows)
    m = read_manifest(tmp_path / "manifest.txt")
    assert m["sigma_theta_e"] == "1.0000000000000001e-05"
    assert m["run.Remb"] == "30"
    assert m["run.trials"] == "40"


def test_rerun_from_manifest_is_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(capsys, "position", "--Remb", 55, "--trials", 30, "--seed", 77, "--workers", 2, "--out", a)
    run_cli(capsys, "position", "--config", a / "manifest.txt", "--out", b)
    name = "fig8_positioning_mse.csv"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    assert read_manifest(b / "manifest.txt")["run.seed"] == "77"


def test_csv_uses_seventeen_digits(capsys, tmp_path):
    run_cli(capsys, "linkbudget", "--out", tmp_path)
    text = (tmp_path / "linkbudget.csv").read_text()
    h_L = next(r for r in read_csv(tmp_path / "linkbudget.csv") if r["quantity"] == "h_L")["value"]
    assert float(h_L) == Scenario().link().h_L
    assert "," in text and not re.search(r"\d,\d{3}\.", text)


def test_validate_clean_passes(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "validate", "--only", "7,10", "--out", tmp_path)
    assert code == 0
    assert re.search(r"\[PASS\] AC7 .*\n(\s+\[PASS\].*measured.*required.*\n)+", out)


def test_validate_catches_flipped_A2(capsys, tmp_path, monkeypatch):
    real = mrrlink.sensing.sensing_coefficients

    def corrupted(model):
        co = real(model)
        return co.__class__(**{**co.__dict__, "A2": -co.A2})

    monkeypatch.setattr(mrrlink.sensing, "sensing_coefficients", corrupted)
    code, out, _ = run_cli(capsys, "validate", "--only", "7", "--out", tmp_path)
    assert code == 1
    assert re.search(r"\[FAIL\] .*inversion", out)


def test_validate_rejects_unknown_criterion(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "validate", "--only", "99", "--out", tmp_path)
    assert code == 2
