import json
import math

import pytest

from nsklab.cli import emit_canonical, main, normalize, parse_config_text
from nsklab.errors import UnknownKey, ValidationError
from nsklab.grid import read_checkpoint

BASE = """
[model]
mu_star = 1.0
nu_star = 1.0
kappa_star = 0.5
rho_star = 1.0

[pressure]
family = "polytropic"
A = 0.5
gamma_exp = 2.0
"""

EXPONENTS = """
[exponents]
p = 4
q1 = "24/11"
q2 = 8
tau = "1/2"
"""

SMALL_SIM = BASE + EXPONENTS + """
[grid]
dim = 3
box_length = 20.0
modes = 8

[integrator]
dt = 0.1
t_end = 0.4
stride = 2

[data]
family = "gaussian"
width = 3.0
target_I = 1e-3
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _manifest(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


def test_minimal_config_defaults():
    cfg = parse_config_text(BASE)
    assert cfg.exponents is None
    assert cfg.grid.dim == 3 and cfg.grid.modes == 32 and cfg.grid.box_length == 40.0
    assert cfg.tree["integrator"]["scheme"] == "etd2rk"
    assert cfg.seed == 0
    assert cfg.params.delta_star == pytest.approx(0.5)


def test_required_value_missing():
    with pytest.raises(ValidationError) as err:
        parse_config_text(BASE.replace("rho_star = 1.0", ""))
    assert err.value.key == "model.rho_star"


def test_zero_viscosity_rejected():
    with pytest.raises(ValidationError) as err:
        parse_config_text(BASE.replace("mu_star = 1.0", "mu_star = 0.0"))
    assert err.value.key == "model.mu_star"


def test_unknown_key_and_section():
    with pytest.raises(UnknownKey) as err:
        parse_config_text(BASE + "\n[grid]\nsize = 3\n")
    assert err.value.key == "grid.size"
    with pytest.raises(UnknownKey):
        normalize({"extras": {}})


def test_type_checks():
    with pytest.raises(ValidationError) as err:
        parse_config_text(BASE + '\n[grid]\nmodes = "many"\n')
    assert err.value.key == "grid.modes"
    with pytest.raises(ValidationError):
        parse_config_text(BASE + "\n[integrator]\nnonlinear = 1\n")


def test_canonical_idempotent():
    cfg = parse_config_text(SMALL_SIM)
    again = parse_config_text(cfg.canonical())
    assert again.canonical() == cfg.canonical()
    assert again.config_hash == cfg.config_hash
    assert emit_canonical({"b": {"y": 1, "x": None}, "a": {}}).startswith("[a]")


def test_hash_changes_with_content():
    a = parse_config_text(SMALL_SIM)
    b = parse_config_text(SMALL_SIM.replace("dt = 0.1", "dt = 0.05"))
    assert a.config_hash != b.config_hash and len(a.config_hash) == 64


def test_validate_command(tmp_path):
    out = tmp_path / "out"
    rc = main(["validate", "--config", _write(tmp_path, BASE + EXPONENTS), "--out", str(out)])
    assert rc == 0
    man = _manifest(out / "manifest.txt")
    assert man["command"] == "validate"
    checks = [ln for ln in (out / "manifest.txt").read_text().splitlines() if ln.startswith("check.")]
    assert len(checks) == 10 and all(ln.endswith("=pass") for ln in checks)
    assert (out / "config.toml").exists()


def test_eigen_command(tmp_path):
    out = tmp_path / "eig"
    cfg = BASE + "\n[eigen]\nxi_min = 1e-3\nxi_max = 1e3\nper_decade = 4\n"
    assert main(["eigen", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    man = _manifest(out / "manifest.txt")
    assert man["check.stability"] == "pass" and man["check.vieta"] == "pass"
    assert len((out / "eigen.csv").read_text().splitlines()) == 1 + 25


def test_config_error_exit_code(tmp_path, capsys):
    out = tmp_path / "bad"
    path = _write(tmp_path, BASE.replace("mu_star = 1.0", "mu_star = 0.0"))
    assert main(["validate", "--config", path, "--out", str(out)]) == 2
    rep = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rep["key"] == "model.mu_star"
    assert json.loads((out / "error.json").read_text()) == rep


def test_missing_config_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 2


def test_inadmissible_decay(tmp_path):
    out = tmp_path / "dec"
    cfg = BASE + "\n[grid]\nmodes = 8\n\n[decay]\np = 1.5\nq = 3.0\n"
    assert main(["decay", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 3
    rep = json.loads((out / "error.json").read_text())
    assert rep["error"] == "InadmissiblePQ" and rep["condition"] == "1 < q <= 2 <= p <= inf"


def test_simulate_and_restart(tmp_path):
    out = tmp_path / "sim"
    path = _write(tmp_path, SMALL_SIM)
    assert main(["simulate", "--config", path, "--out", str(out), "--seed", "3"]) == 0
    man = _manifest(out / "manifest.txt")
    assert man["seed"] == "3" and man["check.range_condition"] == "pass"
    assert float(man["data_size_I"]) == pytest.approx(1e-3, rel=1e-12)
    assert man["config_hash"] == parse_config_text((out / "config.toml").read_text()).config_hash
    snaps = (out / "snapshots.csv").read_text().splitlines()
    assert snaps[0] == "t,theta_zero_mode_re,l2_norm" and len(snaps) == 1 + 3
    final, _ = read_checkpoint(out / "final.kspec")
    assert final.time == pytest.approx(0.4)

    out2 = tmp_path / "sim2"
    rc = main(["simulate", "--config", path, "--out", str(out2), "--restart", str(out / "final.kspec")])
    assert rc == 0
    assert _manifest(out2 / "manifest.txt")["restart_from"] == "final.kspec"
    again, _ = read_checkpoint(out2 / "final.kspec")
    assert again.time == pytest.approx(0.8)


def test_simulate_picard(tmp_path):
    out = tmp_path / "pic"
    cfg = SMALL_SIM.replace("stride = 2", "stride = 2\npicard = true\npicard_tol = 1e-12")
    assert main(["simulate", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    rows = (out / "picard_residuals.csv").read_text().splitlines()
    assert rows[0] == "iteration,residual" and float(rows[-1].split(",")[1]) < 1e-12


@pytest.mark.parametrize("seed", ["-1", str(2**64)])
def test_seed_range(tmp_path, seed):
    assert main(["validate", "--config", _write(tmp_path, BASE), "--out", str(tmp_path), "--seed", seed]) == 2


def test_threads_validation(tmp_path):
    assert main(["validate", "--config", _write(tmp_path, BASE), "--out", str(tmp_path), "--threads", "0"]) == 2


def test_unknown_command(tmp_path):
    with pytest.raises(SystemExit):
        main(["explode", "--config", _write(tmp_path, BASE)])


def test_resolvent_command(tmp_path):
    out = tmp_path / "res"
    cfg = BASE + """
[grid]
box_length = 10.0
modes = 8

[data]
width = 1.5

[resolvent]
n_angles = 4
per_decade = 2
lambda_max = 100.0
"""
    assert main(["resolvent", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    man = _manifest(out / "manifest.txt")
    assert man["check.resolvent_finite"] == "pass"
    assert math.isfinite(float(man["resolvent.sup"]))
