import json
from fractions import Fraction
from pathlib import Path

import pytest

from opte.cli import main
from opte.config import (
    BuildContext,
    ConfigError,
    load_config,
    parse_config,
    parse_estimator,
    run_experiment,
)
from opte.constructions import zoo_make
from opte.core import IndexK, eval_estimator
from opte.rng import RngStream

ROOT = Path(__file__).resolve().parent.parent
GOLDEN_CFG = ROOT / "configs" / "fair_coin_calibration.cfg"
GOLDEN_CSV = ROOT / "tests" / "golden" / "fair_coin_calibration.csv"

MINIMAL = """
[experiment]
name = mini
seed = 3
[problem]
zoo = fair_coin
n = 2
k0s = 4
[estimator]
expr = const(1/2)
[grid]
k0 = 4
k1 = 30
seeds = 0
"""


def test_parse_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.name == "mini" and cfg.seed == 3
    assert cfg.k0s == [4] and cfg.k1s == [30] and cfg.seeds == [0]
    assert cfg.checks == []


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = x\n")  # missing sections
    with pytest.raises(ConfigError):
        parse_config("garbage before any section\n")
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("k1 = 30", "k1 ="))


def test_zero_checks_exit_zero(tmp_path):
    cfg = parse_config(MINIMAL)
    res = run_experiment(cfg, out_dir=str(tmp_path))
    assert res.exit_code == 0
    lines = res.csv_path.read_text().splitlines()
    assert lines == ["check,K0,K1,seed,metric,value,threshold,pass"]


def test_failing_check_exit_one(tmp_path):
    cfg = parse_config(MINIMAL + "[check exact_error]\nthreshold = 0.1\n")
    res = run_experiment(cfg, out_dir=str(tmp_path))
    assert res.exit_code == 1
    summary = json.loads(res.json_path.read_text())
    assert summary["all_pass"] is False and summary["schema_version"] == 1


def ctx():
    return BuildContext(entry=zoo_make("fair_coin", n=2, k0s=(4,)), seed=0)


def test_estimator_expressions():
    K = IndexK(4, 30)
    c = ctx()
    assert eval_estimator(parse_estimator("const(1/2)", c), K, "00", RngStream(0)) == Fraction(1, 2)
    combo = parse_estimator("linear(1, const(1/4), 1, const(1/2))", c)
    assert eval_estimator(combo, K, "00", RngStream(0)) == Fraction(3, 4)
    quot = parse_estimator("cond_quotient(const(1/2), const(1/4), 1)", c)
    assert eval_estimator(quot, K, "00", RngStream(0)) == Fraction(1, 2)
    oracle = parse_estimator("oracle(identity)", c)
    assert eval_estimator(oracle, K, "01", RngStream(0)) == Fraction(1)
    nested = parse_estimator("clip(const(2), const(1/2), 0, 1)", c)
    assert eval_estimator(nested, K, "00", RngStream(0)) == Fraction(1, 2)
    erm = parse_estimator("erm()", c)
    assert erm.selection_seed == 0


def test_estimator_expression_errors():
    c = ctx()
    for bad in ("nope(1)", "linear(1, const(1))", "const(1/2) extra", "const(", "oracle(zzz)"):
        with pytest.raises(ConfigError):
            parse_estimator(bad, c)


def test_golden_csv_byte_identical(tmp_path):
    cfg = load_config(str(GOLDEN_CFG))
    res1 = run_experiment(cfg, out_dir=str(tmp_path / "j1"), jobs=1)
    res8 = run_experiment(cfg, out_dir=str(tmp_path / "j8"), jobs=8)
    golden = GOLDEN_CSV.read_bytes()
    assert res1.csv_path.read_bytes() == golden
    assert res8.csv_path.read_bytes() == golden
    assert res1.exit_code == 0


def test_cli_run_and_exit_codes(tmp_path, capsys):
    rc = main(["run", str(GOLDEN_CFG), "--out-dir", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "fair_coin_calibration.csv").exists()

    bad = tmp_path / "bad.cfg"
    bad.write_text("this is not a config\n")
    assert main(["run", str(bad), "--out-dir", str(tmp_path)]) == 2


def test_cli_zoo_list(capsys):
    assert main(["zoo", "list"]) == 0
    out = capsys.readouterr().out.split()
    assert "goldreich_levin" in out and "first_bit" in out


def test_cli_vm_trace(capsys):
    rc = main(["vm", "trace", "0011" + "1110", "8"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "1\t0\tPUSH1\t0"
    assert out[1] == "2\t1\tEMIT1\t1"
    assert out[-1].startswith("output=")


def test_cli_verify_reduction_identity(tmp_path, capsys):
    cfg = tmp_path / "red.cfg"
    cfg.write_text(
        "[reduction]\nkind = identity\n"
        "[source]\nzoo = first_bit\nn = 2\nk0s = 4\n"
        "[grid]\nk0 = 4\nk1 = 30\n"
    )
    rc = main(["verify-reduction", str(cfg)])
    assert rc == 0
    rep = json.loads(capsys.readouterr().out.splitlines()[0])
    assert rep["pass"] is True and rep["K"] == [4, 30]


def test_cli_verify_reduction_canonical(tmp_path, capsys):
    cfg = tmp_path / "red.cfg"
    cfg.write_text(
        "[reduction]\nkind = canonical\nphi = 1\nr = 10\ns = 10\n"
        "[source]\nzoo = first_bit\nencoded = true\nk0s = 2\n"
        "[grid]\nk0 = 2\nk1 = 6\n"
    )
    rc = main(["verify-reduction", str(cfg)])
    assert rc == 0
    rep = json.loads(capsys.readouterr().out.splitlines()[0])
    assert rep["residual_ii"] == 0.0 and rep["residual_iii"] == 0.0
    assert rep["residual_i"] <= 1e-9


def test_erm_audit_file_emitted(tmp_path):
    cfg = parse_config(
        "[experiment]\nname = audit\nseed = 2\n"
        "[problem]\nzoo = first_bit\nk0s = 4\n"
        "[estimator]\nexpr = erm()\n"
        "[grid]\nk0 = 4\nk1 = 30\nseeds = 0\n"
        "[check exact_error]\nthreshold = 1\n"
    )
    res = run_experiment(cfg, out_dir=str(tmp_path))
    audit = (tmp_path / "audit.audit").read_text().splitlines()
    assert len(audit) == 1
    k0, k1, seed, program, risk = audit[0].split("\t")
    assert (k0, k1, seed) == ("4", "30", "0")
    assert set(program) <= {"0", "1", "-"}
    float(risk)


def test_cli_format_json(tmp_path, capsys):
    rc = main(["run", str(GOLDEN_CFG), "--out-dir", str(tmp_path), "--format", "json"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["schema_version"] == 1 and out["all_pass"] is True


def test_problem_from_ensemble_file(tmp_path):
    ens = tmp_path / "ens.tsv"
    ens.write_text("4\t0\t0.5\n4\t1\t0.5\n")
    cfg = parse_config(
        "[experiment]\nname = filetest\nseed = 1\n"
        f"[problem]\nfile = {ens}\nf = first_bit\n"
        "[estimator]\nexpr = const(1/2)\n"
        "[grid]\nk0 = 4\nk1 = 30\nseeds = 0\n"
        "[check exact_error]\nthreshold = 0.2500000001\n"
    )
    res = run_experiment(cfg, out_dir=str(tmp_path))
    assert res.exit_code == 0
    assert any("0.25," in line for line in res.csv_path.read_text().splitlines())


def test_cli_seed_override(tmp_path):
    rc = main(["run", str(GOLDEN_CFG), "--out-dir", str(tmp_path / "a"), "--seed", "99"])
    assert rc == 0
    a = (tmp_path / "a" / "fair_coin_calibration.csv").read_text()
    assert a != GOLDEN_CSV.read_text()  # mc rows move with the seed
    summary = json.loads((tmp_path / "a" / "fair_coin_calibration.json").read_text())
    assert summary["seed"] == 99


def test_grid_bounds_rejected():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("k1 = 30", "k1 = 2000000"))
