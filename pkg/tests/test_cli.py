import json

import pytest
from click.testing import CliRunner

from senile_walks.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_moments_const_zero(runner):
    res = run(runner, "moments", "--f", "const:0", "--dim", 1)
    assert res.exit_code == 0
    out = json.loads(res.output)
    assert out["mean_T"] == pytest.approx(2.0) and out["second_moment_T"] == pytest.approx(6.0)
    assert out["p_odd"] == pytest.approx(2 / 3)
    assert out["regime"] == {"persistent": "diffusive", "reinforced": "diffusive"}


def test_moments_heavy_tail_flags_subdiffusive(runner):
    out = json.loads(run(runner, "moments", "--f", "affine:1,0", "--dim", 1).output)
    assert out["mean_T"] is None and not out["mean_finite"]
    assert out["regime"]["reinforced"] == "reinforced-subdiffusive"


def test_moments_table(runner, tmp_path):
    table = tmp_path / "f.txt"
    table.write_text("-1\n")
    out = json.loads(run(runner, "moments", "--f", f"table:{table}").output)
    assert out["mean_T"] == 1.0


def test_simulate_is_byte_identical(runner, tmp_path):
    for name in ("a", "b"):
        res = run(runner, "simulate", "--model", "persistent", "--dim", 2, "--paths", 10, "--seed", 42,
                  "--steps", 50, "--out", tmp_path / name)
        assert res.exit_code == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 10
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    header = (tmp_path / "a" / files[0]).read_text().splitlines()[0]
    assert header == "step_index,axis,sign,T,L,x1,x2"


def test_simulate_worker_count_does_not_change_output(runner, tmp_path):
    for name, w in (("a", 1), ("b", 3)):
        run(runner, "simulate", "--mode", "senile", "--paths", 5, "--horizon", 80, "--workers", w,
            "--out", tmp_path / name)
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_reinforced_d1_p_one_exits_2(runner, tmp_path):
    res = run(runner, "simulate", "--model", "reinforced", "--dim", 1, "--f", "const:-1", "--out", tmp_path)
    assert res.exit_code == 2
    assert "d=1" in res.output


def test_coupled_mode_writes_identical_positions(runner, tmp_path):
    res = run(runner, "simulate", "--mode", "coupled", "--model", "reinforced", "--horizon", 100,
              "--out", tmp_path)
    assert res.exit_code == 0
    direct = (tmp_path / "coupled_00000_direct.csv").read_text()
    timechange = (tmp_path / "coupled_00000_timechange.csv").read_text()
    assert direct == timechange and direct.startswith("n,x1\n")


def test_json_format(runner, tmp_path):
    run(runner, "simulate", "--format", "json", "--steps", 5, "--out", tmp_path)
    rows = json.loads((tmp_path / "walk_00000.json").read_text())
    assert len(rows) == 5 and set(rows[0]) == {"step_index", "axis", "sign", "T", "L", "x1"}


def test_cap_breach_exits_3(runner, tmp_path):
    res = run(runner, "simulate", "--f", "affine:1,0", "--tcap", 10, "--steps", 2000, "--out", tmp_path)
    assert res.exit_code == 3


def test_regime_error_exits_3(runner):
    res = run(runner, "constants", "--model", "persistent", "--f", "affine:1,0")
    assert res.exit_code == 3


@pytest.mark.parametrize("args", [["--dim", 0], ["--f", "bogus:1"], ["--tgrid", "a,b"], ["--paths", -3]])
def test_bad_flags_exit_2(runner, args):
    assert run(runner, "moments", *args).exit_code == 2


def test_empty_config_exits_2(runner, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert run(runner, "verify", "--config", empty).exit_code == 2
    empty.write_text("{}")
    assert run(runner, "verify", "--config", empty).exit_code == 2


def test_unknown_config_key_exits_2(runner, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dimension": 2}))
    assert run(runner, "moments", "--config", cfg).exit_code == 2


def test_flags_override_config(runner, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"f": "const:0", "dim": 1}))
    out = json.loads(run(runner, "moments", "--config", cfg, "--dim", 2).output)
    assert out["d"] == 2 and out["mean_T"] == pytest.approx(4 / 3)


def test_constants_csv(runner):
    res = run(runner, "constants", "--model", "reinforced", "--dim", 2, "--steps", 10)
    lines = res.output.splitlines()
    assert lines[0] == "kind,d,C,correction,n,exact_msd" and len(lines) == 6  # n in {1,2,5,10,100}


def test_estimate_json_lines(runner):
    res = run(runner, "estimate", "--dim", 2, "--paths", 2000, "--steps", 10, "--format", "json")
    report = json.loads(res.output.splitlines()[0])
    assert report["passed"] and report["n_samples"] == 2000


def test_estimate_clt(runner):
    res = run(runner, "estimate", "--clt", "--dim", 2, "--paths", 1000, "--horizon", 500, "--format", "csv")
    assert res.exit_code == 0 and res.output.startswith("quantity,estimate,std_error,")


def test_verify_sabotage_exits_1(runner):
    res = run(runner, "verify", "--suite", "quick", "--sabotage", "--workers", 1)
    assert res.exit_code == 1


def test_verify_quick_passes_and_is_byte_identical(runner, tmp_path):
    outputs = []
    for name in ("a.json", "b.json"):
        res = run(runner, "verify", "--suite", "quick", "--seed", 1, "--workers", 2, "--out", tmp_path / name)
        assert res.exit_code == 0, res.output
        outputs.append((tmp_path / name).read_bytes())
    assert outputs[0] == outputs[1]
    assert len(json.loads(outputs[0])) == 9
