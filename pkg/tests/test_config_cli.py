import json

import pytest
from hypothesis import given, settings, strategies as st

from osfrl.cli import load_preset, main
from osfrl.config import (ConfigError, ExperimentConfig, ValidationError, emit_config, eval_expression,
                          parse_agents, parse_config, parse_config_text)

MINIMAL = """
env.kind = backlogged
env.H = 1
env.K = 20
env.costs.o = 2
env.costs.b = 10
env.demand.offset_rule = (10 - h) / 2
grid.max = 10
grid.step = 0.05
agents = fql, hql
run.reps = 2
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(MINIMAL)
    return path


def test_table2_preset():
    cfg = load_preset(2)
    assert (cfg.H, cfg.K, cfg.o, cfg.b) == (1, 100, 2.0, 10.0)
    assert cfg.spec.grid.max_level == 10.0 and cfg.spec.grid.step == 0.05
    assert cfg.spec.demand.offsets == (4.5,)
    assert [a.label for a in cfg.agents] == ["FQL", "HQL", "AggQL", "QL-UCB"]


@pytest.mark.parametrize("table_id", [2, 3, 4, 5])
def test_presets_round_trip(table_id):
    cfg = load_preset(table_id)
    assert parse_config_text(emit_config(cfg)) == cfg


def test_grid_scales_with_horizon():
    cfg = load_preset(3).with_overrides(H=5)
    assert cfg.spec.grid.max_level == 10.0
    assert cfg.spec.demand.offsets == (1.0, 2.0, 3.0, 4.0, 5.0)


def test_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.x1 == 0.0 and cfg.workers == 1
    assert parse_config_text(MINIMAL.replace("run.reps = 2", "")).reps == 300
    hql = parse_agents("hql")[0]
    assert hql.kwargs() == {}


def test_empty_file_lists_missing_keys():
    with pytest.raises(ConfigError) as err:
        parse_config_text("")
    for key in ("env.kind", "env.H", "env.K", "grid.max", "grid.step", "agents"):
        assert key in str(err.value)


def test_unknown_and_duplicate_keys_report_line():
    with pytest.raises(ConfigError, match=r":3: unknown key 'env.colour'"):
        parse_config_text("env.kind = backlogged\n\nenv.colour = red\n")
    with pytest.raises(ConfigError, match=r":2: duplicate key 'env.H'"):
        parse_config_text("env.H = 1\nenv.H = 2\n")
    with pytest.raises(ConfigError, match=r":1: env.H expects int"):
        parse_config_text("env.H = one\n")


def test_validation_errors():
    with pytest.raises(ValidationError, match="not a multiple of step"):
        parse_config_text(MINIMAL.replace("grid.step = 0.05", "grid.step = 0.3"))
    with pytest.raises(ValidationError):
        parse_config_text(MINIMAL.replace("env.costs.b = 10", "env.costs.b = -1"))
    with pytest.raises(ValidationError):
        parse_config_text(MINIMAL.replace("env.kind = backlogged", "env.kind = lost-sales")
                          .replace("env.costs.b = 10", "env.costs.p = 10"))  # FQL needs full feedback


def test_agent_list_parsing():
    agents = parse_agents("fql, hql(radius_mode=theory), aggql(agg_step=0.5, bonus_scale=2), qlucb")
    assert agents[1].kwargs() == {"radius_mode": "theory"}
    assert agents[2].kwargs() == {"agg_step": 0.5, "bonus_scale": 2.0}
    with pytest.raises(ConfigError):
        parse_agents("fql(radius_mode=theory)")
    with pytest.raises(ConfigError):
        parse_agents("fql, fql")


def test_expressions():
    assert eval_expression("(10 - h) / 2", h=3) == 3.5
    assert eval_expression("0.5 + 1/sqrt(K)", K=100) == pytest.approx(0.6)
    with pytest.raises(ConfigError):
        eval_expression("__import__('os')")
    with pytest.raises(ConfigError):
        eval_expression("h.real", h=1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 500), st.integers(1, 400), st.integers(0, 2**64 - 1),
       st.sampled_from([0.05, 0.1, 0.25]), st.floats(0, 3), st.sampled_from(["theory", "experiment"]))
def test_emit_parse_round_trip(H, K, reps, seed, step, x1, mode):
    cfg = ExperimentConfig("backlogged", H, K, 2.0 * H, step, parse_agents(f"fql, hql(radius_mode={mode})"),
                           o=2.0, b=10.0, offset_rule="h", reps=reps, base_seed=seed, x1=x1)
    assert parse_config_text(emit_config(cfg)) == cfg


def test_cmd_run_writes_three_files(cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(cfg_file), "--out", str(out), "--reps", "3"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["run_manifest.json", "run_results.csv", "run_summary.csv"]
    rows = (out / "run_results.csv").read_text().splitlines()
    assert len(rows) == 1 + 3 * 3
    manifest = json.loads((out / "run_manifest.json").read_text())
    rerun = parse_config_text(manifest["config"])
    assert rerun.reps == 3 and rerun == parse_config(cfg_file).with_overrides(reps=3)


def test_cmd_run_seed_is_deterministic(cfg_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg_file), "--out", str(a), "--seed", "42"]) == 0
    assert main(["run", str(cfg_file), "--out", str(b), "--seed", "42", "--workers", "2"]) == 0
    for name in ("run_results.csv", "run_summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_env_var_sets_output_dir(cfg_file, tmp_path, monkeypatch):
    monkeypatch.setenv("OSFRL_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg_file)]) == 0
    assert (tmp_path / "env" / "run_summary.csv").exists()


def test_exit_codes(tmp_path, cfg_file):
    bad = tmp_path / "bad.cfg"
    bad.write_text(MINIMAL + "mystery = 1\n")
    assert main(["run", str(bad)]) == 1
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(cfg_file), "--out", str(blocker / "sub")]) == 2


def test_cmd_oracle(cfg_file, capsys):
    assert main(["oracle", str(cfg_file)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "# S*_1 = 5.35"
    assert "h,y,q_star" in out
    assert len([line for line in out if line.startswith("1,")]) == 201


def test_cmd_verify_quick(capsys):
    assert main(["verify", "--quick"]) == 0
    out = capsys.readouterr().out
    assert "PASS weights.bounds" in out
    assert "tables.cell" not in out
