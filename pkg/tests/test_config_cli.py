import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pricing_lab import cli
from pricing_lab.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "schema_version": 1,
    "seed": 0,
    "agents": [{"utility": "linear", "value": {"family": "uniform", "lo": 0, "hi": 1}}],
    "objective": "revenue",
    "grid": 20,
    "posting_grid": 200,
    "samples": 5000,
}


def write_cfg(tmp_path, **changes):
    data = {**BASE, **changes}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["q", "payoff"]
    return np.array([[float(a), float(b)] for a, b in rows[1:]])


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.n_agents == cfg.env().n


@pytest.mark.parametrize("changes,path", [
    ({"seed": -1}, "seed"),
    ({"grid": 1}, "grid"),
    ({"objective": "profit"}, "objective"),
    ({"agents": []}, "agents"),
    ({"surprise": 1}, "surprise"),
    ({"agents": [{"utility": "linear", "value": {"family": "uniform", "lo": 2, "hi": 1}}]},
     "agents.0.value"),
    ({"environment": {"kind": "k-unit", "n": 3, "k": 1}}, "environment"),
])
def test_config_errors_name_the_field(tmp_path, capsys, changes, path):
    code = cli.main(["curve", "--config", write_cfg(tmp_path, **changes), "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert err.startswith("config error:") and path in err


def test_seed_is_required():
    data = dict(BASE)
    del data["seed"]
    with pytest.raises(ConfigError) as info:
        parse_config(data)
    assert info.value.path == "seed"


def test_missing_and_malformed_config(tmp_path):
    assert cli.main(["curve", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["curve", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["curve"]) == cli.EXIT_CONFIG
    assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG


def test_curve_outputs_share_grid_and_match_for_linear(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["curve", "--config", write_cfg(tmp_path), "--out", str(out)]) == 0
    posting, hull, exante = (read_csv(out / f"{k}.csv") for k in ("posting", "hull", "exante"))
    np.testing.assert_array_equal(posting[:, 0], exante[:, 0])
    np.testing.assert_array_equal(posting[:, 0], hull[:, 0])
    # linear agents: the ex ante optimum is a posted price, so the curves coincide
    np.testing.assert_allclose(exante[:, 1], hull[:, 1], atol=1e-4)
    assert np.all(hull[:, 1] >= posting[:, 1] - 1e-12)
    summary = json.loads((out / "curve_summary.json").read_text())
    assert summary["files"] == ["posting.csv", "hull.csv", "exante.csv"]
    assert len(summary["config_digest"]) == 16


def test_welfare_linear_hull_equals_curve(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["curve", "--config", write_cfg(tmp_path), "--objective", "welfare",
                     "--out", str(out)])
    assert code == 0
    posting, hull = read_csv(out / "posting.csv"), read_csv(out / "hull.csv")
    np.testing.assert_allclose(hull[:, 1], posting[:, 1], atol=1e-9)
    q = posting[:, 0]
    np.testing.assert_allclose(posting[:, 1], q - q ** 2 / 2, atol=5e-3)


def test_multi_agent_curves_get_suffixes(tmp_path):
    out = tmp_path / "out"
    agents = BASE["agents"] + [{"utility": "public-budget",
                                "value": {"family": "uniform", "lo": 0, "hi": 1}, "budget": 0.5}]
    assert cli.main(["curve", "--config", write_cfg(tmp_path, agents=agents, grid=10),
                     "--out", str(out)]) == 0
    assert {p.name for p in out.glob("*.csv")} == {
        f"{k}_{j}.csv" for k in ("posting", "hull", "exante") for j in (0, 1)}


def test_closeness_exit_codes(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["closeness", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "closeness.json").read_text())
    assert rep["violated"] is False and rep["zeta"] <= rep["bound"] + cli.CLOSENESS_SLACK
    monkeypatch.setattr(cli, "CLOSENESS_SLACK", -100.0)
    assert cli.main(["closeness", "--config", cfg, "--out", str(out)]) == cli.EXIT_REGRESSION


@pytest.mark.parametrize("mech", ["spp", "opp", "mpm", "ap"])
def test_simulate_runs_each_mechanism(tmp_path, mech):
    out = tmp_path / "out"
    agents = [{**BASE["agents"][0], "count": 3}]
    code = cli.main(["simulate", "--config", write_cfg(tmp_path, agents=agents),
                     "--mechanism", mech, "--out", str(out)])
    payload = json.loads((out / f"simulate_{mech}.json").read_text())
    assert code == (cli.EXIT_REGRESSION if payload["regression"] else cli.EXIT_OK)
    assert payload["regression"] is False
    assert payload["mean"] > 0 and payload["ear"] >= payload["mean"] - 3 * payload["se"] - 1e-3
    assert payload["guarded"] is (mech != "ap")


def test_simulate_regression_guard(tmp_path, monkeypatch):
    real = cli.simulate

    def pessimistic(cfg, threads=None):
        payload = real(cfg, threads)
        payload["regression"] = True
        return payload

    monkeypatch.setattr(cli, "simulate", pessimistic)
    assert cli.main(["simulate", "--config", write_cfg(tmp_path), "--out",
                     str(tmp_path / "o")]) == cli.EXIT_REGRESSION


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg, threads=None):
        raise ArithmeticError("residual too large")

    monkeypatch.setattr(cli, "simulate", boom)
    assert cli.main(["simulate", "--config", write_cfg(tmp_path),
                     "--out", str(tmp_path / "o")]) == cli.EXIT_NUMERICAL


def test_outputs_have_no_timestamps(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg = write_cfg(tmp_path)
    for out in (out_a, out_b):
        assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert (out_a / "simulate_spp.json").read_bytes() == (out_b / "simulate_spp.json").read_bytes()


def test_demo_unbounded_gap(tmp_path, capsys):
    assert cli.main(["demo", "unbounded-gap", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "demo_unbounded-gap.json").read_text())
    assert rep["growth_1e3_to_1e6"] == pytest.approx(0.21, abs=0.01)
    sums = [p["revenue_lower_bound"] for p in rep["partial_sums"]]
    assert np.all(np.diff(sums) > 0)
    assert rep["posting_revenue_max"] < 1.6


def test_demo_unbounded_gap_rejects_small_m(capsys):
    assert cli.main(["demo", "unbounded-gap", "--m", "5"]) == cli.EXIT_CONFIG
    assert "--m" in capsys.readouterr().err


def test_demo_anonymous_welfare(tmp_path):
    assert cli.main(["demo", "anonymous-welfare", "--eps", "0.1", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "demo_anonymous-welfare.json").read_text())
    assert rep["anonymous_welfare"] <= 20 and rep["optimal_welfare"] == pytest.approx(100)
    assert rep["ratio"] >= rep["ratio_floor"]
    assert cli.main(["demo", "anonymous-welfare", "--eps", "0"]) == cli.EXIT_CONFIG


def test_harmonic_tail_sums_match_direct_sum():
    got = cli.harmonic_tail_sums([10, 1000])
    for m, v in got.items():
        i = np.arange(2, m + 1, dtype=float)
        assert v == pytest.approx(np.sum(1.0 / (i * np.log(i))) / (2 * cli.VARPI), rel=1e-12)


@pytest.mark.parametrize("p", [1.0, 2.5, 7.0, 40.3])
def test_equal_revenue_posting_matches_budget_sum(p):
    i = np.arange(1, 2_000_001, dtype=float)
    spend = np.sum(np.minimum(p, i) / (cli.VARPI * i ** 2)) + p / (cli.VARPI * 2_000_000)
    sell = min(1.0, 1.0 / np.log(p)) if p > 1 else 1.0
    assert cli.equal_revenue_posting([p])[0] == pytest.approx(sell * spend, rel=1e-6)
