import csv
import io
import json
import math
from pathlib import Path

import pytest
import yaml

from onoffcov.cli import main
from onoffcov.config import ConfigError, parse_config, parse_density, parse_power, parse_ratio

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def base_config(**over):
    cfg = {
        "seed": 7,
        "network": {"tiers": [{"bs_density": "100 /km2"}], "user_density": 1e-3, "target_sinr": "0 dB"},
        "region": {"width": 800, "height": 800},
        "sweep": {"kind": "threshold", "thresholds": {"start": 0, "stop": 4, "step": 2}},
    }
    cfg.update(over)
    return cfg


def write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if name.endswith(".json") else yaml.safe_dump(cfg))
    return path


# --- units -------------------------------------------------------------------

def test_units():
    assert parse_density("k", "100 /km2") == pytest.approx(1e-4)
    assert parse_density("k", {"value": 1e-4, "unit": "/m2"}) == 1e-4
    assert parse_power("k", "30 dBm") == pytest.approx(1.0)
    assert parse_power("k", "0 dBW") == pytest.approx(1.0)
    assert parse_power("k", "400 mW") == pytest.approx(0.4)
    assert parse_power("k", 2) == 2.0
    assert parse_ratio("k", "0 dB") == 1.0
    assert parse_ratio("k", "10 dB") == pytest.approx(10.0)
    assert parse_ratio("k", 3.0) == 3.0


@pytest.mark.parametrize("func,raw", [(parse_density, "1 /ha"), (parse_density, -1.0), (parse_power, "1 hp"),
                                      (parse_ratio, "abc"), (parse_density, True), (parse_power, {"unit": "W"})])
def test_bad_units(func, raw):
    with pytest.raises(ConfigError):
        func("network.x", raw)


# --- schema --------------------------------------------------------------------

@pytest.mark.parametrize("mutate,key", [
    (lambda c: c.pop("seed"), "seed"),
    (lambda c: c.pop("sweep"), "sweep"),
    (lambda c: c.update(colour="red"), "colour"),
    (lambda c: c["network"].update(pathloss_exponent=2.0), "network.pathloss_exponent"),
    (lambda c: c["network"]["tiers"][0].update(bs_density="5 /ha"), "network.tiers[0].bs_density"),
    (lambda c: c["sweep"].update(thresholds={"start": 5, "stop": 2}), "sweep.thresholds"),
    (lambda c: c["sweep"].update(kind="spiral"), "sweep.kind"),
    (lambda c: c.update(occupancy="normal"), "occupancy"),
    (lambda c: c.update(trials=0), "trials"),
    (lambda c: c["network"].update(weighted_gamma={"tier": 0, "value": 10}), "network.user_density"),
    (lambda c: c["region"].update(boundary="sphere"), "region"),
])
def test_schema_errors_name_the_key(mutate, key):
    cfg = base_config()
    mutate(cfg)
    with pytest.raises(ConfigError) as err:
        parse_config(cfg)
    assert err.value.key == key


def test_overrides_and_weighted_gamma():
    cfg = base_config()
    cfg["network"] = {"tiers": [{"bs_density": 1e-4, "tx_power": "10 W"}, {"bs_density": 1e-3, "tx_power": "1 W"}],
                      "weighted_gamma": {"tier": 0, "value": 10}}
    cfg["sweep"] = {"thresholds": [[0, 2], {"stop": 1}]}
    parsed = parse_config(cfg, seed_override=99, trials_override=3)
    assert parsed.master_seed == 99 and parsed.trials == 3
    assert parsed.sweep == "threshold_grid"
    assert parsed.thresholds == ((0, 0), (0, 1), (2, 0), (2, 1))
    assert parsed.resolved()["network"]["weighted_gammas"][0] == pytest.approx(10.0)


def test_sinr_config():
    cfg = base_config()
    cfg["network"]["noise_power"] = "-104 dBm"
    parsed = parse_config(cfg)
    assert parsed.sinr is not None
    assert parsed.sinr.noise_power == pytest.approx(10 ** (-13.4))
    assert parsed.spec.noise_power == parsed.sinr.noise_power


# --- commands ------------------------------------------------------------------

def read_csv(path):
    return list(csv.DictReader(io.StringIO(Path(path).read_text())))


def test_analytic_command(tmp_path, capsys):
    path = write(tmp_path, base_config(trials=5))
    out = tmp_path / "a.csv"
    assert main(["analytic", "--config", str(path), "--out", str(out)]) == 0
    assert "ignoring" in capsys.readouterr().err
    rows = read_csv(out)
    assert [r["sweep_var"] for r in rows] == ["0", "2", "4"]
    assert float(rows[0]["analytic_exact"]) == pytest.approx(0.5622, abs=1e-4)
    assert rows[0]["simulated_mean"] == "" and rows[0]["trials"] == ""
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert manifest["resolved_config"]["seed"] == 7
    assert manifest["command"] == "analytic"


def test_run_is_byte_identical_across_threads(tmp_path):
    path = write(tmp_path, base_config(trials=4), "cfg.json")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", str(path), "--out", str(a), "--threads", "1"]) == 0
    assert main(["run", "--config", str(path), "--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.manifest.json").read_bytes() == (tmp_path / "b.csv.manifest.json").read_bytes()
    rows = read_csv(a)
    assert all(r["trials"] == "4" for r in rows)
    assert all(0 <= float(r["simulated_mean"]) <= 1 for r in rows)


def test_simulate_and_compare_tables(tmp_path, capsys):
    path = write(tmp_path, base_config(trials=3))
    an, sim = tmp_path / "an.csv", tmp_path / "sim.csv"
    assert main(["analytic", "--config", str(path), "--out", str(an)]) == 0
    assert main(["simulate", "--config", str(path), "--out", str(sim)]) == 0
    assert read_csv(sim)[0]["analytic_exact"] == ""
    capsys.readouterr()
    assert main(["compare", "--analytic-table", str(an), "--simulated-table", str(sim)]) == 0
    report = capsys.readouterr().out
    assert "max |simulated - analytic_exact|" in report


def test_compare_recomputes(tmp_path, capsys):
    path = write(tmp_path, base_config(trials=2))
    assert main(["compare", "--config", str(path), "--out", str(tmp_path / "c.csv")]) == 0
    assert "argmax analytic_exact" in capsys.readouterr().out


def test_simulate_requires_trials(tmp_path, capsys):
    path = write(tmp_path, base_config())
    assert main(["simulate", "--config", str(path)]) == 1
    assert "trials" in capsys.readouterr().err


def test_schema_error_exit_code(tmp_path, capsys):
    cfg = base_config()
    cfg["network"]["tiers"][0]["bs_density"] = "1 /ha"
    path = write(tmp_path, cfg)
    assert main(["analytic", "--config", str(path)]) == 1
    assert "network.tiers[0].bs_density" in capsys.readouterr().err
    assert main(["analytic", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_abort_exit_code(tmp_path, capsys):
    cfg = base_config(trials=60)
    cfg["network"]["tiers"][0]["bs_density"] = 1.5e-6  # ~22% of trials draw no BS
    cfg["network"]["user_density"] = 1e-4
    cfg["region"] = {"width": 1000, "height": 1000}
    path = write(tmp_path, cfg)
    assert main(["simulate", "--config", str(path)]) == 2
    assert "aborted" in capsys.readouterr().err


def test_random_vs_threshold_table(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["analytic", "--config", str(CONFIGS / "random-vs-threshold.yaml"), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 40
    keys = [(float(r["sweep_var"]), r["policy"]) for r in rows]
    assert keys == sorted(keys)
    for rnd, thr in zip(rows[::2], rows[1::2]):
        assert thr["policy"] == "threshold" and rnd["policy"] == "random"
        assert thr["sweep_var"] == rnd["sweep_var"]
        assert float(rnd["parameter"]) == pytest.approx(1 - float(rnd["sweep_var"]), abs=1e-12)


def test_hetnet_grid_json(tmp_path):
    out = tmp_path / "h.json"
    assert main(["analytic", "--config", str(CONFIGS / "hetnet-threshold-grid.yaml"), "--out", str(out), "--format", "json"]) == 0
    doc = json.loads(out.read_text())
    assert doc["grid"]["theta_1"] == list(range(0, 15, 2)) == doc["grid"]["theta_2"]
    values = doc["grid"]["values"]["analytic_exact"]
    assert len(values) == 8 and all(len(r) == 8 for r in values)
    assert len(doc["rows"]) == 64
    keys = [(r[1], r[2]) for r in doc["rows"]]
    assert keys == sorted(keys)


def test_homnet_sweep_config_rows(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["analytic", "--config", str(CONFIGS / "homnet-threshold-sweep.yaml"), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [int(r["sweep_var"]) for r in rows] == list(range(20))
    best = max(rows, key=lambda r: float(r["analytic_exact"]))
    assert best["sweep_var"] == "11"
    best_approx = max(rows, key=lambda r: float(r["analytic_approx"]))
    assert best_approx["sweep_var"] == "10"


def test_optimize_command(capsys):
    assert main(["optimize", "--config", str(CONFIGS / "homnet-threshold-sweep.yaml")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["closed_form"]["theta_opt"] == [10]
    assert report["exhaustive"]["theta_opt"] == [11]
    assert main(["optimize", "--config", str(CONFIGS / "hetnet-threshold-grid.yaml"), "--grid"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["closed_form"]["theta_opt"] == [10, 3]
    assert report["exhaustive"]["theta_opt"] == report["grid"]["theta_opt"]
    assert report["closed_form"]["small_gamma"]  # tier 2 sits below the large-gamma regime


def test_validate_command(tmp_path, capsys):
    cfg = base_config(trials=20)
    cfg["region"] = {"width": 1500, "height": 1500}
    cfg["sweep"] = {"thresholds": [0, 10]}
    path = write(tmp_path, cfg)
    code = main(["validate", "--config", str(path), "--samples", "3000"])
    out = capsys.readouterr().out
    assert code == 0, out
    assert out.count("PASS") >= 4


def test_sinr_run_leaves_closed_form_blank(tmp_path, capsys):
    path = write(tmp_path, base_config(trials=2))
    cfg = yaml.safe_load(path.read_text())
    cfg["network"]["noise_power"] = "-104 dBm"
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "s.csv"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0]["analytic_exact"] == "" and rows[0]["p_a"] != ""
    assert not math.isnan(float(rows[0]["simulated_mean"]))
