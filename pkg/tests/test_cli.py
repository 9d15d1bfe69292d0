"""Command line: subcommands, exit codes, output determinism, atomic writes."""

import hashlib
import json

import pytest

from weathervane import cli, forecast, ledger, sim


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- cas ------------------------------------------------------------------------------

def test_cas_put_empty_file_prints_known_digest(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.write_bytes(b"")
    code, out, _ = run(capsys, "cas", "put", str(empty),
                       "--store", str(tmp_path / "store"))
    assert code == 0
    # independent oracle: published SHA-256 of the empty input
    assert out.strip() == ("sha256-e3b0c44298fc1c149afbf4c8996fb924"
                           "27ae41e4649b934ca495991b7852b855")


def test_cas_put_get_round_trip(tmp_path, capsys):
    blob = tmp_path / "blob.bin"
    blob.write_bytes(b"\x01\x02weather")
    store = str(tmp_path / "store")
    code, out, _ = run(capsys, "cas", "put", str(blob), "--store", store, "--json")
    assert code == 0
    cid = json.loads(out)["cid"]
    out_file = tmp_path / "fetched.bin"
    code, _, _ = run(capsys, "cas", "get", cid, "--store", store,
                     "--out", str(out_file))
    assert code == 0
    assert out_file.read_bytes() == b"\x01\x02weather"


def test_cas_get_unknown_cid_is_domain_error(tmp_path, capsys):
    code, _, err = run(capsys, "cas", "get",
                       "sha256-" + "0" * 64, "--store", str(tmp_path / "store"))
    assert code == 1
    assert json.loads(err)["error"] == "not-found"


# --- simulate --------------------------------------------------------------------------

def test_simulate_twice_byte_identical(tmp_path, capsys, scenarios_dir):
    out_a = tmp_path / "a.json"
    out_b = tmp_path / "b.json"
    scenario = str(scenarios_dir / "reference.toml")
    assert run(capsys, "simulate", "--scenario", scenario, "--out", str(out_a))[0] == 0
    assert run(capsys, "simulate", "--scenario", scenario, "--out", str(out_b))[0] == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    report = json.loads(out_a.read_text())
    assert report["seed"] == 42


def test_simulate_seed_override_changes_report(tmp_path, capsys, scenarios_dir):
    scenario = str(scenarios_dir / "reference.toml")
    out_a = tmp_path / "a.json"
    out_b = tmp_path / "b.json"
    run(capsys, "simulate", "--scenario", scenario, "--out", str(out_a))
    run(capsys, "simulate", "--scenario", scenario, "--seed", "7",
        "--out", str(out_b))
    assert out_a.read_bytes() != out_b.read_bytes()
    assert json.loads(out_b.read_text())["seed"] == 7


def test_simulate_missing_scenario_exits_1_with_json_error(capsys):
    code, _, err = run(capsys, "simulate", "--scenario", "missing.toml")
    assert code == 1
    parsed = json.loads(err)
    assert set(parsed) == {"error", "detail"}


def test_simulate_sweep_writes_one_report_per_seed(tmp_path, capsys, scenarios_dir):
    # small scenario to keep the sweep quick
    scenario = tmp_path / "tiny.toml"
    scenario.write_text(
        "seed = 3\nnum_honest_clients = 2\nrounds = 2\nseries_length = 480\n")
    out_dir = tmp_path / "reports"
    code, _, _ = run(capsys, "simulate", "--scenario", str(scenario),
                     "--sweep", "3", "--out", str(out_dir), "--json")
    assert code == 0
    files = sorted(p.name for p in out_dir.iterdir())
    assert files == ["report-3.json", "report-4.json", "report-5.json"]


def test_simulate_ledger_out_round_trips(tmp_path, capsys, scenarios_dir):
    scenario = tmp_path / "tiny.toml"
    scenario.write_text(
        "seed = 3\nnum_honest_clients = 2\nrounds = 2\nseries_length = 480\n")
    state_file = tmp_path / "final.wfl"
    code, _, _ = run(capsys, "simulate", "--scenario", str(scenario),
                     "--out", str(tmp_path / "r.json"),
                     "--ledger-out", str(state_file))
    assert code == 0
    state = ledger.decode_state(state_file.read_bytes())
    assert len(state.models) == 2

    code, out, _ = run(capsys, "ledger-inspect", str(state_file), "--json")
    assert code == 0
    summary = json.loads(out)
    assert summary["next_sequence"] == state.next_sequence
    assert summary["state_digest"] == ledger.state_digest(state).hex()


# --- forecast ---------------------------------------------------------------------------

@pytest.fixture
def weather_csv(tmp_path):
    data = sim.generate_weather(5, 400)
    path = tmp_path / "weather.csv"
    forecast.write_csv(data, path)
    return path


def test_forecast_fit_writes_canonical_model(tmp_path, capsys, weather_csv):
    out = tmp_path / "model.wfm"
    code, stdout, _ = run(capsys, "forecast", "fit", "--kind", "ar",
                          "--order", "2", "--data", str(weather_csv),
                          "--out", str(out), "--json")
    assert code == 0
    blob = out.read_bytes()
    model = forecast.decode_model(blob)
    assert model.kind == "ar" and model.order == 2
    assert json.loads(stdout)["cid"] == "sha256-" + hashlib.sha256(blob).hexdigest()


def test_forecast_fit_deterministic(tmp_path, capsys, weather_csv):
    a, b = tmp_path / "a.wfm", tmp_path / "b.wfm"
    for out in (a, b):
        run(capsys, "forecast", "fit", "--kind", "seasonal_naive",
            "--period", "24", "--data", str(weather_csv), "--out", str(out))
    assert a.read_bytes() == b.read_bytes()


def test_forecast_eval_reports_metrics_and_skill(tmp_path, capsys, weather_csv):
    model_path = tmp_path / "model.wfm"
    run(capsys, "forecast", "fit", "--kind", "ar", "--order", "6",
        "--data", str(weather_csv), "--out", str(model_path))
    code, out, _ = run(capsys, "forecast", "eval", "--model", str(model_path),
                       "--data", str(weather_csv), "--json")
    assert code == 0
    payload = json.loads(out)
    assert payload["kind"] == "ar"
    assert payload["metrics"]["rmse"] >= payload["metrics"]["mae"] >= 0
    assert 0 <= payload["skill_score_bp"] <= 10000


def test_forecast_fit_bad_kind_is_usage_error(tmp_path, capsys, weather_csv):
    with pytest.raises(SystemExit) as exc:
        cli.main(["forecast", "fit", "--kind", "lstm",
                  "--data", str(weather_csv), "--out", str(tmp_path / "x")])
    assert exc.value.code == 2


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["cas", "put", "x", "--bogus"])
    assert exc.value.code == 2


def test_failed_simulate_leaves_no_partial_output(tmp_path, capsys):
    scenario = tmp_path / "bad.toml"
    scenario.write_text(
        "seed = 1\nnum_honest_clients = 0\nrounds = 1\nseries_length = 480\n")
    out = tmp_path / "report.json"
    code, _, err = run(capsys, "simulate", "--scenario", str(scenario),
                       "--out", str(out))
    assert code == 1
    assert json.loads(err)["error"] == "invalid-config"
    assert not out.exists()
    assert not list(tmp_path.glob("report.json.*"))  # no temp litter
