import csv
import json

import pytest

from effectq.cli import main


def write_config(tmp_path, document, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return str(path)


def tiny_document(**extra):
    document = {
        "model": {"chain": {"uniform": {"count": 3}}, "delta_max": 3},
        "simulation": {"n_slots": 40},
    }
    document.update(extra)
    return document


def test_validate_only(tmp_path, capsys):
    cfg = write_config(tmp_path, tiny_document())
    assert main(["solve", cfg, "--validate-only"]) == 0
    assert "configuration ok" in capsys.readouterr().out


def test_solve_writes_result(tmp_path, capsys):
    cfg = write_config(tmp_path, tiny_document())
    out_dir = tmp_path / "out"
    assert main(["solve", cfg, "--out-dir", str(out_dir)]) == 0
    assert "mu*=" in capsys.readouterr().out
    payload = json.loads((out_dir / "solve_result.json").read_text())
    for key in (
        "mu_star",
        "eta",
        "achieved_cost",
        "achieved_goe",
        "outer_steps",
        "gain_trace",
        "pull_prob",
        "action_table",
        "policy_lo",
        "config_hash",
    ):
        assert key in payload
    assert len(payload["action_table"]) == 3
    assert all(len(row) == 3 for row in payload["action_table"])
    assert len(payload["pull_prob"]) == 9
    assert payload["achieved_cost"] <= 0.4 + 1e-6


def test_solve_with_slack_budget_needs_no_search(tmp_path):
    document = tiny_document()
    document["model"]["c_max"] = 0.6
    cfg = write_config(tmp_path, document)
    out_dir = tmp_path / "out"
    assert main(["solve", cfg, "--out-dir", str(out_dir)]) == 0
    payload = json.loads((out_dir / "solve_result.json").read_text())
    assert payload["mu_star"] == 0.0
    assert payload["outer_steps"] == 0
    assert payload["eta"] is None


def test_solve_default_model_shape(tmp_path):
    cfg = write_config(tmp_path, {})
    out_dir = tmp_path / "out"
    assert main(["solve", cfg, "--out-dir", str(out_dir)]) == 0
    payload = json.loads((out_dir / "solve_result.json").read_text())
    assert len(payload["action_table"]) == 10
    assert all(len(row) == 10 for row in payload["action_table"])
    assert len(payload["levels"]) == 10


def test_solve_unreachable_bracket_is_a_numerical_failure(tmp_path, capsys):
    document = tiny_document()
    document["model"]["c_max"] = 0.01
    document["solver"] = {"mu_hi": 1e-9}
    cfg = write_config(tmp_path, document)
    assert main(["solve", cfg, "--out-dir", str(tmp_path / "out")]) == 3
    assert "numerical failure:" in capsys.readouterr().err


def test_simulate_summary_line(tmp_path, capsys):
    document = tiny_document(controller={"kind": "periodic", "rate": 0.25})
    cfg = write_config(tmp_path, document)
    assert main(["simulate", cfg, "--out-dir", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out
    assert "policy=periodic" in out
    assert "n_slots=40" in out
    assert "seed=0" in out
    assert "avg_ngoe=" in out


def test_simulate_seed_override(tmp_path, capsys):
    document = tiny_document(controller={"kind": "binomial", "rate": 0.5})
    cfg = write_config(tmp_path, document)
    assert main(["simulate", cfg, "--seed", "5"]) == 0
    assert "seed=5" in capsys.readouterr().out


def test_simulate_trace_file(tmp_path):
    document = tiny_document(controller={"kind": "periodic", "rate": 0.5})
    cfg = write_config(tmp_path, document)
    out_dir = tmp_path / "out"
    assert main(["simulate", cfg, "--trace", "--out-dir", str(out_dir)]) == 0
    with open(out_dir / "simulate_trace.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["slot", "alpha", "success", "delta", "v_m", "ngoe", "cost"]
    assert len(rows) == 1 + 40
    assert rows[1][0] == "1"


def test_simulate_from_policy_file(tmp_path, capsys):
    policy = tmp_path / "policy.json"
    policy.write_text(
        json.dumps({"pull_prob": [1.0] * 9, "delta_max": 3, "levels": [0.0, 0.5, 1.0]})
    )
    document = tiny_document(controller={"kind": "policy_file", "path": str(policy)})
    cfg = write_config(tmp_path, document)
    assert main(["simulate", cfg]) == 0
    assert "policy=policy_file" in capsys.readouterr().out


def test_missing_config_file_is_io_failure(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "absent.json")]) == 4
    assert "i/o failure:" in capsys.readouterr().err


def test_malformed_json_is_config_failure(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["solve", str(path)]) == 2
    assert "config error:" in capsys.readouterr().err


def test_bad_field_is_config_failure(tmp_path, capsys):
    cfg = write_config(tmp_path, {"model": {"p_eps": 7}})
    assert main(["simulate", cfg]) == 2
    assert "model.p_eps" in capsys.readouterr().err


def test_experiment_snapshot(tmp_path):
    document = tiny_document(experiment={"snapshot_slots": 20})
    cfg = write_config(tmp_path, document)
    out_dir = tmp_path / "out"
    assert main(["experiment", cfg, "fig2", "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "fig2_snapshot.csv").exists()


def test_experiment_convergence_uses_config_name(tmp_path):
    document = tiny_document(experiment={"which": "fig5", "cost_coeffs": [0.5]})
    cfg = write_config(tmp_path, document)
    out_dir = tmp_path / "out"
    assert main(["experiment", cfg, "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "fig5_convergence.csv").exists()


def test_experiment_requires_a_name(tmp_path, capsys):
    cfg = write_config(tmp_path, tiny_document())
    assert main(["experiment", cfg]) == 2
    assert "experiment.which" in capsys.readouterr().err


def test_experiment_rejects_unknown_name(tmp_path):
    cfg = write_config(tmp_path, tiny_document())
    with pytest.raises(SystemExit) as excinfo:
        main(["experiment", cfg, "fig9"])
    assert excinfo.value.code == 2


def test_thresholds_command(tmp_path, capsys):
    document = {"experiment": {"threshold_costs": [0.5]}}
    cfg = write_config(tmp_path, document)
    out_dir = tmp_path / "out"
    assert main(["thresholds", cfg, "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "table1_thresholds_c0.5.csv").exists()
    assert "age thresholds" in capsys.readouterr().out


def test_subcommand_is_required():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2
