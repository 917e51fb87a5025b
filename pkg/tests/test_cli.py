"""Command-line interface: flags, output formats, and exit codes."""

import json
import subprocess
import sys

import pytest

from cobotplan.bench import generate_random_htm
from cobotplan.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, main
from cobotplan.graph import TabularPolicy
from cobotplan.htm import chair_htm, load_htm
from cobotplan.intent import Goal, GoalSet, save_goals, save_trajectory, simulate_trajectory
from cobotplan.qlearn import QTable
from cobotplan.scenario import ScenarioConfig, save_scenario


@pytest.fixture()
def det_file(tmp_path, det_scenario):
    path = tmp_path / "det.json"
    save_scenario(det_scenario, str(path))
    return str(path)


# ---------------------------------------------------------------------------
# simulate


def test_simulate_writes_a_trace_and_a_summary(tmp_path, det_file, capsys):
    trace = tmp_path / "trace.jsonl"
    code = main([
        "simulate", "--builtin", "chair", "--scenario", det_file,
        "--policy", "greedy", "--seed", "0", "--out", str(trace),
    ])
    assert code == EXIT_OK
    records = [json.loads(line) for line in trace.read_text().splitlines()]
    assert records
    makespan = 0
    for k, rec in enumerate(records, start=1):
        assert set(rec) == {"k", "event", "dt", "state", "robot_action", "reward"}
        assert rec["k"] == k
        assert rec["reward"] == -rec["dt"]
        assert set(rec["state"]) == {
            "s_a", "human_action", "t_h", "t_r", "detected", "robot_action"
        }
        makespan += rec["dt"]
    assert all(v == 1 for v in records[-1]["state"]["s_a"])
    out = capsys.readouterr().out
    assert out == f"makespan={makespan} events={len(records)} changes=0 failures=0\n"
    assert makespan == 58


def test_simulate_streams_to_stdout_by_default(det_file, capsys):
    code = main([
        "simulate", "--random", "4,1", "--scenario", det_file, "--seed", "3",
    ])
    assert code == EXIT_OK
    captured = capsys.readouterr()
    for line in captured.out.splitlines():
        json.loads(line)
    assert captured.err.startswith("makespan=")


def test_simulate_rejects_unknown_policy_names(det_file):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--builtin", "chair", "--scenario", det_file,
              "--policy", "psychic"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# solve-graph


def test_solve_graph_reports_the_graph_and_its_value(tmp_path, det_file, capsys):
    checkpoint = tmp_path / "policy.json"
    code = main([
        "solve-graph", "--builtin", "chair", "--scenario", det_file,
        "--format", "json", "--out", str(checkpoint),
    ])
    assert code == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["nodes"] == 95
    assert payload["root_value"] == 58.0
    assert payload["edges"] > payload["nodes"]
    policy = TabularPolicy.load(chair_htm(), str(checkpoint))
    assert policy.root_value == 58.0


def test_solve_graph_table_format(det_file, capsys):
    code = main(["solve-graph", "--builtin", "chair", "--scenario", det_file])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert "nodes: 95" in lines
    assert "root_value: 58.0" in lines


def test_solve_graph_refuses_a_stochastic_scenario(capsys):
    # the built-in chair task is noisy under default settings
    code = main(["solve-graph", "--builtin", "chair"])
    assert code == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_solve_graph_budget_exit_code(det_file, capsys):
    code = main([
        "solve-graph", "--builtin", "chair", "--scenario", det_file,
        "--node-budget", "10",
    ])
    assert code == EXIT_BUDGET
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train


def test_train_saves_table_and_curve(tmp_path, det_file, capsys):
    table_file = tmp_path / "q.json"
    curve_file = tmp_path / "curve.csv"
    code = main([
        "train", "--random", "4,1", "--scenario", det_file,
        "--episodes", "300", "--seed", "0",
        "--eval-interval", "100", "--eval-episodes", "20",
        "--out", str(table_file), "--curve", str(curve_file),
    ])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("episodes=300 states=")
    assert "eval=" in out
    curve = curve_file.read_text().splitlines()
    assert curve[0] == "episode,eval_mean,eval_std"
    assert [int(row.split(",")[0]) for row in curve[1:]] == [100, 200, 300]
    table = QTable.load(generate_random_htm(4, 1), str(table_file))
    assert len(table.q) > 0


# ---------------------------------------------------------------------------
# bench


def test_bench_csv_output_matches_the_file(tmp_path, det_file, capsys):
    out_file = tmp_path / "bench.csv"
    code = main([
        "bench", "--random", "8,0", "--scenario", det_file,
        "--policy", "greedy,random", "--trials", "5", "--seed", "0",
        "--format", "csv", "--out", str(out_file),
    ])
    assert code == EXIT_OK
    stdout = capsys.readouterr().out
    assert stdout == out_file.read_text()
    lines = stdout.splitlines()
    assert lines[0] == "scenario,policy,trial,seed,steps,n_events,n_changes,n_failures"
    assert len(lines) == 1 + 2 * 5


def test_bench_table_and_json_formats(det_file, capsys):
    argv = ["bench", "--random", "4,1", "--scenario", det_file,
            "--policy", "greedy", "--trials", "3", "--name", "tiny"]
    assert main(argv) == EXIT_OK
    table = capsys.readouterr().out.splitlines()
    assert table[0].split() == ["policy", "tiny"]
    assert table[2].startswith("greedy")

    assert main(argv + ["--format", "json"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert len(payload) == 1
    assert payload[0]["policy"] == "greedy"
    assert payload[0]["trials"] == 3
    assert len(payload[0]["records"]) == 3


def test_bench_rejects_unknown_policy_lists(det_file, capsys):
    code = main(["bench", "--builtin", "chair", "--scenario", det_file,
                 "--policy", "greedy,psychic"])
    assert code == EXIT_CONFIG
    assert "unknown policy" in capsys.readouterr().err


def test_instance_flags_are_mutually_exclusive():
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--builtin", "chair", "--random", "8,0"])
    assert exc.value.code == 2


def test_random_spec_must_be_n_comma_seed():
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--random", "8"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# intent-demo


def test_intent_demo_synthetic_reach(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    code = main([
        "intent-demo", "--target", "2", "--noise", "0", "--out", str(out),
    ])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "t,p_1,p_2,p_3,map_goal"
    assert lines[-1].split(",")[-1] == "2"


def test_intent_demo_accepts_goal_and_trajectory_files(tmp_path, capsys):
    goals = GoalSet((Goal(4, (0.0, 0.0)), Goal(5, (3.0, 0.0))))
    goals_file = tmp_path / "goals.json"
    save_goals(goals, goals_file)
    track_file = tmp_path / "track.csv"
    save_trajectory(simulate_trajectory((1.0, 1.0), 5, goals, speed=0.5), track_file)
    code = main([
        "intent-demo", "--goals", str(goals_file), "--trajectory", str(track_file),
    ])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,p_4,p_5,map_goal"
    assert lines[-1].split(",")[-1] == "5"


def test_intent_demo_missing_file_is_a_config_error(tmp_path, capsys):
    code = main(["intent-demo", "--trajectory", str(tmp_path / "absent.csv")])
    assert code == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# gen-htm


def test_gen_htm_round_trips_through_a_file(tmp_path, capsys):
    out = tmp_path / "task.json"
    assert main(["gen-htm", "--n", "8", "--seed", "0", "--out", str(out)]) == EXIT_OK
    assert load_htm(str(out)).to_dict() == generate_random_htm(8, 0).to_dict()

    assert main(["gen-htm", "--n", "4", "--seed", "2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    base = [a for a in doc["actions"] if "recovery_of" not in a]
    assert len(base) == 4
    assert len(doc["actions"]) == 8  # each action carries a recovery twin


def test_gen_htm_size_validation(capsys):
    assert main(["gen-htm", "--n", "6"]) == EXIT_CONFIG
    assert "multiple of 4" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# packaging


def test_console_script_is_installed(tmp_path):
    out = tmp_path / "task.json"
    proc = subprocess.run(
        ["cobotplan", "gen-htm", "--n", "4", "--seed", "0", "--out", str(out)],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == EXIT_OK, proc.stderr
    assert load_htm(str(out)).n_base == 4
