import json

import pytest

from ahdenv.cli import EXIT_ENDPOINT, EXIT_EVAL, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from ahdenv.instancegen import file_checksum, load_dataset

from conftest import FAILING_TSP, FARTHEST_TSP, NN_TSP, fenced, final_reply


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def gen(work, domain="tsp_c", n=8, count=2, seed=3, *extra):
    argv = ["gen-data", "--domain", domain, "--n", str(n), "--count", str(count), "--seed", str(seed),
            "--out", str(work), *extra]
    assert main(argv) == EXIT_OK
    return work / "data" / domain / f"design_{n}_{seed}.jsonl"


def write(path, text):
    path.write_text(text)
    return str(path)


# -- gen-data -------------------------------------------------------------------


def test_gen_data_writes_the_dataset_and_checksum(work, capsys):
    path = gen(work)
    ds = load_dataset(path)
    assert ds.domain == "tsp_c" and ds.count == 2 and ds.n == 8
    assert file_checksum(path) in capsys.readouterr().out


def test_gen_data_errors(work):
    assert main(["gen-data", "--domain", "op_aco", "--n", "400", "--count", "1"]) == EXIT_USAGE
    assert main(["gen-data", "--domain", "tsp_c", "--n", "2", "--count", "1"]) == EXIT_USAGE
    assert main(["gen-data", "--domain", "tsp_c"]) == EXIT_USAGE
    assert main(["gen-data", "--domain", "nope", "--n", "5", "--count", "1"]) == EXIT_USAGE


def test_config_supplies_defaults_and_flags_win(work):
    cfg = write(work / "cfg.json", json.dumps({"n": 7, "count": 3, "seed": 5}))
    assert main(["--config", cfg, "gen-data", "--domain", "tsp_c", "--seed", "9"]) == EXIT_OK
    ds = load_dataset(work / "data" / "tsp_c" / "design_7_9.jsonl")
    assert ds.count == 3 and ds.seed == 9
    assert main(["--config", str(work / "missing.json"), "gen-data", "--domain", "tsp_c"]) == EXIT_IO
    assert main(["--config", write(work / "list.json", "[1]"), "gen-data", "--domain", "tsp_c"]) == EXIT_USAGE


# -- make-refs and eval ---------------------------------------------------------


def test_eval_reports_objective_and_gaps(work, capsys):
    data = gen(work)
    assert main(["make-refs", "--dataset", str(data), "--out", str(work / "refs")]) == EXIT_OK
    assert (work / "refs" / "tsp_c_8_3.json").exists()
    prog = write(work / "nn.py", NN_TSP)
    report = work / "report.json"
    capsys.readouterr()
    assert main(["eval", "--program", prog, "--dataset", str(data), "--refs-dir", str(work / "refs"),
                 "--json", str(report)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "status: ok" in out and "mean gap:" in out and "-0.0000" not in out
    saved = json.loads(report.read_text())
    assert saved["status"] == "ok" and saved["mean_gap"] >= 0


def test_eval_failures(work, capsys):
    data = gen(work)
    assert main(["eval", "--program", write(work / "bad.py", FAILING_TSP), "--dataset", str(data)]) == EXIT_EVAL
    assert "runtime_error" in capsys.readouterr().out
    assert main(["eval", "--program", write(work / "syntax.py", "def f(:\n"), "--dataset", str(data)]) == EXIT_EVAL
    assert main(["eval", "--program", str(work / "none.py"), "--dataset", str(data)]) == EXIT_IO
    assert main(["eval", "--program", write(work / "nn.py", NN_TSP), "--dataset", "missing.jsonl"]) == EXIT_IO


def test_make_refs_refuses_large_instances(work):
    data = gen(work, n=30)
    assert main(["make-refs", "--dataset", str(data)]) == EXIT_USAGE


def test_aco_eval_accepts_solver_overrides(work, capsys):
    data = gen(work, "tsp_aco", 10, 1, 0)
    prog = write(work / "h.py", "def heuristic(distance_matrix):\n    return 1.0 / (distance_matrix + 1e-9)\n")
    assert main(["eval", "--program", prog, "--dataset", str(data), "--ants", "5", "--iterations", "4",
                 "--repeats", "2", "--seed", "1"]) == EXIT_OK
    assert "per repeat:" in capsys.readouterr().out
    assert main(["eval", "--program", prog, "--dataset", str(data), "--ants", "0"]) == EXIT_USAGE


# -- run-session and report -----------------------------------------------------


def script(work, name, turns):
    return f"scripted:{write(work / name, json.dumps(turns))}"


def test_single_session_then_report(work, capsys):
    data = gen(work)
    main(["make-refs", "--dataset", str(data), "--out", str(work / "refs")])
    policy = script(work, "p.json", [fenced(FARTHEST_TSP), fenced(NN_TSP), final_reply(NN_TSP)])
    final = work / "final.py"
    assert main(["run-session", "--dataset", str(data), "--policy", policy, "--budget", "3",
                 "--session-id", "one", "--out", str(work / "sessions"), "--final-out", str(final)]) == EXIT_OK
    assert final.read_text() == NN_TSP and "evaluator calls: 2" in capsys.readouterr().out
    # a second run with the same id collides with the existing directory
    assert main(["run-session", "--dataset", str(data), "--policy", policy, "--session-id", "one",
                 "--out", str(work / "sessions")]) == EXIT_IO
    assert main(["report", str(work / "sessions" / "one"), "--refs-dir", str(work / "refs"),
                 "--jsonl", str(work / "r.jsonl")]) == EXIT_OK
    records = [json.loads(line) for line in (work / "r.jsonl").read_text().splitlines()]
    assert [r["record"] for r in records] == ["run", "aggregate"]
    assert records[0]["evaluator_calls"] == 2 and records[0]["mean_gap"] >= 0
    assert records[1]["runs"] == 1 and records[1]["mean_gap"] == records[0]["mean_gap"]


def test_report_argument_errors(work):
    assert main(["report"]) == EXIT_USAGE
    assert main(["report", str(work / "nowhere")]) == EXIT_IO


def test_refinement_and_parallel_strategies(work, capsys):
    data = gen(work)
    sr = script(work, "sr.json", [fenced(NN_TSP), final_reply(NN_TSP), fenced(FARTHEST_TSP), final_reply(NN_TSP)])
    assert main(["run-session", "--dataset", str(data), "--policy", sr, "--strategy", "sr", "--budget", "2",
                 "--rounds", "3", "--session-id", "sr", "--out", str(work / "s")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "round 1: calls 1" in out and "round 2: calls 1" in out and "round 3" not in out
    lanes = work / "lanes"
    lanes.mkdir()
    for k, src in enumerate((FARTHEST_TSP, NN_TSP)):
        write(lanes / f"lane{k}.json", json.dumps([final_reply(src)]))
    assert main(["run-session", "--dataset", str(data), "--policy", f"scripted:{lanes}", "--strategy", "ps",
                 "--lanes", "2", "--jobs", "2", "--out", str(work / "s"),
                 "--final-out", str(work / "ps.py")]) == EXIT_OK
    assert (work / "ps.py").read_text() == NN_TSP and "run: lane 1" in capsys.readouterr().out


def test_run_session_exit_codes(work):
    data = gen(work)
    silent = script(work, "silent.json", [])
    out = ["--out", str(work / "s")]
    assert main(["run-session", "--dataset", str(data), "--policy", silent, "--max-turns", "1", *out]) == EXIT_EVAL
    assert main(["run-session", "--dataset", str(data), "--policy", silent, "--strategy", "ps", "--lanes", "2",
                 "--max-turns", "1", *out]) == EXIT_EVAL
    assert main(["run-session", "--dataset", str(data), "--policy", "scripted:nowhere.json", *out]) == EXIT_IO
    assert main(["run-session", "--dataset", str(data), "--policy", "remote:http://x", *out]) == EXIT_USAGE
    assert main(["run-session", "--dataset", str(data), "--policy", "bogus", *out]) == EXIT_USAGE
    assert main(["run-session", "--dataset", str(data), "--policy", silent, "--domain", "tsp_aco", *out]) == EXIT_USAGE
    gen(work, "tsp_c", 8, 1, 3, "--role", "validation")
    val = work / "data" / "tsp_c" / "validation_8_3.jsonl"
    assert main(["run-session", "--dataset", str(val), "--policy", silent, *out]) == EXIT_USAGE


def test_unreachable_endpoint_exits_with_endpoint_code(work):
    data = gen(work)
    assert main(["run-session", "--dataset", str(data), "--policy", "remote:http://127.0.0.1:9/v1/chat/completions",
                 "--model", "m", "--retries", "0", "--request-timeout", "2", "--out", str(work / "s")]) == EXIT_ENDPOINT


def test_jobs_flag(work, capsys):
    data = gen(work, count=4)
    prog = write(work / "nn.py", NN_TSP)
    capsys.readouterr()
    assert main(["eval", "--program", prog, "--dataset", str(data)]) == EXIT_OK
    serial = capsys.readouterr().out
    assert main(["eval", "--program", prog, "--dataset", str(data), "--jobs", "4"]) == EXIT_OK
    assert capsys.readouterr().out == serial
    assert main(["eval", "--program", prog, "--dataset", str(data), "--jobs", "0"]) == EXIT_USAGE
