import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from ahdenv.agentloop import (
    EVALUATE,
    FAILURE_REWARD,
    FINAL,
    MALFORMED,
    NO_CODE_REWARD,
    TOOL_CALL,
    LaneResult,
    MissingPlaceholderError,
    PolicyError,
    RemoteChatPolicy,
    RunFailure,
    ScriptedPolicy,
    build_context,
    compute_reward,
    parallel_sampling,
    parse_action,
    policy_from_descriptor,
    render_prompts,
    run_episode,
    select_lane,
    sequential_refinement,
)
from ahdenv.agentloop.prompts import render
from ahdenv.domains import DOMAINS
from ahdenv.sessionstore import create_session, read_events

from conftest import FAILING_TSP, FARTHEST_TSP, NN_TSP, fenced, final_reply, line_dataset, tool_reply

LINE = [0.0, 0.1, 0.25, 0.3]  # nearest neighbour tour 0.6, farthest-first tour 0.9


# -- action parsing -------------------------------------------------------------


def test_final_marker_beats_everything_else():
    reply = tool_reply("ast_novelty", {"code": "x"}) + "\n" + fenced("a = 1\n") + "\n" + final_reply(NN_TSP)
    action = parse_action(reply)
    assert action.kind == FINAL and action.source == NN_TSP


def test_tool_call_beats_fenced_code():
    action = parse_action(fenced(NN_TSP) + tool_reply("analyze_instances", {"scope": "summary"}))
    assert action.kind == TOOL_CALL and action.tool == "analyze_instances" and action.args == {"scope": "summary"}


def test_last_fenced_block_is_evaluated():
    action = parse_action("first\n" + fenced("a = 1\n") + "\nthen\n" + fenced(NN_TSP))
    assert action.kind == EVALUATE and action.source == NN_TSP


def test_unfenced_code_after_the_final_marker_is_accepted():
    action = parse_action("#### FINAL SOLUTION ####\n" + NN_TSP)
    assert action.kind == FINAL and action.source == NN_TSP


@pytest.mark.parametrize("reply", [
    "",
    "just some prose",
    "#### FINAL SOLUTION ####\n   \n",
    "<tool_call>{not json}</tool_call>",
    '<tool_call>{"arguments": {}}</tool_call>',
    '<tool_call>{"name": "x", "arguments": [1]}</tool_call>',
    "```python\n\n```",
])
def test_malformed_replies(reply):
    action = parse_action(reply)
    assert action.kind == MALFORMED and action.error


# -- prompts --------------------------------------------------------------------


@pytest.mark.parametrize("domain", sorted(DOMAINS))
def test_prompts_render_for_every_domain(domain):
    system, user = render_prompts(build_context(domain, None, 1.25))
    ctx = build_context(domain, None, 1.25)
    assert "#### FINAL SOLUTION ####" in system and "#### FINAL SOLUTION ####" in user
    assert ctx.function_name in user and ctx.function_signature in user and "1.250000" in user
    assert "{" not in user.replace("{{", "")


def test_missing_placeholders_raise():
    with pytest.raises(MissingPlaceholderError):
        render("value {a} and {b}", {"a": 1})
    with pytest.raises(MissingPlaceholderError):
        render_prompts(build_context("tsp_c", NN_TSP, None))
    assert render("{a}{{b}}", {"a": 1}) == "1{b}"


# -- scripted policies ----------------------------------------------------------


def test_scripted_policy_loaders(tmp_path):
    (tmp_path / "list.json").write_text(json.dumps(["a", "b"]))
    (tmp_path / "obj.json").write_text(json.dumps({"turns": ["c"]}))
    turns = tmp_path / "turns"
    turns.mkdir()
    (turns / "02.txt").write_text("second")
    (turns / "01.txt").write_text("first")
    assert ScriptedPolicy.from_path(tmp_path / "list.json").turns == ["a", "b"]
    assert ScriptedPolicy.from_path(tmp_path / "obj").turns == ["c"]  # suffix is optional
    assert ScriptedPolicy.from_path(turns).turns == ["first", "second"]
    (tmp_path / "bad.json").write_text(json.dumps({"turns": "x"}))
    with pytest.raises(ValueError):
        ScriptedPolicy.from_path(tmp_path / "bad.json")


def test_scripted_policy_goes_quiet_when_exhausted():
    policy = ScriptedPolicy(["only"])
    assert policy.respond([]) == "only" and policy.exhausted and policy.respond([]) == ""


def test_policy_descriptors(tmp_path):
    (tmp_path / "p.json").write_text("[]")
    assert isinstance(policy_from_descriptor(f"scripted:{tmp_path / 'p.json'}"), ScriptedPolicy)
    remote = policy_from_descriptor("remote:http://127.0.0.1:1/v1/chat/completions", model="m")
    assert isinstance(remote, RemoteChatPolicy) and remote.model == "m"
    for descriptor in ("scripted:", "remote:http://x", "other:thing"):
        with pytest.raises(ValueError):
            policy_from_descriptor(descriptor)


# -- remote policy against a local fake endpoint --------------------------------


class FakeChatServer:
    """Local chat-completions endpoint that answers with a queue of (status, body) pairs."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                outer.requests.append({"headers": dict(self.headers),
                                       "body": json.loads(self.rfile.read(length))})
                status, body = outer.responses.pop(0) if outer.responses else (500, {})
                payload = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1/chat/completions"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def chat_body(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


def remote(url, **kw):
    return RemoteChatPolicy(url, "test-model", api_key_env="AHDENV_TEST_KEY", timeout=5, backoff=0.0, **kw)


def test_remote_policy_sends_model_messages_and_key(monkeypatch):
    monkeypatch.setenv("AHDENV_TEST_KEY", "secret-token")
    with FakeChatServer([(200, chat_body("hello"))]) as srv:
        reply = remote(srv.url, temperature=0.5).respond([{"role": "user", "content": "hi"}])
    assert reply == "hello"
    (req,) = srv.requests
    assert req["headers"]["Authorization"] == "Bearer secret-token"
    assert req["body"] == {"model": "test-model", "messages": [{"role": "user", "content": "hi"}],
                           "temperature": 0.5}


def test_remote_policy_omits_auth_without_a_key(monkeypatch):
    monkeypatch.delenv("AHDENV_TEST_KEY", raising=False)
    with FakeChatServer([(200, chat_body(None))]) as srv:
        assert remote(srv.url).respond([]) == ""
    assert "Authorization" not in srv.requests[0]["headers"]


def test_remote_policy_retries_server_errors_and_throttling():
    with FakeChatServer([(500, {}), (429, {}), (200, {"bogus": 1}), (200, chat_body("ok"))]) as srv:
        assert remote(srv.url, retries=3).respond([]) == "ok"
    assert len(srv.requests) == 4


def test_remote_policy_stops_on_client_errors():
    with FakeChatServer([(400, {}), (200, chat_body("never"))]) as srv:
        with pytest.raises(PolicyError, match="HTTP 400"):
            remote(srv.url, retries=3).respond([])
    assert len(srv.requests) == 1


def test_remote_policy_gives_up_after_retries():
    with FakeChatServer([(503, {})] * 3) as srv:
        with pytest.raises(PolicyError, match="HTTP 503"):
            remote(srv.url, retries=2).respond([])
    assert len(srv.requests) == 3


def test_unreachable_endpoint_is_a_policy_error():
    with FakeChatServer([]) as srv:
        url = srv.url
    with pytest.raises(PolicyError):
        remote(url, retries=0).respond([])


def test_remote_policy_drives_an_episode(tmp_root):
    replies = [(200, chat_body(fenced(NN_TSP))), (200, chat_body(final_reply(NN_TSP)))]
    with FakeChatServer(replies) as srv:
        session = create_session("tsp_c", line_dataset(LINE), 3, root=tmp_root, session_id="remote")
        traj = run_episode(remote(srv.url), session, max_turns=5)
    assert traj.final_source == NN_TSP and traj.turns == 2
    assert [m["role"] for m in srv.requests[1]["body"]["messages"]] == ["system", "user", "assistant", "user"]


# -- episodes and rewards -------------------------------------------------------


def new_session(tmp_root, budget=3, seed=None, sid="ep"):
    return create_session("tsp_c", line_dataset(LINE), budget, seed, root=tmp_root, session_id=sid)


def test_horizon_falls_back_to_the_best_attempt(tmp_root):
    session = new_session(tmp_root)
    traj = run_episode(ScriptedPolicy([fenced(FARTHEST_TSP), fenced(NN_TSP), fenced(FARTHEST_TSP)]), session,
                       max_turns=3)
    assert traj.fallback_used and traj.final_source == NN_TSP and traj.turns == 3
    saved = json.loads((session.path / "trajectory.json").read_text())
    assert saved["fallback_used"] and len(saved["steps"]) == 3
    final = read_events(session)[-1]
    assert final["type"] == "final" and final["fallback_used"]


def test_malformed_turns_get_a_retry_message(tmp_root):
    session = new_session(tmp_root)
    traj = run_episode(ScriptedPolicy(["no idea", final_reply(NN_TSP)]), session)
    assert "could not be read" in traj.steps[0].observation
    assert session.evaluator_calls_used == 0 and traj.final_source == NN_TSP and not traj.fallback_used


def test_budget_refusal_is_reported_to_the_policy(tmp_root):
    session = new_session(tmp_root, budget=1)
    traj = run_episode(ScriptedPolicy([fenced(NN_TSP), fenced(NN_TSP), final_reply(NN_TSP)]), session)
    assert "Evaluation refused" in traj.steps[1].observation and "used up" in traj.steps[0].observation


def test_finishing_with_the_seed_is_flagged(tmp_root):
    session = new_session(tmp_root, seed=NN_TSP)
    traj = run_episode(ScriptedPolicy([final_reply(NN_TSP)]), session)
    assert traj.flags == ["final equals the starting code"]


def test_policy_failure_ends_the_episode(tmp_root):
    class Broken:
        def respond(self, messages):
            raise PolicyError("endpoint down")

    traj = run_episode(Broken(), new_session(tmp_root))
    assert traj.error == "endpoint down" and traj.final_source is None and traj.turns == 0
    with pytest.raises(ValueError):
        run_episode(Broken(), new_session(tmp_root, sid="other"), max_turns=0)


def test_reward_cases(tmp_root):
    ds = line_dataset(LINE)
    silent = run_episode(ScriptedPolicy([]), new_session(tmp_root, sid="silent"), max_turns=2)
    assert compute_reward(silent, None, ds) == NO_CODE_REWARD and silent.reward == NO_CODE_REWARD
    failing = run_episode(ScriptedPolicy([final_reply(FAILING_TSP)]), new_session(tmp_root, sid="fail"))
    assert compute_reward(failing, FARTHEST_TSP, ds) == FAILURE_REWARD
    good = run_episode(ScriptedPolicy([final_reply(NN_TSP)]), new_session(tmp_root, sid="good"))
    assert compute_reward(good, FARTHEST_TSP, ds) == pytest.approx(0.3, abs=1e-12)
    assert compute_reward(good, None, ds, baseline_objective=1.0) == pytest.approx(0.4, abs=1e-12)


# -- inference scaling ----------------------------------------------------------


def test_refinement_keeps_going_after_a_failed_round(tmp_root):
    class FlakyOnce:
        def __init__(self):
            self.calls = 0
            self.inner = ScriptedPolicy([fenced(NN_TSP), final_reply(NN_TSP)])

        def respond(self, messages):
            self.calls += 1
            if self.calls == 1:
                raise PolicyError("transient")
            return self.inner.respond(messages)

    result = sequential_refinement(FlakyOnce(), "tsp_c", line_dataset(LINE), global_budget=2, rounds=3,
                                   root=tmp_root, session_id="sr")
    assert result.final_source == NN_TSP and result.final_objective == pytest.approx(0.6, abs=1e-15)
    assert [r.calls_used for r in result.rounds] == [0, 1, 0]
    with pytest.raises(ValueError):
        sequential_refinement(ScriptedPolicy([]), "tsp_c", line_dataset(LINE), rounds=0, root=tmp_root)


def test_parallel_sampling_with_every_lane_failing(tmp_root):
    with pytest.raises(RunFailure):
        parallel_sampling(lambda k: ScriptedPolicy([]), "tsp_c", line_dataset(LINE), lanes=2, per_lane_budget=2,
                          root=tmp_root, max_turns=2)


def test_parallel_lanes_run_concurrently_and_agree(tmp_path):
    def policies(k):
        return ScriptedPolicy([final_reply(NN_TSP if k == 1 else FARTHEST_TSP)])

    serial = parallel_sampling(policies, "tsp_c", line_dataset(LINE), lanes=3, root=tmp_path / "a")
    threaded = parallel_sampling(policies, "tsp_c", line_dataset(LINE), lanes=3, root=tmp_path / "b", jobs=3)
    assert serial.selected_lane == threaded.selected_lane == 1
    assert [l.objective for l in serial.lanes] == [l.objective for l in threaded.lanes]


def test_lane_selection_respects_direction_and_ties():
    lanes = [LaneResult(0, "a", "x", 5.0), LaneResult(1, "b", "y", 3.0), LaneResult(2, "c", "z", 3.0),
             LaneResult(3, "d", None, None, error="failed")]
    assert select_lane(lanes, "min").lane == 1
    assert select_lane(lanes, "max").lane == 0
