import pytest

from cbrs import gateway as gw
from cbrs.dispatch import Clock, DispatchEngine, FULFILLED, RESOLVED_EXTERNALLY
from cbrs.gateway import Gateway, InboundEvent, bundled_scenarios, load_scenario, simulate
from cbrs.layer2 import Backend, RulesBackend, parse_rules
from conftest import check_protocol_invariants

REQUEST_TEXT = "Urgent! 2 bags O+ blood needed at Square Hospital, Dhaka. Call 01712345678 today."
CHITCHAT = "Anyone up for cricket practice this evening at the field?"


class CountingBackend(Backend):
    """Wraps the rules backend and counts parse calls."""

    name = "counting"

    def __init__(self):
        self.calls = 0

    def parse(self, text):
        self.calls += 1
        return parse_rules(text)


def _gateway(scenario_model, **kw):
    clock = Clock()
    backend = CountingBackend()
    g = Gateway(
        model=scenario_model,
        backend=backend,
        engine=DispatchEngine(clock=clock, stage_size=3),
        clock=clock,
        **kw,
    )
    return g, backend


# -- commands -----------------------------------------------------------------


def test_help_lists_all_commands(scenario_model):
    g, _ = _gateway(scenario_model)
    reply = g.handle_command("/help", "u1")
    for cmd in gw.COMMANDS:
        assert cmd in reply


def test_show_my_info_roundtrip(scenario_model):
    g, _ = _gateway(scenario_model)
    g.engine.register_donor("u1", "O-", 23.81, 90.41)
    reply = g.handle_command("/show_my_info", "u1")
    assert "O-" in reply
    assert "d00001" in reply


def test_show_my_info_unregistered(scenario_model):
    g, _ = _gateway(scenario_model)
    assert "not registered" in g.handle_command("/show_my_info", "stranger")


def test_unknown_command_falls_back_to_help(scenario_model):
    g, _ = _gateway(scenario_model)
    assert g.handle_command("/frobnicate", "u1") == gw.HELP_TEXT


def test_register_returns_unique_stable_token(scenario_model):
    g, _ = _gateway(scenario_model)
    a1 = g.handle_command("/register_as_donor", "alice")
    a2 = g.handle_command("/update_my_info", "alice")
    b = g.handle_command("/register_as_donor", "bob")
    token = gw.intake_token("alice")
    assert token in a1 and token in a2
    assert gw.intake_token("bob") in b
    assert gw.intake_token("bob") != token


# -- ingest --------------------------------------------------------------------


def test_chitchat_never_calls_layer2(scenario_model):
    g, backend = _gateway(scenario_model)
    trace = g.ingest_message(InboundEvent(kind="message", message_id="m1", text=CHITCHAT))
    assert backend.calls == 0
    assert trace.layer2_outcome == "skipped"
    assert trace.t_parsed_stored is None


def test_request_flows_to_dispatch(scenario_model):
    g, backend = _gateway(scenario_model)
    g.engine.register_donor("alice", "O+", 23.81, 90.41)
    trace = g.ingest_message(InboundEvent(kind="message", message_id="m1", text=REQUEST_TEXT))
    assert backend.calls == 1
    assert trace.layer2_outcome == "request"
    assert trace.request_id is not None
    assert trace.t_parsed_stored == trace.t_arrival
    assert trace.t_first_notification is not None


def test_appreciation_passes_layer1_rejected_by_layer2(scenario_model):
    g, backend = _gateway(scenario_model)
    text = "We are very grateful to Rahim bhai for donating 2 bags A+ blood at Square Hospital, Dhaka."
    trace = g.ingest_message(InboundEvent(kind="message", message_id="m1", text=text))
    assert backend.calls == 1  # it got past layer 1
    assert trace.layer2_outcome == "negative"
    assert trace.request_id is None
    assert not g.engine.cases


def test_cost_path_calls_equal_layer1_positives(scenario_model):
    g, backend = _gateway(scenario_model)
    from cbrs import layer1

    positives = 0
    for i in range(200):
        text = REQUEST_TEXT if i % 10 == 0 else CHITCHAT
        text = f"{text} [{i}]"
        if layer1.forward(scenario_model, text).p_positive >= g.threshold:
            positives += 1
        g.ingest_message(InboundEvent(kind="message", message_id=f"m{i}", text=text, tick=i))
    assert backend.calls == positives


def test_backend_failure_queues_retry(scenario_model):
    class Exploding(Backend):
        name = "boom"

        def parse(self, text):
            raise RuntimeError("down")

    clock = Clock()
    g = Gateway(model=scenario_model, backend=Exploding(), clock=clock)
    trace = g.ingest_message(InboundEvent(kind="message", message_id="m1", text=REQUEST_TEXT))
    assert trace.layer2_outcome == "error"
    assert len(g.retry_queue) == 1


def test_group_order_enforced(scenario_model):
    g, _ = _gateway(scenario_model)
    g.ingest_message(InboundEvent(kind="message", message_id="m1", text=CHITCHAT, tick=10))
    with pytest.raises(ValueError):
        g.ingest_message(InboundEvent(kind="message", message_id="m2", text=CHITCHAT, tick=5))


def test_slash_message_routes_to_command(scenario_model):
    g, backend = _gateway(scenario_model)
    action = g.handle_event(InboundEvent(kind="message", message_id="m1", text="/help", sender="u"))
    assert action["action"] == "command_reply"
    assert backend.calls == 0


# -- edits ----------------------------------------------------------------------


def test_managed_edit_event(scenario_model):
    g, _ = _gateway(scenario_model)
    g.engine.register_donor("alice", "O+", 23.81, 90.41)
    g.ingest_message(InboundEvent(kind="message", message_id="m1", text=REQUEST_TEXT, tick=0))
    status = g.handle_edit_event(
        InboundEvent(kind="edit", message_id="m1", text="Update: Managed, " + REQUEST_TEXT, tick=5)
    )
    assert status == RESOLVED_EXTERNALLY


def test_edit_turns_chitchat_into_request(scenario_model):
    g, _ = _gateway(scenario_model)
    g.engine.register_donor("alice", "O+", 23.81, 90.41)
    g.ingest_message(InboundEvent(kind="message", message_id="m1", text=CHITCHAT, tick=0))
    assert not g.engine.cases
    status = g.handle_edit_event(InboundEvent(kind="edit", message_id="m1", text=REQUEST_TEXT, tick=5))
    assert status == "new-case"
    assert len(g.engine.cases) == 1


def test_edit_never_seen_message_diagnostic_only(scenario_model):
    g, _ = _gateway(scenario_model)
    status = g.handle_edit_event(InboundEvent(kind="edit", message_id="mX", text=REQUEST_TEXT, tick=0))
    assert status == "ignored-unknown-message"
    assert not g.engine.cases


def test_edit_seen_message_still_not_request(scenario_model):
    g, _ = _gateway(scenario_model)
    g.ingest_message(InboundEvent(kind="message", message_id="m1", text=CHITCHAT, tick=0))
    status = g.handle_edit_event(InboundEvent(kind="edit", message_id="m1", text=CHITCHAT + "!", tick=5))
    assert status == "ignored-non-request"


# -- donor responses ---------------------------------------------------------------


def test_donor_response_fulfills_and_stamps_trace(scenario_model):
    g, _ = _gateway(scenario_model)
    g.engine.register_donor("alice", "O+", 23.81, 90.41)
    g.ingest_message(InboundEvent(kind="message", message_id="m1", text=REQUEST_TEXT, tick=0))
    g.clock.advance(30)
    status = g.handle_donor_response(
        InboundEvent(kind="donor_response", sender="alice", message_id="m1", text="yes", tick=30)
    )
    assert status == FULFILLED
    trace = g.traces["m1"]
    assert trace.t_first_response == 30
    stamps = trace.timestamps()
    assert stamps == sorted(stamps) and len(stamps) == 4


def test_donor_response_from_unregistered_ignored(scenario_model):
    g, _ = _gateway(scenario_model)
    status = g.handle_donor_response(
        InboundEvent(kind="donor_response", sender="ghost", message_id="m1", text="yes")
    )
    assert status == "ignored-unregistered"


# -- scenarios ----------------------------------------------------------------------


def test_bundled_scenario_suite_present():
    names = {p.stem for p in bundled_scenarios()}
    assert len(names) >= 10
    assert {"managed_edit", "donor_exhaustion", "simultaneous_affirmatives", "empty"} <= names


def test_scenarios_run_with_invariants_and_determinism(scenario_model):
    for path in bundled_scenarios():
        first = simulate(path, scenario_model, RulesBackend())
        second = simulate(path, scenario_model, RulesBackend())
        assert first.transcript_text() == second.transcript_text(), path.name
        check_protocol_invariants(first)


def test_simulation_deterministic_across_processes(scenario_model):
    # A fresh interpreter (fresh hash seed, fresh caches) must train the
    # same model and replay the same transcript byte for byte.
    import hashlib
    import subprocess
    import sys

    code = (
        "from cbrs import layer1\n"
        "from cbrs.gateway import bundled_scenarios, simulate\n"
        "from cbrs.layer1 import Hyper\n"
        "from cbrs.layer2 import RulesBackend\n"
        "from cbrs.synth import separable_corpus\n"
        "import hashlib\n"
        "model = layer1.train(separable_corpus(400, seed=13),"
        " Hyper(dim=16, buckets=1 << 14, epochs=8, lr=0.5, seed=7))\n"
        "path = next(p for p in bundled_scenarios() if p.stem == 'managed_edit')\n"
        "text = simulate(path, model, RulesBackend()).transcript_text()\n"
        "print(hashlib.sha256(text.encode()).hexdigest())\n"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    path = next(p for p in bundled_scenarios() if p.stem == "managed_edit")
    local = simulate(path, scenario_model, RulesBackend()).transcript_text()
    assert out.stdout.strip() == hashlib.sha256(local.encode()).hexdigest()


def test_empty_scenario(scenario_model):
    path = next(p for p in bundled_scenarios() if p.stem == "empty")
    result = simulate(path, scenario_model, RulesBackend())
    assert result.transcript == []
    assert result.summary["cases"] == {}


def test_basic_scenario_outcome(scenario_model):
    path = next(p for p in bundled_scenarios() if p.stem == "basic_fulfilled")
    result = simulate(path, scenario_model, RulesBackend())
    assert list(result.summary["cases"].values()) == [FULFILLED]
    assert result.summary["response_seconds"]["count"] == 1
    assert result.summary["response_seconds"]["mean"] == 30  # tick 40 - tick 10


def test_three_requests_scenario(scenario_model):
    path = next(p for p in bundled_scenarios() if p.stem == "three_requests")
    result = simulate(path, scenario_model, RulesBackend())
    assert list(result.summary["cases"].values()) == [FULFILLED] * 3
    for trace in result.traces.values():
        assert len(trace.timestamps()) == 4


def test_managed_edit_scenario(scenario_model):
    path = next(p for p in bundled_scenarios() if p.stem == "managed_edit")
    result = simulate(path, scenario_model, RulesBackend())
    assert list(result.summary["cases"].values()) == [RESOLVED_EXTERNALLY]
    notices = [
        e["action"]
        for e in result.transcript
        if e["event"].get("kind") == "outbound" and e["action"]["kind"] == "resolution_notice"
    ]
    notified = {k[1] for k in result.engine.ledger}
    assert {n["donor_id"] for n in notices} == notified
    assert len(notices) == len(notified) == 4  # stages of 2 + 2 before the edit


def test_donor_exhaustion_scenario(scenario_model):
    path = next(p for p in bundled_scenarios() if p.stem == "donor_exhaustion")
    result = simulate(path, scenario_model, RulesBackend())
    case = next(iter(result.engine.cases.values()))
    assert case.needs_attention
    assert len(result.engine.ledger) == 2  # both donors used, nobody left
    attention = [
        e
        for e in result.transcript
        if e["event"].get("kind") == "outbound" and e["action"]["kind"] == "operator_attention"
    ]
    assert attention


def test_urgency_depths_scenario(scenario_model):
    path = next(p for p in bundled_scenarios() if p.stem == "urgency_depths")
    result = simulate(path, scenario_model, RulesBackend())
    by_message = {c.message_id: c for c in result.engine.cases.values()}
    counts = {
        mid: sum(1 for (rid, _) in result.engine.ledger if rid == case.request_id)
        for mid, case in by_message.items()
    }
    assert counts == {"m_today": 3, "m_tomorrow": 2, "m_nodate": 1}


def test_simultaneous_affirmatives_scenario(scenario_model):
    path = next(p for p in bundled_scenarios() if p.stem == "simultaneous_affirmatives")
    result = simulate(path, scenario_model, RulesBackend())
    assert list(result.summary["cases"].values()) == [FULFILLED]
    seeker_updates = [
        e
        for e in result.transcript
        if e["event"].get("kind") == "outbound" and e["action"]["kind"] == "seeker_update"
    ]
    assert len(seeker_updates) == 1


def test_scenario_rejects_malformed(tmp_path, scenario_model):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"tick": 0, "kind": "message"}\n{oops\n')
    with pytest.raises(gw.ScenarioError) as err:
        load_scenario(bad)
    assert ":2" in str(err.value)


def test_scenario_rejects_unordered(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(
        '{"tick": 10, "kind": "advance"}\n{"tick": 5, "kind": "advance"}\n'
    )
    with pytest.raises(gw.ScenarioError):
        load_scenario(bad)
