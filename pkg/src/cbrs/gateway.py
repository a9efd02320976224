"""The outermost shell: chat adapter contract, pipeline, and simulation.

Real chat platforms are out of scope; the adapter contract is an
:class:`InboundEvent` in and reply/notification events out, so platform
bindings can be added without touching the core. Every ingested message
carries a four-stage trace (arrival, parsed-and-stored, first notification,
first affirmative response); stage timestamps come from the injected clock
and are monotone by construction.
"""

from __future__ import annotations

import hashlib
import json
import logging
import statistics
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from . import layer1
from .dispatch import Clock, DispatchEngine, FULFILLED
from .layer1 import ClassifierModel
from .layer2 import Backend
from .schema import ParseOutcome

log = logging.getLogger(__name__)

EVENT_KINDS = ("message", "edit", "command", "donor_response")

COMMANDS = ("/start", "/help", "/show_my_info", "/update_my_info", "/register_as_donor", "/goodbye")

HELP_TEXT = """Available commands:
/start              Initialize interaction with the bot
/help               Display a user guide
/show_my_info       Show the registered user details
/update_my_info     Update user information
/register_as_donor  Register as a blood donor
/goodbye            End interaction with the bot"""

_YES_WORDS = frozenset({"yes", "y", "sure", "ok", "okay", "raji", "parbo", "ji", "হ্যাঁ", "হা"})


@dataclass(frozen=True)
class InboundEvent:
    kind: str
    platform: str = "sim"
    group_id: str = "g1"
    sender: str = ""
    message_id: str = ""
    text: str = ""
    tick: int = 0

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass
class PipelineTrace:
    message_id: str
    t_arrival: int | None = None
    t_parsed_stored: int | None = None
    t_first_notification: int | None = None
    t_first_response: int | None = None
    layer1_prob: float | None = None
    layer2_outcome: str = "skipped"  # skipped | request | negative | error
    request_id: str | None = None

    def timestamps(self) -> list[int]:
        return [
            t
            for t in (
                self.t_arrival,
                self.t_parsed_stored,
                self.t_first_notification,
                self.t_first_response,
            )
            if t is not None
        ]

    def to_dict(self) -> dict:
        return {
            "message_id": self.message_id,
            "t_arrival": self.t_arrival,
            "t_parsed_stored": self.t_parsed_stored,
            "t_first_notification": self.t_first_notification,
            "t_first_response": self.t_first_response,
            "layer1_prob": round(self.layer1_prob, 9) if self.layer1_prob is not None else None,
            "layer2_outcome": self.layer2_outcome,
            "request_id": self.request_id,
        }


def intake_token(platform_id: str) -> str:
    """Stable per-sender token for the donor-intake URL."""
    return hashlib.blake2b(platform_id.encode("utf-8"), digest_size=8).hexdigest()


class Gateway:
    """Wires the classifier, the parser backend, and the dispatch engine."""

    def __init__(
        self,
        model: ClassifierModel,
        backend: Backend,
        engine: DispatchEngine | None = None,
        clock: Clock | None = None,
        snapshot_path: str | Path | None = None,
        threshold: float | None = None,
    ):
        if clock is not None:
            self.clock = clock
        elif engine is not None:
            self.clock = engine.clock
        else:
            self.clock = Clock()
        self.engine = engine or DispatchEngine(clock=self.clock)
        self.engine.clock = self.clock
        self.model = model
        self.backend = backend
        self.threshold = threshold if threshold is not None else model.hyper.threshold
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.traces: dict[str, PipelineTrace] = {}
        self.retry_queue: list[InboundEvent] = []
        self.layer2_calls = 0
        self._last_tick_per_group: dict[str, int] = {}

    # -- command surface ----------------------------------------------------

    def handle_command(self, cmd: str, sender: str) -> str:
        """Exact string dispatch over the slash-command surface."""
        if not cmd.startswith("/"):
            raise ValueError("commands must start with '/'")
        name = cmd.split()[0]
        if name == "/start":
            return (
                "Hello! I watch this group for blood-request messages and alert "
                "registered donors. Send /help for the command list."
            )
        if name == "/help":
            return HELP_TEXT
        if name == "/show_my_info":
            donor = self.engine.donor_by_platform(sender)
            if donor is None:
                return "You are not registered yet. Send /register_as_donor to begin."
            last = donor.last_donation_date.isoformat() if donor.last_donation_date else "never"
            return (
                f"donor_id: {donor.donor_id}\n"
                f"blood_group: {donor.blood_group}\n"
                f"location: ({donor.latitude:.4f}, {donor.longitude:.4f})\n"
                f"last_donation_date: {last}"
            )
        if name in ("/register_as_donor", "/update_my_info"):
            token = intake_token(sender)
            return f"Use your personal intake link to submit details: https://intake.invalid/d/{token}"
        if name == "/goodbye":
            return "Goodbye! Send /start any time to resume."
        return HELP_TEXT

    # -- pipeline -----------------------------------------------------------

    def _classify_parse(self, text: str) -> ParseOutcome:
        """Both layers as one callable (used for edit re-classification)."""
        pred = layer1.forward(self.model, text)
        if pred.p_positive < self.threshold:
            return ParseOutcome.negative()
        record = self.backend.parse(text)
        self.layer2_calls += 1
        if record.failed or record.outcome is None:
            return ParseOutcome.negative()
        return record.outcome

    def ingest_message(self, ev: InboundEvent) -> PipelineTrace:
        """Run one message through both layers and, on a parse, dispatch.

        Messages below the Layer-1 threshold never reach the backend; that
        is the entire cost case for the two-layer design.
        """
        if ev.kind != "message":
            raise ValueError(f"ingest_message needs a message event, got {ev.kind!r}")
        self._check_group_order(ev)
        trace = PipelineTrace(message_id=ev.message_id, t_arrival=self.clock.now)
        self.traces[ev.message_id] = trace
        pred = layer1.forward(self.model, ev.text)
        trace.layer1_prob = pred.p_positive
        if pred.p_positive < self.threshold:
            return trace
        try:
            record = self.backend.parse(ev.text)
            self.layer2_calls += 1
        except Exception as exc:
            log.error("layer-2 backend failed for %s: %s", ev.message_id, exc)
            trace.layer2_outcome = "error"
            self.retry_queue.append(ev)
            return trace
        if record.failed or record.outcome is None:
            trace.layer2_outcome = "error"
            self.retry_queue.append(ev)
            return trace
        if record.outcome.is_negative:
            trace.layer2_outcome = "negative"
            return trace
        trace.layer2_outcome = "request"
        case = self.engine.open_case(ev.message_id, record.outcome.request)
        trace.request_id = case.request_id
        trace.t_parsed_stored = self.clock.now
        if self.snapshot_path is not None:
            self.engine.persist(self.snapshot_path)
        if case.stages_fired > 0:
            trace.t_first_notification = self.clock.now
        return trace

    def handle_edit_event(self, ev: InboundEvent) -> str:
        """Edits re-run both layers.

        Edits of a message with a case go through dispatch (managed markers
        resolve it, other changes update it). An edit of a seen message that
        had no case may turn it into a request; an edit citing a message id
        this gateway never ingested is ignored with a diagnostic.
        """
        if ev.kind != "edit":
            raise ValueError(f"handle_edit_event needs an edit event, got {ev.kind!r}")
        if ev.message_id in self.engine.case_by_message:
            return self.engine.handle_edit(ev.message_id, ev.text, self._classify_parse)
        if ev.message_id not in self.traces:
            log.warning("edit for unknown message id %s ignored", ev.message_id)
            return "ignored-unknown-message"
        # Seen before but produced no case; the edit may turn it into a
        # request.
        trace = self.ingest_message(
            InboundEvent(
                kind="message",
                platform=ev.platform,
                group_id=ev.group_id,
                sender=ev.sender,
                message_id=ev.message_id,
                text=ev.text,
                tick=ev.tick,
            )
        )
        return "new-case" if trace.request_id else "ignored-non-request"

    def handle_donor_response(self, ev: InboundEvent) -> str:
        """Route a yes/no reply from a donor to its request's ledger."""
        if ev.kind != "donor_response":
            raise ValueError(f"expected donor_response, got {ev.kind!r}")
        donor = self.engine.donor_by_platform(ev.sender)
        if donor is None:
            return "ignored-unregistered"
        request_id = self.engine.case_by_message.get(ev.message_id)
        if request_id is None:
            return "ignored-unknown-request"
        affirmative = ev.text.strip().casefold() in _YES_WORDS or ev.text.strip().casefold().startswith("yes")
        status = self.engine.handle_response(request_id, donor.donor_id, affirmative)
        if status == FULFILLED:
            case = self.engine.cases[request_id]
            trace = self.traces.get(case.message_id)
            if trace is not None and trace.t_first_response is None:
                trace.t_first_response = self.clock.now
        return status

    def handle_event(self, ev: InboundEvent) -> dict:
        """Uniform entry point; returns a JSON-friendly action record."""
        if ev.kind == "command" or (ev.kind == "message" and ev.text.startswith("/")):
            reply = self.handle_command(ev.text, ev.sender)
            return {"action": "command_reply", "reply": reply}
        if ev.kind == "message":
            trace = self.ingest_message(ev)
            return {"action": "ingested", "trace": trace.to_dict()}
        if ev.kind == "edit":
            status = self.handle_edit_event(ev)
            return {"action": "edit", "status": status}
        status = self.handle_donor_response(ev)
        return {"action": "donor_response", "status": status}

    def _check_group_order(self, ev: InboundEvent) -> None:
        last = self._last_tick_per_group.get(ev.group_id)
        if last is not None and ev.tick < last:
            raise ValueError(
                f"events out of order in group {ev.group_id}: {ev.tick} after {last}"
            )
        self._last_tick_per_group[ev.group_id] = ev.tick


# --------------------------------------------------------------------------
# Scenario simulation


@dataclass
class SimulationResult:
    transcript: list[dict]
    traces: dict[str, PipelineTrace]
    summary: dict
    engine: DispatchEngine

    def transcript_text(self) -> str:
        return "\n".join(json.dumps(entry, sort_keys=True, ensure_ascii=False) for entry in self.transcript)


def _duration_stats(values: list[int]) -> dict:
    if not values:
        return {"count": 0, "mean": None, "stddev": None}
    return {
        "count": len(values),
        "mean": statistics.mean(values),
        "stddev": statistics.pstdev(values),
    }


def summarize_traces(traces: dict[str, PipelineTrace]) -> dict:
    """Mean/stddev of parse, retrieval, and response durations."""
    parse, retrieval, response = [], [], []
    fulfilled = 0
    for trace in traces.values():
        if trace.t_parsed_stored is not None and trace.t_arrival is not None:
            parse.append(trace.t_parsed_stored - trace.t_arrival)
        if trace.t_first_notification is not None and trace.t_parsed_stored is not None:
            retrieval.append(trace.t_first_notification - trace.t_parsed_stored)
        if trace.t_first_response is not None and trace.t_first_notification is not None:
            response.append(trace.t_first_response - trace.t_first_notification)
            fulfilled += 1
    return {
        "parse_seconds": _duration_stats(parse),
        "retrieval_seconds": _duration_stats(retrieval),
        "response_seconds": _duration_stats(response),
        "fulfilled_with_full_trace": fulfilled,
    }


class ScenarioError(Exception):
    """Scenario file is malformed; the message carries the line number."""


def bundled_scenarios() -> list[Path]:
    """Paths of the scenario suite shipped inside the package."""
    from importlib import resources

    root = Path(str(resources.files("cbrs.data").joinpath("scenarios")))
    return sorted(root.glob("*.jsonl"))


def load_scenario(path: str | Path) -> list[dict]:
    events = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                obj = json.loads(line)
                if "tick" not in obj or "kind" not in obj:
                    raise ValueError("event needs 'tick' and 'kind'")
                if obj["kind"] not in EVENT_KINDS + ("donor", "advance", "config"):
                    raise ValueError(f"unknown kind {obj['kind']!r}")
                if obj["kind"] == "config" and events:
                    raise ValueError("config must be the first scenario line")
            except (json.JSONDecodeError, ValueError) as exc:
                raise ScenarioError(f"{path}:{lineno}: {exc}") from exc
            events.append(obj)
    ticks = [e["tick"] for e in events]
    if ticks != sorted(ticks):
        raise ScenarioError(f"{path}: events must be ordered by tick")
    return events


def simulate(
    scenario_path: str | Path,
    model: ClassifierModel,
    backend: Backend,
    stage_size: int = 5,
    stage_timeout: int = 600,
    eligibility_days: int = 90,
    threshold: float | None = None,
) -> SimulationResult:
    """Replay a scripted event timeline under a logical clock.

    Scenario files are line-delimited JSON with a ``tick`` field. Besides
    the four inbound kinds, ``donor`` lines register donors (standing in
    for the out-of-scope intake form), ``advance`` lines only move time,
    and an optional leading ``config`` line overrides the staging knobs.
    Identical scenarios produce byte-identical transcripts.
    """
    events = load_scenario(scenario_path)
    if events and events[0]["kind"] == "config":
        head = events[0]
        stage_size = head.get("stage_size", stage_size)
        stage_timeout = head.get("stage_timeout", stage_timeout)
        eligibility_days = head.get("eligibility_days", eligibility_days)
        events = events[1:]
    clock = Clock()
    engine = DispatchEngine(
        clock=clock,
        stage_size=stage_size,
        stage_timeout=stage_timeout,
        eligibility_days=eligibility_days,
    )
    gateway = Gateway(model=model, backend=backend, engine=engine, clock=clock, threshold=threshold)
    transcript: list[dict] = []

    def flush_outbound(tick: int) -> None:
        for event in engine.drain_outbound():
            transcript.append({"tick": tick, "event": {"kind": "outbound"}, "action": event})

    for obj in events:
        tick = obj["tick"]
        engine.advance_to(tick)
        flush_outbound(tick)
        kind = obj["kind"]
        if kind == "advance":
            action = {"action": "advance"}
        elif kind == "donor":
            last = obj.get("last_donation_date")
            record = engine.register_donor(
                platform_id=obj["sender"],
                blood_group=obj["blood_group"],
                latitude=obj["latitude"],
                longitude=obj["longitude"],
                last_donation_date=date.fromisoformat(last) if last else None,
            )
            action = {"action": "donor_registered", "donor_id": record.donor_id}
        else:
            ev = InboundEvent(
                kind=kind,
                platform=obj.get("platform", "sim"),
                group_id=obj.get("group_id", "g1"),
                sender=obj.get("sender", ""),
                message_id=obj.get("message_id", ""),
                text=obj.get("text", ""),
                tick=tick,
            )
            action = gateway.handle_event(ev)
        transcript.append({"tick": tick, "event": obj, "action": action})
        flush_outbound(tick)

    summary = summarize_traces(gateway.traces)
    summary["cases"] = {
        rid: engine.cases[rid].status for rid in sorted(engine.cases)
    }
    summary["layer2_calls"] = gateway.layer2_calls
    return SimulationResult(
        transcript=transcript, traces=gateway.traces, summary=summary, engine=engine
    )
