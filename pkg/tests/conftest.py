"""Shared helpers: random outcomes, the scenario model, protocol invariants."""

import numpy as np
import pytest

from cbrs import dispatch, layer1
from cbrs.schema import (
    Compensation,
    Contact,
    ParsedRequest,
    ParseOutcome,
    Patient,
)
from cbrs.synth import separable_corpus

_GROUPS = ("A+", "A-", "B+", "B-", "O+", "O-", "AB+", "AB-", "")
_GENDERS = ("M", "F", "")
_AGES = ("child", "teenager", "young", "adult", "")
_YN = ("Y", "N", "")
_DAYS = ("", "today", "tomorrow", "21/06", "14/06/2021", "2 days later")
_TIMES = ("", "19:00", "before 19:00", "after 08:30", "09:00-17:00", "in 3 hours")
_WORDS = ("dhaka", "shahbag", "ward", "icu", "surgery", "dengue", "rahim", "mirpur")


def random_request(rng: np.random.Generator) -> ParsedRequest:
    def words(k):
        return " ".join(rng.choice(_WORDS) for _ in range(k))

    def maybe(value, p=0.6):
        return value if rng.random() < p else ""

    contacts = tuple(
        Contact(
            name=maybe(words(1)),
            contact_numbers=tuple(
                "01" + "".join(str(rng.integers(0, 10)) for _ in range(9))
                for _ in range(rng.integers(0, 3))
            ),
            relation_with_patient=maybe(words(1)),
        )
        for _ in range(rng.integers(0, 3))
    )
    return ParsedRequest(
        blood_group=str(rng.choice(_GROUPS)),
        bags_needed=maybe(str(rng.integers(1, 6))),
        patient=Patient(
            name=maybe(words(1)),
            gender=str(rng.choice(_GENDERS)),
            age_group=str(rng.choice(_AGES)),
        ),
        condition=maybe(words(2)),
        location=maybe(words(2)),
        hospital_name=maybe(words(1)),
        location_markers=tuple(words(1) for _ in range(rng.integers(0, 3))),
        probable_day=str(rng.choice(_DAYS)),
        probable_time=str(rng.choice(_TIMES)),
        contacts=contacts,
        compensation=Compensation(
            transportation=str(rng.choice(_YN)), allowance=str(rng.choice(_YN))
        ),
    )


def random_outcome(rng: np.random.Generator, negative_rate: float = 0.2) -> ParseOutcome:
    if rng.random() < negative_rate:
        return ParseOutcome.negative()
    return ParseOutcome.positive(random_request(rng))


@pytest.fixture(scope="session")
def scenario_model():
    """One deterministic classifier shared by gateway/service/acceptance tests."""
    hyper = layer1.Hyper(dim=16, buckets=1 << 14, epochs=8, lr=0.5, seed=7)
    return layer1.train(separable_corpus(400, seed=13), hyper)


def check_protocol_invariants(result) -> None:
    """Ledger laws over a finished simulation, from the transcript outward."""
    outbound = [e["action"] for e in result.transcript if e["event"].get("kind") == "outbound"]
    alerts = [a for a in outbound if a["kind"] == "donor_alert"]

    # No donor is ever alerted twice for one request.
    pairs = [(a["request_id"], a["donor_id"]) for a in alerts]
    assert len(pairs) == len(set(pairs)), "duplicate notification"

    # Once a request is fulfilled, no further alerts for it appear.
    fulfilled_seen: set[str] = set()
    for entry in result.transcript:
        action = entry["action"]
        if entry["event"].get("kind") == "donor_response" and action.get("status") == "fulfilled":
            rid = result.engine.case_by_message.get(entry["event"].get("message_id"))
            if rid:
                fulfilled_seen.add(rid)
        if entry["event"].get("kind") == "outbound" and action.get("kind") == "donor_alert":
            assert action["request_id"] not in fulfilled_seen, "alert after affirmative"

    # Resolution fan-out: exactly one notice per notified donor of a
    # terminal resolved case, none for strangers.
    notices = [a for a in outbound if a["kind"] == "resolution_notice"]
    notice_pairs = [(n["request_id"], n["donor_id"]) for n in notices]
    assert len(notice_pairs) == len(set(notice_pairs)), "duplicate resolution notice"
    resolved = {
        rid for rid, c in result.engine.cases.items() if c.status == dispatch.RESOLVED_EXTERNALLY
    }
    for rid in resolved:
        notified = {d for (r, d) in result.engine.ledger if r == rid}
        noticed = {d for (r, d) in notice_pairs if r == rid}
        assert noticed == notified, "resolution fan-out mismatch"

    # Stage numbers never exceed the urgency depth.
    for case in result.engine.cases.values():
        depth = dispatch.urgency_depth(case, result.engine.clock.epoch_date)
        stages = [a["stage"] for a in alerts if a["request_id"] == case.request_id]
        assert case.stages_fired <= depth
        assert all(s <= depth for s in stages)

    # Trace timestamps are monotone in stage order.
    for trace in result.traces.values():
        stamps = trace.timestamps()
        assert stamps == sorted(stamps)
