"""Walkthrough: donor registry, geo-ranking, staged alerts, and the ledger."""

from datetime import date

from cbrs.dispatch import Clock, DispatchEngine, haversine_km
from cbrs.schema import ParsedRequest, ParseOutcome

print("Dhaka -> Chittagong:", round(haversine_km(23.8103, 90.4125, 22.3569, 91.7832), 1), "km")

clock = Clock()
engine = DispatchEngine(clock=clock, stage_size=2, stage_timeout=600)

# Donors at increasing distance from central Dhaka; one is ineligible
# (donated 30 days ago, window is 90).
coords = [(23.8103, 90.4125), (23.8303, 90.4125), (23.8503, 90.4125), (23.8703, 90.4125), (23.89, 90.41)]
for i, (lat, lon) in enumerate(coords):
    engine.register_donor(f"user{i}", "O+", lat, lon)
engine.register_donor("recent-donor", "O+", 23.8103, 90.4125,
                      last_donation_date=clock.today() - (date(2025, 1, 31) - date(2025, 1, 1)))

request = ParsedRequest(blood_group="O+", location_markers=("Dhaka",), probable_day="today")
case = engine.open_case("msg-1", request)
print(f"case {case.request_id}: urgency depth 3 (today), stage 1 notified:",
      [e["donor_id"] for e in engine.outbound if e["kind"] == "donor_alert"])

# Nobody answers within the timeout; stages 2 and 3 go out.
engine.advance_to(600)
engine.advance_to(1200)
stages = {}
for (rid, donor_id), entry in sorted(engine.ledger.items()):
    stages.setdefault(entry.stage, []).append(donor_id)
print("ledger stages:", {k: v for k, v in sorted(stages.items())})

# A donor in stage 2 says yes: the case closes, the seeker is informed,
# and no further alerts ever go out.
stage2_donor = stages[2][0]
status = engine.handle_response(case.request_id, stage2_donor, affirmative=True)
print(f"{stage2_donor} affirmative -> {status}")
engine.advance_to(10_000)
alerts_after = [e for e in engine.drain_outbound() if e["kind"] == "donor_alert" and e["tick"] > 1200]
print("alerts after the affirmative:", len(alerts_after))

# A second request, resolved by an edited message instead: every notified
# donor gets exactly one resolution notice.
case2 = engine.open_case("msg-2", ParsedRequest(blood_group="O+", location_markers=("Dhaka",)))
engine.handle_edit("msg-2", "Update: Managed, thanks everyone", lambda text: ParseOutcome.negative())
notices = [e for e in engine.drain_outbound() if e["kind"] == "resolution_notice"]
print(f"case {case2.request_id} resolved externally; resolution notices: {len(notices)}")

# State survives a snapshot round-trip.
import tempfile
from pathlib import Path

snap = Path(tempfile.mkdtemp(prefix="cbrs-demo-")) / "state.snap"
engine.persist(snap)
fresh = DispatchEngine(clock=Clock())
fresh.restore(snap)
print("snapshot round-trip:", len(fresh.donors), "donors,",
      len(fresh.cases), "cases,", len(fresh.ledger), "ledger entries")
