"""Donor registry and the staged notification protocol.

Donors are matched to a request by exact blood group and an eligibility
window since their last donation, ranked by great-circle distance to the
request's gazetteer anchor. Notifications go out in stages bounded by an
urgency-derived depth; a per-request ledger guarantees nobody is notified
twice, alerts stop at the first affirmative, and a managed/resolved edit
fans out exactly one resolution notice per previously notified donor.

All time comes from an injected clock (logical in simulation, wall clock
in service mode), so scenario runs are deterministic.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import tempfile
from dataclasses import dataclass, replace
from datetime import date, timedelta
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from . import schema
from .schema import ParsedRequest, ParseOutcome

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

SNAPSHOT_VERSION = 1

OPEN = "open"
FULFILLED = "fulfilled"
RESOLVED_EXTERNALLY = "resolved_externally"
EXPIRED = "expired"

_TERMINAL = (FULFILLED, RESOLVED_EXTERNALLY, EXPIRED)

# Markers that an edited message announces the request is already handled.
MANAGED_MARKERS = (
    "managed",
    "collected",
    "resolved",
    "solved",
    "no longer needed",
    "lagbe na",
    "hoye geche",
    "hoye gese",
    "peye gechi",
    "peye gesi",
    "সংগৃহীত",
    "সংগ্রহ হয়েছে",
    "ম্যানেজ",
    "হয়ে গেছে",
    "লাগবে না",
)


class DispatchError(Exception):
    """Invalid dispatch operation (bad coordinates, unknown ledger pair, ...)."""


class SnapshotError(Exception):
    """Snapshot is missing, truncated, or corrupt; nothing was loaded."""


@dataclass
class Clock:
    """Logical clock counting seconds; date anchored to epoch_date."""

    now: int = 0
    epoch_date: date = date(2025, 1, 1)

    def advance(self, seconds: int) -> int:
        if seconds < 0:
            raise ValueError("cannot advance backwards")
        self.now += seconds
        return self.now

    def advance_to(self, tick: int) -> int:
        if tick < self.now:
            raise ValueError(f"cannot rewind clock from {self.now} to {tick}")
        self.now = tick
        return self.now

    def today(self) -> date:
        return self.epoch_date + timedelta(seconds=self.now)


@dataclass
class DonorRecord:
    donor_id: str
    platform_id: str
    blood_group: str
    latitude: float
    longitude: float
    last_donation_date: date | None = None
    registered_at: int = 0


@dataclass
class RequestCase:
    request_id: str
    message_id: str
    request: ParsedRequest
    status: str = OPEN
    created_at: int = 0
    deadline: int | None = None
    anchor: tuple[float, float] | None = None
    stages_fired: int = 0
    next_stage_due: int | None = None
    needs_attention: bool = False


@dataclass
class LedgerEntry:
    request_id: str
    donor_id: str
    stage: int
    notified_at: int
    response: str = "none"  # none | affirmative | negative
    resolution_notified: bool = False


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km on a sphere of radius 6371.0 km."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


_GAZETTEER: dict[str, tuple[float, float]] | None = None


def gazetteer() -> dict[str, tuple[float, float]]:
    """Bundled marker -> (lat, lon) table; keys are casefolded."""
    global _GAZETTEER
    if _GAZETTEER is None:
        table: dict[str, tuple[float, float]] = {}
        text = resources.files("cbrs.data").joinpath("gazetteer.tsv").read_text("utf-8")
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            name, lat, lon = line.split("\t")
            table[name.casefold()] = (float(lat), float(lon))
        _GAZETTEER = table
    return _GAZETTEER


def geocode_markers(markers: Iterable[str]) -> tuple[float, float] | None:
    """Anchor = coordinates of the first marker the gazetteer resolves."""
    table = gazetteer()
    for marker in markers:
        hit = table.get(marker.strip().casefold())
        if hit is not None:
            return hit
    return None


_DAY_FULL = re.compile(r"^(\d{2})/(\d{2})(?:/(\d{4}))?$")
_DAYS_LATER = re.compile(r"^(\d+) days? later$")


def _resolve_day(probable_day: str, created: date) -> date | None:
    m = _DAY_FULL.match(probable_day)
    if m:
        day, month, year = int(m.group(1)), int(m.group(2)), m.group(3)
        try:
            return date(int(year) if year else created.year, month, day)
        except ValueError:
            return None
    m = _DAYS_LATER.match(probable_day)
    if m:
        return created + timedelta(days=int(m.group(1)))
    return None


_IN_HOURS = re.compile(r"^in (\d+) hours?$")
_CLOCK_PART = re.compile(r"^(?:before )?([01]\d|2[0-3]):([0-5]\d)")


def resolve_deadline(request: ParsedRequest, created_at: int, epoch_date: date) -> int | None:
    """Absolute tick the request must be satisfied by, or None.

    "in n hours" counts from creation; "before HH:MM" and plain times bind
    to the stated (or creation) date; a bare date means end of that day.
    "after HH:MM" opens a window rather than closing one, so it carries no
    deadline of its own.
    """
    created_date = epoch_date + timedelta(seconds=created_at)
    time_field = request.probable_time
    m = _IN_HOURS.match(time_field)
    if m:
        return created_at + int(m.group(1)) * 3600
    day = request.probable_day
    if day == "today":
        the_date = created_date
    elif day == "tomorrow":
        the_date = created_date + timedelta(days=1)
    else:
        the_date = _resolve_day(day, created_date)
    clock = _CLOCK_PART.match(time_field)
    if the_date is None and clock is None:
        return None
    if the_date is None:
        the_date = created_date
    if clock is not None:
        hh, mm = int(clock.group(1)), int(clock.group(2))
    else:
        hh, mm = 23, 59
    return (the_date - epoch_date).days * 86400 + hh * 3600 + mm * 60


def urgency_depth(case: RequestCase, epoch_date: date = date(2025, 1, 1)) -> int:
    """Stage depth from the parsed urgency signals.

    "today" or a hard "before HH:MM" deadline scales to 3 stages; "tomorrow"
    or a date within 48 hours of case creation to 2; anything else to 1.
    """
    created = epoch_date + timedelta(seconds=case.created_at)
    day = case.request.probable_day
    time_field = case.request.probable_time
    if day == "today" or time_field.startswith("before "):
        return 3
    if day == "tomorrow":
        return 2
    resolved = _resolve_day(day, created)
    if resolved is not None and resolved - created <= timedelta(hours=48):
        return 2
    return 1


def detect_managed_marker(text: str) -> bool:
    lowered = text.casefold()
    return any(marker in lowered for marker in MANAGED_MARKERS)


class DispatchEngine:
    """Owns the donor registry, open cases, and the notification ledger.

    Mutations for one request are serialized by construction (single
    thread per engine instance); outbound notification events accumulate
    on a queue consumed by the gateway.
    """

    def __init__(
        self,
        clock: Clock | None = None,
        stage_size: int = 5,
        stage_timeout: int = 600,
        eligibility_days: int = 90,
    ):
        self.clock = clock or Clock()
        self.stage_size = stage_size
        self.stage_timeout = stage_timeout
        self.eligibility_days = eligibility_days
        self.donors: dict[str, DonorRecord] = {}  # platform_id -> record
        self.cases: dict[str, RequestCase] = {}
        self.case_by_message: dict[str, str] = {}
        self.ledger: dict[tuple[str, str], LedgerEntry] = {}
        self.outbound: list[dict] = []
        self._donor_seq = 0
        self._case_seq = 0

    # -- registry ---------------------------------------------------------

    def register_donor(
        self,
        platform_id: str,
        blood_group: str,
        latitude: float,
        longitude: float,
        last_donation_date: date | None = None,
    ) -> DonorRecord:
        """Upsert keyed by platform identity; re-registering keeps the id."""
        problems = []
        if not -90.0 <= latitude <= 90.0:
            problems.append(f"latitude {latitude} outside [-90, 90]")
        if not -180.0 <= longitude <= 180.0:
            problems.append(f"longitude {longitude} outside [-180, 180]")
        if blood_group not in schema.BLOOD_GROUPS:
            problems.append(f"blood_group {blood_group!r} not one of {schema.BLOOD_GROUPS}")
        if problems:
            raise DispatchError("; ".join(problems))
        existing = self.donors.get(platform_id)
        if existing is None:
            self._donor_seq += 1
            record = DonorRecord(
                donor_id=f"d{self._donor_seq:05d}",
                platform_id=platform_id,
                blood_group=blood_group,
                latitude=latitude,
                longitude=longitude,
                last_donation_date=last_donation_date,
                registered_at=self.clock.now,
            )
        else:
            record = replace(
                existing,
                blood_group=blood_group,
                latitude=latitude,
                longitude=longitude,
                last_donation_date=last_donation_date,
            )
        self.donors[platform_id] = record
        return record

    def update_donor(self, platform_id: str, patch: dict) -> DonorRecord:
        """Partial update; unspecified fields keep their values."""
        existing = self.donors.get(platform_id)
        if existing is None:
            raise DispatchError(f"no donor registered for platform id {platform_id!r}")
        allowed = {"blood_group", "latitude", "longitude", "last_donation_date"}
        unknown = set(patch) - allowed
        if unknown:
            raise DispatchError(f"unknown donor fields: {sorted(unknown)}")
        merged = replace(existing, **patch)
        if not -90.0 <= merged.latitude <= 90.0 or not -180.0 <= merged.longitude <= 180.0:
            raise DispatchError("patched coordinates out of range")
        if merged.blood_group not in schema.BLOOD_GROUPS:
            raise DispatchError(f"blood_group {merged.blood_group!r} invalid")
        self.donors[platform_id] = merged
        return merged

    def donor_by_platform(self, platform_id: str) -> DonorRecord | None:
        return self.donors.get(platform_id)

    # -- matching ---------------------------------------------------------

    def _is_eligible(self, donor: DonorRecord) -> bool:
        if donor.last_donation_date is None:
            return True
        gap = self.clock.today() - donor.last_donation_date
        return gap >= timedelta(days=self.eligibility_days)

    def eligible_donors(self, case: RequestCase) -> list[DonorRecord]:
        """Matching donors ranked by distance to the request anchor.

        Without a resolvable anchor the ranking falls back to registration
        recency (newest first). Ties always break toward the earlier
        registration, then the donor id, so the order is total.
        """
        group = case.request.blood_group
        if not group:
            log.warning("case %s has no blood group; nobody can be matched", case.request_id)
            return []
        matches = [
            d for d in self.donors.values() if d.blood_group == group and self._is_eligible(d)
        ]
        if case.anchor is not None:
            lat, lon = case.anchor
            matches.sort(
                key=lambda d: (
                    haversine_km(d.latitude, d.longitude, lat, lon),
                    d.registered_at,
                    d.donor_id,
                )
            )
        else:
            matches.sort(key=lambda d: (-d.registered_at, d.donor_id))
        return matches

    # -- case lifecycle ----------------------------------------------------

    def open_case(self, message_id: str, request: ParsedRequest) -> RequestCase:
        """Create a case for a parsed request and fire its first stage."""
        self._case_seq += 1
        canonical = schema.canonicalize(request)
        case = RequestCase(
            request_id=f"r{self._case_seq:05d}",
            message_id=message_id,
            request=canonical,
            created_at=self.clock.now,
            deadline=resolve_deadline(canonical, self.clock.now, self.clock.epoch_date),
            anchor=geocode_markers(request.location_markers),
        )
        if case.anchor is None and request.location_markers:
            case.needs_attention = True
            log.warning(
                "case %s: no gazetteer entry for markers %s; falling back to "
                "registration recency",
                case.request_id,
                list(request.location_markers),
            )
        self.cases[case.request_id] = case
        self.case_by_message[message_id] = case.request_id
        self.notify_stage(case)
        return case

    def notify_stage(self, case: RequestCase) -> list[LedgerEntry]:
        """Send the next stage of alerts: up to stage_size fresh donors.

        Never re-notifies a donor, never exceeds the urgency depth, and
        flags the case for operator attention when no donor is available.
        """
        if case.status != OPEN:
            return []
        depth = urgency_depth(case, self.clock.epoch_date)
        if case.stages_fired >= depth:
            case.next_stage_due = None
            return []
        already = {d for (rid, d) in self.ledger if rid == case.request_id}
        fresh = [d for d in self.eligible_donors(case) if d.donor_id not in already]
        batch = fresh[: self.stage_size]
        if not batch:
            case.needs_attention = True
            case.next_stage_due = None
            self.outbound.append(
                {
                    "kind": "operator_attention",
                    "request_id": case.request_id,
                    "tick": self.clock.now,
                    "detail": "no eligible donors to notify",
                }
            )
            return []
        stage = case.stages_fired + 1
        entries = []
        for donor in batch:
            entry = LedgerEntry(
                request_id=case.request_id,
                donor_id=donor.donor_id,
                stage=stage,
                notified_at=self.clock.now,
            )
            self.ledger[(case.request_id, donor.donor_id)] = entry
            entries.append(entry)
            self.outbound.append(
                {
                    "kind": "donor_alert",
                    "request_id": case.request_id,
                    "donor_id": donor.donor_id,
                    "stage": stage,
                    "tick": self.clock.now,
                }
            )
        case.stages_fired = stage
        case.next_stage_due = self.clock.now + self.stage_timeout if stage < depth else None
        return entries

    def _stage_entries(self, request_id: str, stage: int) -> list[LedgerEntry]:
        return [
            e for (rid, _), e in self.ledger.items() if rid == request_id and e.stage == stage
        ]

    def handle_response(self, request_id: str, donor_id: str, affirmative: bool) -> str:
        """Record a donor response; the first affirmative closes the case."""
        entry = self.ledger.get((request_id, donor_id))
        if entry is None:
            raise DispatchError(f"no notification on record for ({request_id}, {donor_id})")
        case = self.cases[request_id]
        if entry.response != "none":
            return case.status  # the first answer is final
        entry.response = "affirmative" if affirmative else "negative"
        if case.status != OPEN:
            return case.status
        if affirmative:
            case.status = FULFILLED
            case.next_stage_due = None
            self.outbound.append(
                {
                    "kind": "seeker_update",
                    "request_id": request_id,
                    "donor_id": donor_id,
                    "tick": self.clock.now,
                    "detail": "donor affirmative; request fulfilled",
                }
            )
        else:
            current = self._stage_entries(request_id, case.stages_fired)
            if current and all(e.response == "negative" for e in current):
                self.notify_stage(case)
        return case.status

    def handle_edit(
        self,
        message_id: str,
        new_text: str,
        classify: Callable[[str], ParseOutcome],
    ) -> str:
        """Re-process an edited message for the case it produced.

        A managed/resolved marker ends the case and sends each previously
        notified donor exactly one resolution notice; other edits update the
        stored request in place. Unknown message ids are ignored with a
        diagnostic status.
        """
        request_id = self.case_by_message.get(message_id)
        if request_id is None:
            return "ignored-unknown-message"
        case = self.cases[request_id]
        if detect_managed_marker(new_text):
            if case.status == OPEN:
                case.status = RESOLVED_EXTERNALLY
                case.next_stage_due = None
            self._fan_out_resolution(case)
            return case.status
        outcome = classify(new_text)
        if not outcome.is_negative:
            case.request = schema.canonicalize(outcome.request)
            case.anchor = geocode_markers(case.request.location_markers)
            return "updated"
        return "unchanged"

    def _fan_out_resolution(self, case: RequestCase) -> int:
        """Exactly-once resolution notice per notified donor; idempotent."""
        if case.status not in _TERMINAL:
            return 0
        sent = 0
        for (rid, donor_id), entry in sorted(self.ledger.items()):
            if rid != case.request_id or entry.resolution_notified:
                continue
            entry.resolution_notified = True
            sent += 1
            self.outbound.append(
                {
                    "kind": "resolution_notice",
                    "request_id": rid,
                    "donor_id": donor_id,
                    "tick": self.clock.now,
                }
            )
        return sent

    def due_cases(self) -> list[RequestCase]:
        return [
            c
            for c in sorted(self.cases.values(), key=lambda c: c.request_id)
            if c.status == OPEN and c.next_stage_due is not None and c.next_stage_due <= self.clock.now
        ]

    def advance_to(self, tick: int) -> None:
        """Move the clock forward, firing due stages and expiring past-deadline
        cases in time order (expiry beats a stage due at the same moment)."""
        while True:
            pending: list[tuple[int, int, str, str]] = []
            for c in self.cases.values():
                if c.status != OPEN:
                    continue
                if c.deadline is not None and c.deadline <= tick:
                    pending.append((c.deadline, 0, c.request_id, "expire"))
                if c.next_stage_due is not None and c.next_stage_due <= tick:
                    if c.deadline is None or c.next_stage_due < c.deadline:
                        pending.append((c.next_stage_due, 1, c.request_id, "stage"))
            if not pending:
                break
            when, _, request_id, kind = min(pending)
            case = self.cases[request_id]
            self.clock.advance_to(max(self.clock.now, when))
            if kind == "expire":
                case.status = EXPIRED
                case.next_stage_due = None
                self.outbound.append(
                    {"kind": "case_expired", "request_id": request_id, "tick": self.clock.now}
                )
            else:
                self.notify_stage(case)
        self.clock.advance_to(max(self.clock.now, tick))

    def drain_outbound(self) -> list[dict]:
        events, self.outbound = self.outbound, []
        return events

    # -- persistence --------------------------------------------------------

    def persist(self, path: str | Path) -> None:
        """Atomic snapshot: donors, cases, ledger as sectioned JSON lines."""
        path = Path(path)
        lines = [
            json.dumps(
                {
                    "section": "meta",
                    "version": SNAPSHOT_VERSION,
                    "donor_seq": self._donor_seq,
                    "case_seq": self._case_seq,
                    "clock": self.clock.now,
                }
            )
        ]
        for platform_id in sorted(self.donors):
            d = self.donors[platform_id]
            lines.append(
                json.dumps(
                    {
                        "section": "donor",
                        "donor_id": d.donor_id,
                        "platform_id": d.platform_id,
                        "blood_group": d.blood_group,
                        "latitude": d.latitude,
                        "longitude": d.longitude,
                        "last_donation_date": d.last_donation_date.isoformat()
                        if d.last_donation_date
                        else None,
                        "registered_at": d.registered_at,
                    },
                    ensure_ascii=False,
                )
            )
        for request_id in sorted(self.cases):
            c = self.cases[request_id]
            lines.append(
                json.dumps(
                    {
                        "section": "case",
                        "request_id": c.request_id,
                        "message_id": c.message_id,
                        "request": schema.to_dict(ParseOutcome.positive(c.request)),
                        "status": c.status,
                        "created_at": c.created_at,
                        "deadline": c.deadline,
                        "anchor": list(c.anchor) if c.anchor else None,
                        "stages_fired": c.stages_fired,
                        "next_stage_due": c.next_stage_due,
                        "needs_attention": c.needs_attention,
                    },
                    ensure_ascii=False,
                )
            )
        for key in sorted(self.ledger):
            e = self.ledger[key]
            lines.append(
                json.dumps(
                    {
                        "section": "ledger",
                        "request_id": e.request_id,
                        "donor_id": e.donor_id,
                        "stage": e.stage,
                        "notified_at": e.notified_at,
                        "response": e.response,
                        "resolution_notified": e.resolution_notified,
                    }
                )
            )
        lines.append(json.dumps({"section": "end", "records": len(lines)}))
        payload = "\n".join(lines) + "\n"
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def restore(self, path: str | Path) -> None:
        """Load a snapshot fully or not at all."""
        path = Path(path)
        if not path.exists():
            raise SnapshotError(f"snapshot not found: {path}")
        donors: dict[str, DonorRecord] = {}
        cases: dict[str, RequestCase] = {}
        ledger: dict[tuple[str, str], LedgerEntry] = {}
        meta: dict | None = None
        saw_end = False
        try:
            with path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    section = obj.get("section")
                    if section == "meta":
                        if obj.get("version") != SNAPSHOT_VERSION:
                            raise SnapshotError(
                                f"unsupported snapshot version {obj.get('version')}"
                            )
                        meta = obj
                    elif section == "donor":
                        record = DonorRecord(
                            donor_id=obj["donor_id"],
                            platform_id=obj["platform_id"],
                            blood_group=obj["blood_group"],
                            latitude=obj["latitude"],
                            longitude=obj["longitude"],
                            last_donation_date=date.fromisoformat(obj["last_donation_date"])
                            if obj["last_donation_date"]
                            else None,
                            registered_at=obj["registered_at"],
                        )
                        donors[record.platform_id] = record
                    elif section == "case":
                        outcome = schema.validate(
                            json.dumps(obj["request"], ensure_ascii=False)
                        )
                        if not isinstance(outcome, ParseOutcome) or outcome.is_negative:
                            raise SnapshotError(f"line {lineno}: bad case payload")
                        cases[obj["request_id"]] = RequestCase(
                            request_id=obj["request_id"],
                            message_id=obj["message_id"],
                            request=outcome.request,
                            status=obj["status"],
                            created_at=obj["created_at"],
                            deadline=obj["deadline"],
                            anchor=tuple(obj["anchor"]) if obj["anchor"] else None,
                            stages_fired=obj["stages_fired"],
                            next_stage_due=obj["next_stage_due"],
                            needs_attention=obj["needs_attention"],
                        )
                    elif section == "ledger":
                        entry = LedgerEntry(
                            request_id=obj["request_id"],
                            donor_id=obj["donor_id"],
                            stage=obj["stage"],
                            notified_at=obj["notified_at"],
                            response=obj["response"],
                            resolution_notified=obj["resolution_notified"],
                        )
                        ledger[(entry.request_id, entry.donor_id)] = entry
                    elif section == "end":
                        saw_end = True
                    else:
                        raise SnapshotError(f"line {lineno}: unknown section {section!r}")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SnapshotError(f"corrupt snapshot {path}: {exc}") from exc
        if meta is None or not saw_end:
            raise SnapshotError(f"snapshot {path} is truncated")
        self.donors = donors
        self.cases = cases
        self.ledger = ledger
        self.case_by_message = {c.message_id: c.request_id for c in cases.values()}
        self._donor_seq = meta["donor_seq"]
        self._case_seq = meta["case_seq"]
        self.clock.now = meta["clock"]
