"""Walkthrough: validating, repairing, canonicalizing, and tree-encoding parses."""

import json

from cbrs import schema

# A clean reply: full schema object.
good = {
    "blood_group": "o-",
    "bags_needed": "2",
    "patient": {"name": "", "gender": "", "age_group": ""},
    "condition": "operation",
    "location": "Dhaka-r  Shahbage",
    "hospital_name": "BARDEM Hospital",
    "location_markers": ["Dhaka"],
    "probable_day": "14/06/2021",
    "probable_time": "before 19:00",
    "contacts": [{"name": "", "contact_numbers": ["018XXXXXXX"], "relation_with_patient": "rogir attio"}],
    "compensation": {"transportation": "", "allowance": ""},
}
outcome = schema.validate(json.dumps(good))
print("validates:", isinstance(outcome, schema.ParseOutcome))
canonical = schema.canonicalize(outcome.request)
print("canonical blood_group:", canonical.blood_group)      # 'O-'
print("canonical location:   ", canonical.location)          # single spaces

# The negative flag is the other legal reply.
neg = schema.validate('{"is_blood_donation_request": false}')
print("negative flag ->", neg.is_negative)

# Sloppy replies collect structured errors; one repair pass blanks the
# offending values and drops unknown keys.
sloppy = dict(good, probable_time="before 24:00", urgency_level="high")
errors = schema.validate(json.dumps(sloppy))
print("errors:", [str(e) for e in errors])
repaired = schema.repair(json.dumps(sloppy))
print("repaired probable_time:", repr(repaired.request.probable_time))

# Outcomes become ordered labeled trees for edit-distance scoring.
tree = schema.to_tree(schema.ParseOutcome.positive(canonical))
print("tree size:", tree.size())
print("root children:", [c.label.split("=")[0] for c in tree.children])
empty_tree = schema.to_tree(schema.ParseOutcome.positive(schema.ParsedRequest()))
print("empty request tree size:", empty_tree.size())  # fixed constant: 17
