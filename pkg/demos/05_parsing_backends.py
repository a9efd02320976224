"""Walkthrough: prompt construction and the two parser backends."""

from cbrs import schema
from cbrs.layer2 import build_prompt, parse_rules

# The prompt sent to a remote model: instructions, schema, worked examples
# (3 positive + 2 negative in few-shot mode), then the query.
bundle = build_prompt("Keo ki O- rokto dite parben? Dhaka Medical.", mode="few_shot")
print(f"few-shot prompt: {len(bundle.exemplars)} exemplars, ~{bundle.token_estimate} tokens")
print("ends with:", repr(bundle.render().splitlines()[-1]))

zero = build_prompt("same message", mode="zero_shot")
print(f"zero-shot prompt: {len(zero.exemplars)} exemplars, ~{zero.token_estimate} tokens")

# The rule-based backend runs the same contract offline and deterministically.
messages = [
    "Need 2 bags O- at AIIMS Hospital, call 981XXXXXXX",
    "Urgent! 3 bags B+ blood needed tomorrow at Square Hospital, Dhaka. Contact 01712345678.",
    "জরুরি ভিত্তিতে ঢাকা মেডিকেল এ ও নেগেটিভ রক্ত দরকার, ২ ব্যাগ। যোগাযোগ ০১৭১২৩৪৫৬৭৮।",
    "need O negative blood today before 17:00 at Green Clinic, Chittagong. call 01811111111",
    "We are very grateful to Rahim bhai for donating A+ blood at Square Hospital.",
    "Thanks everyone, donation completed!",
]
for text in messages:
    record = parse_rules(text)
    if record.outcome.is_negative:
        print(f"NEGATIVE   <- {text[:58]}")
    else:
        r = record.outcome.request
        print(
            f"{r.blood_group:3} bags={r.bags_needed or '-':3} day={r.probable_day or '-':10} "
            f"time={r.probable_time or '-':12} <- {text[:44]}"
        )

# Every backend outcome is schema-valid by construction.
record = parse_rules(messages[0])
assert isinstance(schema.validate(schema.serialize(record.outcome)), schema.ParseOutcome)
print("rules outcome re-validates: ok")
print(f"token accounting: in={record.input_tokens} out={record.output_tokens}")
