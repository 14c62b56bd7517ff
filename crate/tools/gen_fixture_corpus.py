"""Generate the desk-scale fixture corpus under fixtures/corpus/.

Three synthetic sources: two token/BIO JSON-lines files and one file of
inline-tagged text. Output is deterministic.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures" / "corpus"

FIRST = ["Ana", "Bo", "Chen", "Dara", "Eli", "Fatima", "Goran", "Hana", "Ivo", "Jun"]
LAST = ["Silva", "Ng", "Okafor", "Berg", "Moreau", "Tanaka", "Kowal", "Reyes"]
CITIES = ["Lisbon", "Oslo", "Nairobi", "Porto", "Kyoto", "Quito", "Ghent"]
WORDS = ["please", "update", "the", "record", "for", "today", "and", "send", "it", "to", "our", "team"]


def name(rng):
    return [rng.choice(FIRST), rng.choice(LAST)]


def email(rng):
    return [f"{rng.choice(FIRST).lower()}.{rng.choice(LAST).lower()}@example.org"]


def phone(rng):
    return [f"+1-555-{rng.randrange(1000, 9999)}"]


def date(rng):
    return [f"2024-{rng.randrange(1, 13):02d}-{rng.randrange(1, 29):02d}"]


def username(rng):
    return [f"{rng.choice(FIRST).lower()}{rng.randrange(10, 99)}"]


def password(rng):
    return ["".join(rng.choice("abcdefXYZ0123!#") for _ in range(10))]


def vehicle(rng):
    return ["Volvo", "XC40"]


GENERATORS = {
    "NAME": name,
    "EMAIL": email,
    "PHONE_NUMBER": phone,
    "CITY": lambda rng: [rng.choice(CITIES)],
    "DATE": date,
    "USERNAME": username,
    "PASSWORD": password,
}


def filler(rng, lo, hi):
    return [rng.choice(WORDS) for _ in range(rng.randrange(lo, hi))]


def bio_record(rng, source, i, types, orphan=False):
    tokens = filler(rng, 1, 4)
    labels = ["O"] * len(tokens)
    for t in types:
        gen = vehicle if t == "VEHICLE" else GENERATORS.get(t)
        ent = gen(rng) if gen else [f"{rng.randrange(100, 999)}m"]
        tokens += ent
        labels += [f"B-{t}"] + [f"I-{t}"] * (len(ent) - 1)
        more = filler(rng, 1, 4)
        tokens += more
        labels += ["O"] * len(more)
    if orphan:
        # a continuation with no opener, as found in some upstream corpora
        k = labels.index("O")
        labels[k] = "I-CITY"
        tokens[k] = rng.choice(CITIES)
    return {"id": f"{source}-{i:04d}", "tokens": tokens, "labels": labels}


def ai4privacy(rng, n=450):
    kinds = ["NAME", "EMAIL", "PHONE_NUMBER", "CITY", "DATE", "USERNAME", "PASSWORD"]
    rows = []
    for i in range(n):
        types = rng.sample(kinds, rng.randrange(1, 4))
        if i in (17, 230, 401):
            types.append("VEHICLE")
        rows.append(bio_record(rng, "ai4privacy", i, types, orphan=i % 97 == 5))
    return rows


def finer(rng, n=300):
    rows = []
    for i in range(n):
        tokens, labels = [], []
        for _ in range(rng.randrange(1, 3)):
            tokens += filler(rng, 2, 5) + [f"{rng.randrange(10, 999)}.{rng.randrange(0, 9)}", "million"]
            labels += ["O"] * (len(tokens) - len(labels) - 2) + ["B-FINANCIAL_ENTITY", "I-FINANCIAL_ENTITY"]
        tokens.append(".")
        labels.append("O")
        rows.append({"id": f"finer_139-{i:04d}", "tokens": tokens, "labels": labels})
    return rows


def tagged(rng, n=300):
    templates = [
        "Contact <NAME>{name}</NAME> at <EMAIL>{email}</EMAIL> before <DATE>{date}</DATE>.",
        "<NAME>{name}</NAME> moved to <CITY>{city}</CITY>, phone <PHONE_NUMBER>{phone}</PHONE_NUMBER>.",
        "Login <USERNAME>{user}</USERNAME> reset on <DATE>{date}</DATE> from <CITY>{city}</CITY>.",
        "Ship to <CITY>{city}</CITY> attn <NAME>{name}</NAME>.",
        "No personal details were shared in this message.",
    ]
    rows = []
    for i in range(n):
        t = templates[i % 4] if i % 30 else templates[-1]
        text = t.format(
            name=" ".join(name(rng)),
            email=email(rng)[0],
            date=date(rng)[0],
            city=rng.choice(CITIES),
            phone=phone(rng)[0],
            user=username(rng)[0],
        )
        rows.append({"text": text})
    return rows


def write(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write(OUT / "ai4privacy.jsonl", ai4privacy(random.Random(1)))
    write(OUT / "finer_139.jsonl", finer(random.Random(2)))
    write(OUT / "nemotron.jsonl", tagged(random.Random(3)))


if __name__ == "__main__":
    main()
