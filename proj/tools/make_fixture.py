#!/usr/bin/env python3
"""Regenerates the committed 200-fact synthetic dataset under data/fixture/.

The output is deterministic (fixed seed). Rows follow the ICEWS layout:
subject, relation, object, timestamp in hours (multiples of 24), tab separated.
"""
import pathlib
import random

ENTITIES = [
    "Nuri al-Maliki", "Joseph Robinette Biden", "Massoud Barzani", "Mehmet Simsek",
    "Other Authorities (Turkey)", "Barack Obama", "Vladimir Putin", "Angela Merkel",
    "Citizen (Nigeria)", "Boko Haram", "Government (Nigeria)", "Military (Nigeria)",
    "Police (India)", "Narendra Modi", "Xi Jinping", "China", "Japan", "South Korea",
    "North Korea", "Iran", "Hassan Rouhani", "John Kerry", "United Nations",
    "European Union", "Ukraine", "Petro Poroshenko", "Militant (Taliban)", "Afghanistan",
    "Pakistan", "Nawaz Sharif", "Israel", "Benjamin Netanyahu", "Mahmoud Abbas", "Hamas",
    "Egypt", "Abdel Fattah Al-Sisi", "Syria", "Bashar al-Assad", "Turkey",
    "Recep Tayyip Erdogan",
]

RELATIONS = [
    "Make statement", "Consult", "Make an appeal or request", "Express intent to cooperate",
    "Provide economic aid", "Host a visit", "Sign formal agreement", "Criticize or denounce",
    "Threaten", "Use conventional military force", "Accuse", "Engage in negotiation",
]

# Relations that tend to follow one another on the same subject.
FOLLOWS = {
    0: [1, 2, 11], 1: [3, 11, 5], 2: [1, 4], 3: [6, 4], 4: [5], 5: [1, 6],
    6: [0], 7: [8, 10], 8: [9, 7], 9: [7, 10], 10: [8, 7], 11: [6, 3],
}

TRAIN, VALID, TEST = 140, 30, 30


def main() -> None:
    rng = random.Random(20141)
    groups = [list(range(i, i + 10)) for i in range(0, 40, 10)]
    last_rel = {}
    facts = []
    for _ in range(TRAIN + VALID + TEST):
        day = rng.randrange(0, 100)
        group = rng.choice(groups)
        s = rng.choice(group)
        if rng.random() < 0.8:
            o = rng.choice([e for e in group if e != s])
        else:
            o = rng.choice([e for e in range(40) if e != s])
        if s in last_rel and rng.random() < 0.7:
            r = rng.choice(FOLLOWS[last_rel[s]])
        else:
            r = rng.randrange(len(RELATIONS))
        last_rel[s] = r
        facts.append((s, r, o, day * 24))

    facts.sort(key=lambda f: f[3])
    # Queries must sit strictly after time zero.
    facts = [f if f[3] > 0 or i < TRAIN else (f[0], f[1], f[2], 24) for i, f in enumerate(facts)]

    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "fixture"
    out.mkdir(parents=True, exist_ok=True)
    splits = {
        "train.txt": facts[:TRAIN],
        "valid.txt": facts[TRAIN:TRAIN + VALID],
        "test.txt": facts[TRAIN + VALID:],
    }
    for name, rows in splits.items():
        with open(out / name, "w") as fh:
            for s, r, o, t in rows:
                fh.write(f"{s}\t{r}\t{o}\t{t}\n")
    with open(out / "entity2id.txt", "w") as fh:
        for i, label in enumerate(ENTITIES):
            fh.write(f"{label}\t{i}\n")
    with open(out / "relation2id.txt", "w") as fh:
        for i, label in enumerate(RELATIONS):
            fh.write(f"{label}\t{i}\n")


if __name__ == "__main__":
    main()
