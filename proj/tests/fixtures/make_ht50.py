"""Regenerates the 50-document randomized-treatment fixture in ht50/."""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "ht50"
rng = random.Random(20261016)

FILLER = ("the people they said would because it was a new plan for city and many were not sure "
          "what happen next some think others hope police money funding community safety").split()
# Keyword features with a planted treatment effect: (feature id, word, P(treated), P(control)).
PLANTED = [(3, "article", 0.85, 0.10), (7, "crime", 0.80, 0.15)]
# Background features fire on filler words regardless of treatment.
BACKGROUND = {11: "police", 12: "money", 13: "community", 14: "safety", 15: "plan", 16: "city",
              17: "people", 18: "hope", 19: "funding", 20: "sure"}

docs, records = [], []
for i in range(50):
    doc_id = f"doc{i:02d}"
    w = 1 if rng.random() < 0.5 else 0
    words = [rng.choice(FILLER) for _ in range(rng.randint(8, 16))]
    for feature, word, p1, p0 in PLANTED:
        if rng.random() < (p1 if w else p0):
            words.insert(rng.randrange(len(words) + 1), word)
    docs.append({"doc_id": doc_id, "w": w, "text": " ".join(words)})
    for t, word in enumerate(words):
        for feature, kw, _, _ in PLANTED:
            if word == kw:
                records.append((doc_id, feature, t, round(rng.uniform(1.0, 4.0), 3)))
        for feature, kw in BACKGROUND.items():
            if word == kw:
                records.append((doc_id, feature, t, round(rng.uniform(0.2, 2.0), 3)))
        # Weak diffuse activations that the threshold removes.
        if rng.random() < 0.05:
            records.append((doc_id, 30, t, round(rng.uniform(0.01, 0.09), 3)))

with open(OUT / "corpus.jsonl", "w") as f:
    for d in docs:
        f.write(json.dumps(d) + "\n")
with open(OUT / "activations.tsv", "w") as f:
    for r in records:
        f.write("\t".join(str(x) for x in r) + "\n")
