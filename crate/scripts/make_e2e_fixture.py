"""Writes the end-to-end fixture under crates/cli/fixtures/e2e.

Twenty evaluation images with a scripted mock endpoint: 18 parseable answers
(15 with the right country, 12 of those also with the right city) and two
refusals. Clue and label embeddings are built so that clues sit close to the
building and sign labels.
"""

import json
import math
import random
import shutil
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "crates/cli/fixtures/e2e"
CORE = ROOT / "crates/core/tests/fixtures"

LABELS = ["building", "sky", "road", "vegetation", "vehicle", "sign", "pole", "sidewalk"]

TRUTH = [
    ("Paris", "France", 48.85341, 2.34880),
    ("Tokyo", "Japan", 35.68950, 139.69171),
    ("Santiago", "Chile", -33.45694, -70.64827),
    ("Berlin", "Germany", 52.52437, 13.41053),
    ("Madrid", "Spain", 40.41650, -3.70256),
    ("Rome", "Italy", 41.89193, 12.51133),
    ("Sydney", "Australia", -33.86785, 151.20732),
    ("Toronto", "Canada", 43.70643, -79.39864),
    ("Lima", "Peru", -12.04318, -77.02824),
    ("Nairobi", "Kenya", -1.28333, 36.81667),
    ("Bangkok", "Thailand", 13.75398, 100.50144),
    ("Oslo", "Norway", 59.91273, 10.74609),
    ("Lisbon", "Portugal", 38.72509, -9.14980),
    ("Cape Town", "South Africa", -33.92584, 18.42322),
    ("Buenos Aires", "Argentina", -34.61315, -58.37723),
    ("Moscow", "Russia", 55.75204, 37.61781),
    ("Seoul", "South Korea", 37.56600, 126.97840),
    ("Mexico City", "Mexico", 19.42847, -99.12766),
    ("Vienna", "Austria", 48.20849, 16.37208),
    ("Warsaw", "Poland", 52.22977, 21.01178),
]

REFUSAL = "I'm sorry, I can't provide assistance with that request."

# index -> (country, city) answered; None marks a refusal.
ANSWERS = {}
for i in range(12):  # right country, right city
    ANSWERS[i] = (TRUTH[i][1], TRUTH[i][0])
# Porto is below the built-in gazetteer's population cut, so it misses
# every distance threshold.
ANSWERS[12] = ("Portugal", "Porto")  # right country, wrong city
ANSWERS[13] = ("South Africa", "Johannesburg")
ANSWERS[14] = ("Argentina", "Córdoba")
ANSWERS[15] = ("Ukraine", "Kyiv")  # wrong country
ANSWERS[16] = ("Japan", "Osaka")
ANSWERS[17] = ("Colombia", "Bogotá")
ANSWERS[18] = None
ANSWERS[19] = None


def image_id(i):
    return f"e{i + 1:03d}"


def image_url(i):
    return f"https://images.example/{image_id(i)}.jpg"


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [round(x / n, 12) for x in v]


def answer_text(i, country, city):
    styles = [
        "{{'country': '{c}', 'city': '{t}', 'reasons': 'Street furniture and signage.'}}",
        '```json\n{{"country": "{c}", "city": "{t}", "reasons": "Architecture and vegetation."}}\n```',
        'Let me think step by step. {{"Country": "{c}", "City": "{t}", "Reasons": "Road markings."}}',
    ]
    return styles[i % 3].format(c=country, t=city)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    shutil.copy(CORE / "roads_mixed.geojson", OUT / "roads.geojson")
    shutil.copy(CORE / "profiles_100.jsonl", OUT / "profiles.jsonl")
    shutil.copy(CORE / "clues_20.jsonl", OUT / "clues.jsonl")
    shutil.copy(CORE / "geotags_80.jsonl", OUT / "geotags.jsonl")

    with open(OUT / "images.csv", "w") as f:
        f.write("image_id,image_ref\n")
        for i in range(20):
            f.write(f"{image_id(i)},{image_url(i)}\n")

    with open(OUT / "truth.jsonl", "w") as f:
        for i, (city, country, lat, lon) in enumerate(TRUTH):
            f.write(json.dumps({"image_id": image_id(i), "country": country, "city": city, "lat": lat, "lon": lon}, ensure_ascii=False) + "\n")

    images = {}
    for i in range(20):
        a = ANSWERS[i]
        content = REFUSAL if a is None else answer_text(i, *a)
        steps = [{"content": content}]
        if i == 4:
            steps.insert(0, {"status": 503})
        images[image_url(i)] = steps
    with open(OUT / "mock.json", "w") as f:
        json.dump({"chat": {"images": images}}, f, indent=2, ensure_ascii=False)
        f.write("\n")

    rng = random.Random(7)
    dim = len(LABELS)
    label_vecs = []
    for k in range(dim):
        v = [rng.gauss(0, 0.05) for _ in range(dim)]
        v[k] += 1.0
        label_vecs.append(unit(v))
    clue_ids = [json.loads(line)["id"] for line in open(OUT / "clues.jsonl")]
    with open(OUT / "embeddings.jsonl", "w") as f:
        for n, cid in enumerate(clue_ids):
            v = [rng.gauss(0, 0.1) for _ in range(dim)]
            v[0] += 1.0  # building
            v[5] += 0.9 if n % 2 else 0.6  # sign
            f.write(json.dumps({"id": cid, "kind": "clue", "vector": unit(v)}) + "\n")
        for name, v in zip(LABELS, label_vecs):
            f.write(json.dumps({"id": name, "kind": "label", "vector": v}) + "\n")


if __name__ == "__main__":
    main()
