"""Regenerate crates/core/data/gazetteer.csv from the GeoNames cities15000 dump.

Usage: python3 scripts/build_gazetteer.py <geonamescache/data dir> [min_population]

Keeps every city at or above the population cutoff plus every national capital.
"""
import csv
import json
import sys
import unicodedata
from pathlib import Path

CURATED_ALIASES = {
    ("New York City", "United States"): ["NYC", "New York"],
    ("Los Angeles", "United States"): ["LA"],
    ("San Francisco", "United States"): ["SF"],
    ("Ho Chi Minh City", "Vietnam"): ["Saigon"],
    ("Mumbai", "India"): ["Bombay"],
    ("Kolkata", "India"): ["Calcutta"],
    ("Chennai", "India"): ["Madras"],
    ("Beijing", "China"): ["Peking"],
    ("Saint Petersburg", "Russia"): ["St Petersburg", "St. Petersburg"],
    ("Washington", "United States"): ["Washington DC", "Washington D.C."],
    ("Mexico City", "Mexico"): ["Ciudad de Mexico", "CDMX"],
}

# Cities below the cutoff that are still worth resolving.
EXTRA = {("Lhasa", "CN"), ("Reykjavik", "IS"), ("Hobart", "AU"), ("Valparaíso", "CL")}


def fold(name: str) -> str:
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
    return " ".join(stripped.lower().split())


def main() -> None:
    data = Path(sys.argv[1])
    min_pop = int(sys.argv[2]) if len(sys.argv) > 2 else 300_000
    cities = json.loads((data / "cities15000.json").read_text())
    countries = json.loads((data / "countries.json").read_text())
    names = {c["iso"]: c["name"] for c in countries.values()}
    capitals = {(c["capital"], c["iso"]) for c in countries.values() if c.get("capital")}

    rows = {}
    for c in cities.values():
        country = names.get(c["countrycode"])
        if country is None:
            continue
        keep = c["population"] >= min_pop or (c["name"], c["countrycode"]) in capitals
        keep = keep or (c["name"], c["countrycode"]) in EXTRA
        if not keep:
            continue
        # spellings that differ only by diacritics or case are one entry
        key = (fold(c["name"]), country)
        if key in rows and rows[key]["population"] >= c["population"]:
            continue
        rows[key] = c

    out = Path(__file__).resolve().parent.parent / "crates/core/data/gazetteer.csv"
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["city", "country", "lat", "lon", "population", "aliases"])
        for (_, country), c in sorted(rows.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            city = c["name"]
            aliases = "|".join(CURATED_ALIASES.get((city, country), []))
            w.writerow([city, country, f"{c['latitude']:.5f}", f"{c['longitude']:.5f}", c["population"], aliases])
    print(f"wrote {len(rows)} entries to {out}")


if __name__ == "__main__":
    main()
