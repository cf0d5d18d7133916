//! Offline city gazetteer: name/alias lookup to city-centre coordinates.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::names::NameNormalizer;
use super::EvalError;
use crate::geo::LatLon;

const BUILTIN_GAZETTEER: &str = include_str!("../../data/gazetteer.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub city: String,
    pub country: String,
    pub lat: f64,
    pub lon: f64,
    pub population: Option<u64>,
    pub aliases: Vec<String>,
}

impl GazetteerEntry {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    /// normalised city name or alias -> entry indices
    index: HashMap<String, Vec<usize>>,
    normalizer: NameNormalizer,
}

impl Gazetteer {
    pub fn new(entries: Vec<GazetteerEntry>, normalizer: NameNormalizer) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.city.trim().is_empty() || e.country.trim().is_empty() {
                return Err(EvalError::Gazetteer(format!("entry {i}: empty city or country")));
            }
            if !e.position().is_valid() {
                return Err(EvalError::Gazetteer(format!(
                    "{} ({}): invalid coordinates {}, {}",
                    e.city, e.country, e.lat, e.lon
                )));
            }
            let key = (normalizer.normalize(&e.city), normalizer.normalize(&e.country));
            if !seen.insert(key) {
                return Err(EvalError::Gazetteer(format!(
                    "duplicate entry {} ({})",
                    e.city, e.country
                )));
            }
            let names: HashSet<String> = std::iter::once(&e.city)
                .chain(&e.aliases)
                .map(|n| normalizer.normalize(n))
                .filter(|n| !n.is_empty())
                .collect();
            for name in names {
                index.entry(name).or_default().push(i);
            }
        }
        let mut gazetteer = Self {
            entries,
            index,
            normalizer,
        };
        let ranked: Vec<(String, Vec<usize>)> = gazetteer
            .index
            .iter()
            .map(|(k, v)| (k.clone(), gazetteer.ranked(v.clone())))
            .collect();
        gazetteer.index = ranked.into_iter().collect();
        Ok(gazetteer)
    }

    /// Reads `city,country,lat,lon,population,aliases` CSV; aliases are `|`-separated.
    pub fn from_csv<R: Read>(reader: R, normalizer: NameNormalizer) -> Result<Self, EvalError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| EvalError::Gazetteer(e.to_string()))?.clone();
        let expected = ["city", "country", "lat", "lon", "population", "aliases"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(EvalError::Gazetteer(format!(
                "expected header {}, found {:?}",
                expected.join(","),
                headers
            )));
        }
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| EvalError::Gazetteer(format!("line {line}: {e}")))?;
            let num = |idx: usize| -> Result<f64, EvalError> {
                row[idx]
                    .trim()
                    .parse()
                    .map_err(|e| EvalError::Gazetteer(format!("line {line}: {}: {e}", expected[idx])))
            };
            let population = match row[4].trim() {
                "" => None,
                p => Some(
                    p.parse()
                        .map_err(|e| EvalError::Gazetteer(format!("line {line}: population: {e}")))?,
                ),
            };
            entries.push(GazetteerEntry {
                city: row[0].trim().to_owned(),
                country: row[1].trim().to_owned(),
                lat: num(2)?,
                lon: num(3)?,
                population,
                aliases: row[5]
                    .split('|')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .map(str::to_owned)
                    .collect(),
            });
        }
        Self::new(entries, normalizer)
    }

    /// The GeoNames-derived gazetteer shipped with the crate, with the built-in alias table.
    pub fn builtin() -> &'static Gazetteer {
        static BUILTIN: OnceLock<Gazetteer> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Gazetteer::from_csv(BUILTIN_GAZETTEER.as_bytes(), NameNormalizer::builtin().clone())
                .expect("builtin gazetteer")
        })
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn normalizer(&self) -> &NameNormalizer {
        &self.normalizer
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Normalised city names, aliases and country names known to the gazetteer.
    pub fn place_names(&self) -> Vec<String> {
        let mut names: HashSet<String> = self.index.keys().cloned().collect();
        names.extend(self.entries.iter().map(|e| self.normalizer.normalize(&e.country)));
        let mut names: Vec<String> = names.into_iter().filter(|n| !n.is_empty()).collect();
        names.sort();
        names
    }

    // population desc, then country, then city
    fn ranked(&self, mut candidates: Vec<usize>) -> Vec<usize> {
        candidates.sort_by(|&a, &b| {
            let (ea, eb) = (&self.entries[a], &self.entries[b]);
            eb.population
                .unwrap_or(0)
                .cmp(&ea.population.unwrap_or(0))
                .then_with(|| ea.country.cmp(&eb.country))
                .then_with(|| ea.city.cmp(&eb.city))
        });
        candidates
    }

    /// Resolves a city name to one entry. The country hint narrows the
    /// candidates when it matches any of them; otherwise it is ignored.
    pub fn lookup(&self, name: &str, country_hint: Option<&str>) -> Option<&GazetteerEntry> {
        let candidates = self.index.get(&self.normalizer.normalize(name))?;
        if let Some(hint) = country_hint
            .map(|h| self.normalizer.normalize(h))
            .filter(|h| !h.is_empty())
        {
            if let Some(&i) = candidates
                .iter()
                .find(|&&i| self.normalizer.normalize(&self.entries[i].country) == hint)
            {
                return Some(&self.entries[i]);
            }
        }
        candidates.first().map(|&i| &self.entries[i])
    }
}

/// City-centre coordinates for a (possibly aliased) city name.
pub fn geocode_city(name: &str, country_hint: Option<&str>, g: &Gazetteer) -> Result<LatLon, EvalError> {
    g.lookup(name, country_hint)
        .map(GazetteerEntry::position)
        .ok_or_else(|| EvalError::NotFound(name.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "city,country,lat,lon,population,aliases
Paris,France,48.85341,2.34880,2138551,
Paris,United States,33.66094,-95.55551,24171,
Springfield,United States,39.80172,-89.64371,116250,
Springfield,Australia,-27.65,152.9,,
New York City,United States,40.71427,-74.00597,8804190,NYC|New York
";

    fn small() -> Gazetteer {
        Gazetteer::from_csv(SMALL.as_bytes(), NameNormalizer::builtin().clone()).unwrap()
    }

    #[test]
    fn hint_then_population() {
        let g = small();
        assert_eq!(g.lookup("paris", None).unwrap().country, "France");
        assert_eq!(g.lookup("Paris", Some("USA")).unwrap().country, "United States");
        assert_eq!(g.lookup("Paris", Some("France")).unwrap().lat, 48.85341);
        // unknown hint falls back to the population ranking
        assert_eq!(g.lookup("Paris", Some("Peru")).unwrap().country, "France");
    }

    #[test]
    fn missing_population_ranks_last() {
        assert_eq!(small().lookup("Springfield", None).unwrap().country, "United States");
    }

    #[test]
    fn aliases_resolve() {
        let g = small();
        assert_eq!(g.lookup("NYC", None).unwrap().city, "New York City");
        assert_eq!(g.lookup("new york", None).unwrap().city, "New York City");
    }

    #[test]
    fn unknown_is_not_found() {
        assert!(matches!(
            geocode_city("Atlantis", None, &small()),
            Err(EvalError::NotFound(_))
        ));
    }

    #[test]
    fn duplicates_rejected() {
        let dup = "city,country,lat,lon,population,aliases\nA,B,0,0,1,\na,b,1,1,2,\n";
        assert!(Gazetteer::from_csv(dup.as_bytes(), NameNormalizer::plain()).is_err());
    }

    #[test]
    fn builtin_loads() {
        let g = Gazetteer::builtin();
        assert!(g.len() > 2000);
        let paris = g.lookup("Paris", Some("France")).unwrap();
        assert_eq!((paris.lat, paris.lon), (48.85341, 2.34880));
        assert!(g.lookup("Lhasa", Some("China")).is_some());
        assert_eq!(g.lookup("NYC", None).unwrap().city, "New York City");
    }
}
