//! Place-name normalisation so free-text model answers can be compared
//! against geo-tags and gazetteer entries.

use std::collections::HashMap;
use std::sync::OnceLock;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::EvalError;

const BUILTIN_ALIASES: &str = include_str!("../../data/aliases.csv");

/// Case-folds, strips diacritics and collapses whitespace. No alias lookup.
pub fn fold_name(s: &str) -> String {
    let mut current = s.to_owned();
    // Compatibility decomposition can surface new uppercase letters and
    // lowercasing can surface new combining marks, so iterate to a fixpoint.
    for _ in 0..4 {
        let next: String = current
            .nfkd()
            .filter(|c| !is_combining_mark(*c))
            .collect::<String>()
            .to_lowercase();
        let next = next.split_whitespace().collect::<Vec<_>>().join(" ");
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Folding plus an alias table mapping alternative names onto canonical ones.
#[derive(Debug, Clone, Default)]
pub struct NameNormalizer {
    aliases: HashMap<String, String>,
}

impl NameNormalizer {
    /// Normaliser without aliases.
    pub fn plain() -> Self {
        Self::default()
    }

    /// Builds from `(alias, canonical)` pairs. Alias chains are resolved so
    /// that normalisation is idempotent; cycles are rejected.
    pub fn with_aliases<I, A, C>(pairs: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (A, C)>,
        A: AsRef<str>,
        C: AsRef<str>,
    {
        let raw: HashMap<String, String> = pairs
            .into_iter()
            .map(|(a, c)| (fold_name(a.as_ref()), fold_name(c.as_ref())))
            .filter(|(a, c)| a != c)
            .collect();
        let mut aliases = HashMap::with_capacity(raw.len());
        for alias in raw.keys() {
            let mut target = &raw[alias];
            let mut hops = 0;
            while let Some(next) = raw.get(target) {
                target = next;
                hops += 1;
                if hops > raw.len() {
                    return Err(EvalError::Alias(format!("alias cycle through {alias:?}")));
                }
            }
            aliases.insert(alias.clone(), target.clone());
        }
        Ok(Self { aliases })
    }

    /// Parses an `alias,canonical` CSV with a header row.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self, EvalError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut pairs = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| EvalError::Alias(e.to_string()))?;
            if row.len() < 2 {
                return Err(EvalError::Alias(format!("short alias row {row:?}")));
            }
            pairs.push((row[0].to_owned(), row[1].to_owned()));
        }
        Self::with_aliases(pairs)
    }

    /// The alias table shipped with the crate.
    pub fn builtin() -> &'static NameNormalizer {
        static BUILTIN: OnceLock<NameNormalizer> = OnceLock::new();
        BUILTIN.get_or_init(|| NameNormalizer::from_csv(BUILTIN_ALIASES.as_bytes()).expect("builtin alias table"))
    }

    pub fn normalize(&self, s: &str) -> String {
        let folded = fold_name(s);
        match self.aliases.get(&folded) {
            Some(canonical) => canonical.clone(),
            None => folded,
        }
    }

    /// Folded alias spellings (the keys of the table).
    pub fn alias_keys(&self) -> impl Iterator<Item = &str> {
        self.aliases.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.aliases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }
}

/// Normalises with the built-in alias table.
pub fn normalize_place_name(s: &str) -> String {
    NameNormalizer::builtin().normalize(s)
}
