//! The geo-localization prompt and tolerant parsing of model answers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Prompt sent with every evaluation image.
pub const GEOLOC_PROMPT: &str = "According to the content of the image, please think step by step and deduce in which country and city the image is most likely located and offer possible explanations. Output in JSON format, e.g., {'country': '', 'city': '', 'reasons':''}";

/// Variant of [`GEOLOC_PROMPT`] asking for the country and reasons only.
pub const COUNTRY_REASONS_PROMPT: &str = "According to the content of the image, please think step by step and deduce in which country the image is most likely located and offer possible explanations. Output in JSON format, e.g., {'country': '', 'reasons':''}";

/// Variant of [`GEOLOC_PROMPT`] without the reasoning requirement.
pub const COUNTRY_CITY_PROMPT: &str = "According to the content of the image, please deduce in which country and city the image is most likely located. Output in JSON format, e.g., {'country': '', 'city': ''}";

/// Refusals observed from hosted models when asked to geo-locate images.
pub const DEFAULT_REFUSALS: [&str; 2] = [
    "I'm sorry, I can't provide assistance with that request.",
    "I'm sorry, but I am unable to provide the exact location, such as the country and city, for the image you have provided. My capabilities do not include analyzing specific details to determine the geographical location of the image content.",
];

pub fn build_geoloc_prompt() -> &'static str {
    GEOLOC_PROMPT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureCause {
    /// The model declined to answer.
    Refusal,
    /// No JSON object with usable keys could be recovered.
    Unparseable,
    /// The request never produced a response.
    Transport,
    /// Empty response, or an object without a country and city.
    Empty,
}

impl FailureCause {
    pub const ALL: [FailureCause; 4] = [
        FailureCause::Refusal,
        FailureCause::Unparseable,
        FailureCause::Transport,
        FailureCause::Empty,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureCause::Refusal => "refusal",
            FailureCause::Unparseable => "unparseable",
            FailureCause::Transport => "transport",
            FailureCause::Empty => "empty",
        }
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub country: Option<String>,
    pub city: Option<String>,
    pub reasons: Option<String>,
    pub effective: bool,
    pub failure_cause: Option<FailureCause>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub country: Option<String>,
    pub city: Option<String>,
    pub reasons: Option<String>,
    pub effective: bool,
    pub failure_cause: Option<FailureCause>,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

impl PredictionRecord {
    pub fn from_response(
        image_id: impl Into<String>,
        raw: &str,
        latency_ms: Option<u64>,
        detector: &RefusalDetector,
    ) -> Self {
        let parsed = parse_prediction_with(raw, detector);
        Self {
            image_id: image_id.into(),
            country: parsed.country,
            city: parsed.city,
            reasons: parsed.reasons,
            effective: parsed.effective,
            failure_cause: parsed.failure_cause,
            raw_text: raw.to_owned(),
            latency_ms,
        }
    }

    pub fn transport_failure(image_id: impl Into<String>, message: &str, latency_ms: Option<u64>) -> Self {
        Self {
            image_id: image_id.into(),
            country: None,
            city: None,
            reasons: None,
            effective: false,
            failure_cause: Some(FailureCause::Transport),
            raw_text: message.to_owned(),
            latency_ms,
        }
    }

    /// Checks `effective` against the parsed fields and the failure cause.
    pub fn is_consistent(&self) -> bool {
        let both = non_empty(&self.country) && non_empty(&self.city);
        match self.effective {
            true => both && self.failure_cause.is_none(),
            false => self.failure_cause.is_some(),
        }
    }
}

fn non_empty(s: &Option<String>) -> bool {
    s.as_deref().is_some_and(|s| !s.trim().is_empty())
}

/// Substring matcher for canned refusal replies. Comparison ignores case,
/// whitespace runs and typographic apostrophes.
#[derive(Debug, Clone)]
pub struct RefusalDetector {
    patterns: Vec<String>,
}

impl Default for RefusalDetector {
    fn default() -> Self {
        Self::new(DEFAULT_REFUSALS)
    }
}

impl RefusalDetector {
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            patterns: patterns
                .into_iter()
                .map(|p| canonical_text(p.as_ref()))
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    pub fn with_pattern(mut self, pattern: &str) -> Self {
        let p = canonical_text(pattern);
        if !p.is_empty() {
            self.patterns.push(p);
        }
        self
    }

    pub fn is_refusal(&self, text: &str) -> bool {
        let text = canonical_text(text);
        self.patterns.iter().any(|p| text.contains(p.as_str()))
    }
}

fn canonical_text(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(['\u{2018}', '\u{2019}', '`'], "'")
        .to_lowercase()
}

pub fn parse_prediction(raw: &str) -> ParsedAnswer {
    parse_prediction_with(raw, &RefusalDetector::default())
}

/// Classifies a raw model reply. Never fails: problems are reported
/// through `failure_cause`.
pub fn parse_prediction_with(raw: &str, detector: &RefusalDetector) -> ParsedAnswer {
    let failed = |cause| ParsedAnswer {
        country: None,
        city: None,
        reasons: None,
        effective: false,
        failure_cause: Some(cause),
    };
    if raw.trim().is_empty() {
        return failed(FailureCause::Empty);
    }
    if detector.is_refusal(raw) {
        return failed(FailureCause::Refusal);
    }
    let Some(object) = extract_object(raw) else {
        return failed(FailureCause::Unparseable);
    };

    let mut fields: BTreeMap<&str, String> = BTreeMap::new();
    for (key, value) in &object {
        let slot = match key.trim().to_lowercase().as_str() {
            "country" => "country",
            "city" => "city",
            "reasons" | "reason" | "reasoning" | "explanation" | "explanations" => "reasons",
            _ => continue,
        };
        let text = match value {
            Value::String(s) => s.trim().to_owned(),
            Value::Array(items) => items
                .iter()
                .filter_map(Value::as_str)
                .collect::<Vec<_>>()
                .join(" ")
                .trim()
                .to_owned(),
            Value::Number(n) => n.to_string(),
            _ => String::new(),
        };
        if !text.is_empty() {
            fields.entry(slot).or_insert(text);
        }
    }
    if fields.is_empty() {
        return failed(FailureCause::Unparseable);
    }
    let country = fields.remove("country");
    let city = fields.remove("city");
    let reasons = fields.remove("reasons");
    let effective = country.is_some() && city.is_some();
    ParsedAnswer {
        country,
        city,
        reasons,
        effective,
        failure_cause: (!effective).then_some(FailureCause::Empty),
    }
}

// Bounds work on adversarial input.
const MAX_OBJECT_ATTEMPTS: usize = 32;
const MAX_DEPTH: usize = 64;

/// Finds the first `{...}` block that parses as a (lenient) JSON object.
/// Fenced code blocks are searched first.
fn extract_object(raw: &str) -> Option<Map<String, Value>> {
    if let Some(inner) = fenced_block(raw) {
        if let Some(obj) = first_object(inner) {
            return Some(obj);
        }
    }
    first_object(raw)
}

fn fenced_block(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let after = &raw[start + 3..];
    // skip the info string (e.g. `json`) up to the end of the line
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

fn first_object(text: &str) -> Option<Map<String, Value>> {
    text.char_indices()
        .filter(|(_, c)| *c == '{')
        .take(MAX_OBJECT_ATTEMPTS)
        .find_map(|(i, _)| {
            let mut p = Lenient::new(&text[i..]);
            match p.value(0) {
                Some(Value::Object(map)) => Some(map),
                _ => None,
            }
        })
}

/// Recursive-descent parser accepting JSON plus the usual LLM deviations:
/// single-quoted strings, bare keys, Python literals and trailing commas.
struct Lenient<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
}

impl<'a> Lenient<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            chars: s.chars().peekable(),
        }
    }

    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|c| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn value(&mut self, depth: usize) -> Option<Value> {
        if depth > MAX_DEPTH {
            return None;
        }
        self.skip_ws();
        match *self.chars.peek()? {
            '{' => self.object(depth),
            '[' => self.array(depth),
            '"' | '\'' => self.string().map(Value::String),
            _ => self.bare(),
        }
    }

    fn object(&mut self, depth: usize) -> Option<Value> {
        self.chars.next(); // '{'
        let mut map = Map::new();
        loop {
            self.skip_ws();
            match *self.chars.peek()? {
                '}' => {
                    self.chars.next();
                    return Some(Value::Object(map));
                }
                ',' => {
                    self.chars.next();
                    continue;
                }
                _ => {}
            }
            let key = match *self.chars.peek()? {
                '"' | '\'' => self.string()?,
                _ => self.bare_word()?,
            };
            self.skip_ws();
            if self.chars.next()? != ':' {
                return None;
            }
            let value = self.value(depth + 1)?;
            map.insert(key, value);
            self.skip_ws();
            match self.chars.next()? {
                ',' => {}
                '}' => return Some(Value::Object(map)),
                _ => return None,
            }
        }
    }

    fn array(&mut self, depth: usize) -> Option<Value> {
        self.chars.next(); // '['
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match *self.chars.peek()? {
                ']' => {
                    self.chars.next();
                    return Some(Value::Array(items));
                }
                ',' => {
                    self.chars.next();
                    continue;
                }
                _ => {}
            }
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.chars.next()? {
                ',' => {}
                ']' => return Some(Value::Array(items)),
                _ => return None,
            }
        }
    }

    /// A quoted string. Inside single quotes, an apostrophe only closes the
    /// string when the next non-space character could follow a value; this
    /// keeps `'the city's skyline'` intact.
    fn string(&mut self) -> Option<String> {
        let quote = self.chars.next()?;
        let mut out = String::new();
        loop {
            let c = self.chars.next()?;
            match c {
                '\\' => {
                    let escaped = self.chars.next()?;
                    match escaped {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        'u' => {
                            let hex: String = (0..4).filter_map(|_| self.chars.next()).collect();
                            let code = u32::from_str_radix(&hex, 16).ok()?;
                            out.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                        }
                        other => out.push(other),
                    }
                }
                c if c == quote => {
                    if quote == '\'' && !self.closes_value() {
                        out.push(c);
                    } else {
                        return Some(out);
                    }
                }
                c => out.push(c),
            }
        }
    }

    fn closes_value(&self) -> bool {
        let mut look = self.chars.clone();
        loop {
            match look.next() {
                None => return true,
                Some(c) if c.is_whitespace() => continue,
                Some(c) => return matches!(c, ',' | '}' | ']' | ':'),
            }
        }
    }

    fn bare_word(&mut self) -> Option<String> {
        let mut out = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '+') {
                out.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        (!out.is_empty()).then_some(out)
    }

    fn bare(&mut self) -> Option<Value> {
        let word = self.bare_word()?;
        Some(match word.as_str() {
            "null" | "None" => Value::Null,
            "true" | "True" => Value::Bool(true),
            "false" | "False" => Value::Bool(false),
            _ => match word.parse::<f64>() {
                Ok(n) => serde_json::Number::from_f64(n)
                    .map(Value::Number)
                    .unwrap_or(Value::Null),
                Err(_) => Value::String(word),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prompt_is_stable_and_names_keys() {
        assert_eq!(build_geoloc_prompt(), build_geoloc_prompt());
        for key in ["'country'", "'city'", "'reasons'"] {
            assert!(GEOLOC_PROMPT.contains(key));
        }
    }

    #[test]
    fn refusals() {
        for r in DEFAULT_REFUSALS {
            let p = parse_prediction(r);
            assert!(!p.effective);
            assert_eq!(p.failure_cause, Some(FailureCause::Refusal));
        }
    }

    #[test]
    fn refusal_wins_over_later_json() {
        let raw = format!(
            "{} {{\"country\": \"France\", \"city\": \"Paris\"}}",
            DEFAULT_REFUSALS[0].replace('\'', "\u{2019}")
        );
        assert_eq!(parse_prediction(&raw).failure_cause, Some(FailureCause::Refusal));
    }

    #[test]
    fn single_quoted_schema() {
        let p = parse_prediction("{'country': 'Singapore', 'city': 'Singapore', 'reasons': '...'}");
        assert!(p.effective);
        assert_eq!(p.country.as_deref(), Some("Singapore"));
        assert_eq!(p.reasons.as_deref(), Some("..."));
    }

    #[test]
    fn fenced_mixed_case_keys() {
        let p = parse_prediction("```json\n{\"Country\":\"China\",\"CITY\":\"Lhasa\",\"reasons\":\"...\"}\n```");
        assert!(p.effective);
        assert_eq!(p.country.as_deref(), Some("China"));
        assert_eq!(p.city.as_deref(), Some("Lhasa"));
    }

    #[test]
    fn apostrophes_inside_single_quotes() {
        let p = parse_prediction(
            "Answer: {'country': 'France', 'city': 'Paris', 'reasons': 'the city's skyline, it's Haussmann'}",
        );
        assert!(p.effective);
        assert_eq!(p.reasons.as_deref(), Some("the city's skyline, it's Haussmann"));
    }

    #[test]
    fn prose_then_object() {
        let p = parse_prediction(
            "Let me think. The signs are in Thai. {\"country\": \"Thailand\", \"city\": \"Bangkok\",}",
        );
        assert!(p.effective);
        assert_eq!(p.city.as_deref(), Some("Bangkok"));
    }

    #[test]
    fn missing_city_is_empty_cause() {
        let p = parse_prediction("{'country': 'Chile', 'city': '', 'reasons': 'roofs'}");
        assert!(!p.effective);
        assert_eq!(p.failure_cause, Some(FailureCause::Empty));
        assert_eq!(p.country.as_deref(), Some("Chile"));
    }

    #[test]
    fn garbage_is_unparseable() {
        assert_eq!(
            parse_prediction("no idea").failure_cause,
            Some(FailureCause::Unparseable)
        );
        assert_eq!(parse_prediction("{{{{").failure_cause, Some(FailureCause::Unparseable));
        assert_eq!(parse_prediction("   ").failure_cause, Some(FailureCause::Empty));
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let raw = "{\"a\":".repeat(10_000);
        assert!(!parse_prediction(&raw).effective);
    }

    proptest! {
        #[test]
        fn parser_is_total(raw in "\\PC{0,200}") {
            let rec = PredictionRecord::from_response("x", &raw, None, &RefusalDetector::default());
            prop_assert!(rec.is_consistent());
        }
    }
}
