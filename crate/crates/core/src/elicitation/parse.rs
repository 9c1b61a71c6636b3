//! Strict-schema reading of model replies.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::prompts::TemplateCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseFailureCode {
    NoJson,
    MissingKey,
    WrongShape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub code: ParseFailureCode,
    pub detail: String,
}

impl ParseFailure {
    fn new(code: ParseFailureCode, detail: impl Into<String>) -> Self {
        ParseFailure {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.detail)
    }
}

/// One judgment: the category's answer field plus the stated reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    /// `stance`, `answer`, `leaning`, `label` or `summary`.
    pub key: String,
    pub value: String,
    pub reason: String,
}

impl Answer {
    /// `unknown` leanings and `-1` labels.
    pub fn is_abstention(&self) -> bool {
        let v = self.value.trim();
        v == "-1" || v.eq_ignore_ascii_case("unknown")
    }
}

/// A single answer, or answers nested under outlet / question keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Parsed {
    Answer(Answer),
    Nested(IndexMap<String, Parsed>),
}

impl Parsed {
    /// Leaf answers in document order.
    pub fn answers(&self) -> Vec<&Answer> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Answer>) {
        match self {
            Parsed::Answer(a) => out.push(a),
            Parsed::Nested(map) => map.values().for_each(|p| p.collect(out)),
        }
    }

    /// Follow a key path through nested maps.
    pub fn get(&self, path: &[&str]) -> Option<&Parsed> {
        let mut cur = self;
        for key in path {
            match cur {
                Parsed::Nested(map) => cur = map.get(*key)?,
                Parsed::Answer(_) => return None,
            }
        }
        Some(cur)
    }

    pub fn as_answer(&self) -> Option<&Answer> {
        match self {
            Parsed::Answer(a) => Some(a),
            Parsed::Nested(_) => None,
        }
    }
}

/// Byte ranges of balanced `{...}` spans, skipping braces inside strings.
fn object_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i + 1);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(e) => {
                spans.push((open, e));
                start = e;
            }
            None => start = open + 1,
        }
    }
    spans
}

/// Drop commas that directly precede `}` or `]`, outside strings.
fn strip_trailing_commas(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_str = false;
    let mut escaped = false;
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// First JSON object in `raw`. Lenient mode tolerates prose, markdown fences
/// and trailing commas; strict mode accepts a bare object only.
pub fn extract_json_object(raw: &str, strict: bool) -> Option<Map<String, Value>> {
    if strict {
        return match serde_json::from_str::<Value>(raw.trim()) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        };
    }
    for (s, e) in object_spans(raw) {
        let candidate = &raw[s..e];
        let parsed = serde_json::from_str::<Value>(candidate)
            .or_else(|_| serde_json::from_str::<Value>(&strip_trailing_commas(candidate)));
        if let Ok(Value::Object(map)) = parsed {
            return Some(map);
        }
    }
    None
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items
                .iter()
                .map(|i| match i {
                    Value::Array(_) | Value::Object(_) | Value::Null => None,
                    other => scalar_text(other),
                })
                .collect();
            parts.map(|p| p.join(", "))
        }
        Value::Null | Value::Object(_) => None,
    }
}

fn find_key<'a>(map: &'a Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| {
        map.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(n))
            .map(|(_, v)| v)
    })
}

const REASON_KEYS: [&str; 2] = ["reason", "reasoning"];

fn parse_object(
    map: &Map<String, Value>,
    key: &'static str,
    reason_required: bool,
) -> Result<Parsed, ParseFailure> {
    let value_keys: &[&str] = if key == "label" {
        &["label", "output", "prediction"]
    } else {
        &[key]
    };
    if let Some(v) = find_key(map, value_keys) {
        let value = scalar_text(v)
            .ok_or_else(|| ParseFailure::new(ParseFailureCode::WrongShape, format!("`{key}` is not a scalar")))?;
        let reason = match find_key(map, &REASON_KEYS) {
            Some(r) => scalar_text(r).ok_or_else(|| {
                ParseFailure::new(ParseFailureCode::WrongShape, "`reason` is not a scalar")
            })?,
            None => String::new(),
        };
        if reason_required && reason.is_empty() {
            return Err(ParseFailure::new(ParseFailureCode::MissingKey, "reason"));
        }
        return Ok(Parsed::Answer(Answer {
            key: key.to_string(),
            value,
            reason,
        }));
    }
    if !map.is_empty() && map.values().all(Value::is_object) {
        let mut nested = IndexMap::with_capacity(map.len());
        for (k, v) in map {
            let inner = v.as_object().expect("checked above");
            nested.insert(k.clone(), parse_object(inner, key, reason_required)?);
        }
        return Ok(Parsed::Nested(nested));
    }
    Err(ParseFailure::new(ParseFailureCode::MissingKey, key))
}

/// Read a reply according to its category's schema. Never panics.
///
/// Stance prompts need `{stance, reason}`, credibility questions
/// `{answer, reason}`, systematic prompts `{leaning, reason}`. Zero-shot
/// replies may be a bare label or `{label}`; summaries are free text. Objects
/// keyed by outlet or question are read recursively.
pub fn parse_response(
    raw: &str,
    category: TemplateCategory,
    strict: bool,
) -> Result<Parsed, ParseFailure> {
    match category {
        TemplateCategory::Summarize => {
            let text = raw.trim();
            if text.is_empty() {
                Err(ParseFailure::new(ParseFailureCode::WrongShape, "empty summary"))
            } else {
                Ok(Parsed::Answer(Answer {
                    key: "summary".into(),
                    value: text.to_string(),
                    reason: String::new(),
                }))
            }
        }
        TemplateCategory::ZeroShotName | TemplateCategory::ZeroShotArticle => {
            if let Some(map) = extract_json_object(raw, strict) {
                return parse_object(&map, "label", false);
            }
            let text = raw.trim();
            if text.is_empty() || text.contains('{') {
                return Err(ParseFailure::new(ParseFailureCode::NoJson, "no label in reply"));
            }
            Ok(Parsed::Answer(Answer {
                key: "label".into(),
                value: text.to_string(),
                reason: String::new(),
            }))
        }
        other => {
            let key = other.answer_key().expect("judgment categories have a key");
            let map = extract_json_object(raw, strict).ok_or_else(|| {
                ParseFailure::new(ParseFailureCode::NoJson, "no JSON object in reply")
            })?;
            parse_object(&map, key, true)
        }
    }
}
