//! Label schemes, ordinal encodings and outlet metadata.
//!
//! Every label type has a fixed total order and a small integer code
//! (`0..k`). Metrics, the SVM and the voting rules all work on those codes,
//! so the order declared here is load-bearing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Common surface of the three ordinal label enums.
pub trait OrdinalLabel: Copy + Ord + fmt::Debug + 'static {
    const ALL: &'static [Self];

    fn code(self) -> u8;

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Canonical lowercase, hyphenated spelling used in files.
    fn as_str(self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactualityLabel {
    Low,
    Mixed,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasLabel3 {
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasLabel5 {
    Left,
    LeftCenter,
    Center,
    RightCenter,
    Right,
}

impl OrdinalLabel for FactualityLabel {
    const ALL: &'static [Self] = &[Self::Low, Self::Mixed, Self::High];

    fn code(self) -> u8 {
        self as u8
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Mixed => "mixed",
            Self::High => "high",
        }
    }
}

impl OrdinalLabel for BiasLabel3 {
    const ALL: &'static [Self] = &[Self::Left, Self::Center, Self::Right];

    fn code(self) -> u8 {
        self as u8
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Center => "center",
            Self::Right => "right",
        }
    }
}

impl OrdinalLabel for BiasLabel5 {
    const ALL: &'static [Self] = &[
        Self::Left,
        Self::LeftCenter,
        Self::Center,
        Self::RightCenter,
        Self::Right,
    ];

    fn code(self) -> u8 {
        self as u8
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::LeftCenter => "left-center",
            Self::Center => "center",
            Self::RightCenter => "right-center",
            Self::Right => "right",
        }
    }
}

macro_rules! label_display {
    ($($ty:ty),*) => {$(
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    )*};
}
label_display!(FactualityLabel, BiasLabel3, BiasLabel5);

/// How five-point bias labels map onto the three-point scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapsePolicy {
    /// left-center and right-center have no three-point label; such
    /// outlets drop out of the three-point task.
    #[default]
    DropFringe,
    /// left-center → left, right-center → right.
    Outward,
}

impl CollapsePolicy {
    pub fn apply(self, label: BiasLabel5) -> Option<BiasLabel3> {
        match (self, label) {
            (Self::DropFringe, BiasLabel5::LeftCenter | BiasLabel5::RightCenter) => None,
            _ => Some(collapse_bias5(label)),
        }
    }
}

impl FromStr for CollapsePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop-fringe" => Ok(Self::DropFringe),
            "outward" => Ok(Self::Outward),
            other => Err(Error::InvalidParameter(format!(
                "collapse policy {other:?} (expected drop-fringe or outward)"
            ))),
        }
    }
}

/// Outward collapse of the five-point scale.
pub fn collapse_bias5(label: BiasLabel5) -> BiasLabel3 {
    match label {
        BiasLabel5::Left | BiasLabel5::LeftCenter => BiasLabel3::Left,
        BiasLabel5::Center => BiasLabel3::Center,
        BiasLabel5::RightCenter | BiasLabel5::Right => BiasLabel3::Right,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Factuality,
    Bias3,
    Bias5,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Factuality, TaskKind::Bias3, TaskKind::Bias5];

    pub fn num_classes(self) -> usize {
        match self {
            TaskKind::Factuality => FactualityLabel::ALL.len(),
            TaskKind::Bias3 => BiasLabel3::ALL.len(),
            TaskKind::Bias5 => BiasLabel5::ALL.len(),
        }
    }

    pub fn labels(self) -> Vec<Label> {
        (0..self.num_classes() as u8)
            .map(|c| Label::from_code(self, c).expect("code in range"))
            .collect()
    }

    /// Largest possible ordinal distance on this scale.
    pub fn max_distance(self) -> u8 {
        self.num_classes() as u8 - 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Factuality => "factuality",
            TaskKind::Bias3 => "bias3",
            TaskKind::Bias5 => "bias5",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "factuality" => Ok(TaskKind::Factuality),
            "bias3" | "bias" => Ok(TaskKind::Bias3),
            "bias5" => Ok(TaskKind::Bias5),
            other => Err(Error::InvalidParameter(format!("unknown task {other:?}"))),
        }
    }
}

/// A label from any of the three schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Factuality(FactualityLabel),
    Bias3(BiasLabel3),
    Bias5(BiasLabel5),
}

impl Label {
    pub fn task(self) -> TaskKind {
        match self {
            Label::Factuality(_) => TaskKind::Factuality,
            Label::Bias3(_) => TaskKind::Bias3,
            Label::Bias5(_) => TaskKind::Bias5,
        }
    }

    pub fn code(self) -> u8 {
        encode_ordinal(self)
    }

    pub fn from_code(task: TaskKind, code: u8) -> Option<Label> {
        match task {
            TaskKind::Factuality => FactualityLabel::from_code(code).map(Label::Factuality),
            TaskKind::Bias3 => BiasLabel3::from_code(code).map(Label::Bias3),
            TaskKind::Bias5 => BiasLabel5::from_code(code).map(Label::Bias5),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Factuality(l) => l.as_str(),
            Label::Bias3(l) => l.as_str(),
            Label::Bias5(l) => l.as_str(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn encode_ordinal(label: Label) -> u8 {
    match label {
        Label::Factuality(l) => l.code(),
        Label::Bias3(l) => l.code(),
        Label::Bias5(l) => l.code(),
    }
}

pub fn decode_ordinal(task: TaskKind, code: u8) -> Option<Label> {
    Label::from_code(task, code)
}

/// Outcome of reading a model's label field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Label(Label),
    Abstain,
}

impl Verdict {
    pub fn label(self) -> Option<Label> {
        match self {
            Verdict::Label(l) => Some(l),
            Verdict::Abstain => None,
        }
    }

    /// `"-1"` for abstentions, the canonical label string otherwise.
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Label(l) => l.as_str(),
            Verdict::Abstain => "-1",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn normalize_label_text(text: &str) -> String {
    let trimmed = text.trim_matches(|c: char| !c.is_alphanumeric());
    let mut out = String::with_capacity(trimmed.len());
    let mut pending_sep = false;
    for c in trimmed.chars() {
        if c == '-' || c == '_' || c.is_whitespace() {
            pending_sep = true;
            continue;
        }
        if pending_sep && !out.is_empty() {
            out.push('-');
        }
        pending_sep = false;
        out.extend(c.to_lowercase());
    }
    out.replace("centre", "center")
}

fn is_abstain(text: &str) -> bool {
    let t = text
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '.');
    t == "-1" || t.eq_ignore_ascii_case("unknown")
}

/// Parse a raw label field. Case-insensitive; hyphen, space and underscore
/// separators are interchangeable; `-1` and `unknown` abstain.
pub fn parse_label(text: &str, task: TaskKind) -> Result<Verdict> {
    if is_abstain(text) {
        return Ok(Verdict::Abstain);
    }
    let norm = normalize_label_text(text);
    let label = match task {
        TaskKind::Factuality => match norm.as_str() {
            "low" => Some(Label::Factuality(FactualityLabel::Low)),
            "mixed" => Some(Label::Factuality(FactualityLabel::Mixed)),
            "high" => Some(Label::Factuality(FactualityLabel::High)),
            _ => None,
        },
        TaskKind::Bias3 => match norm.as_str() {
            "left" => Some(Label::Bias3(BiasLabel3::Left)),
            "center" => Some(Label::Bias3(BiasLabel3::Center)),
            "right" => Some(Label::Bias3(BiasLabel3::Right)),
            _ => None,
        },
        TaskKind::Bias5 => match norm.as_str() {
            "left" => Some(Label::Bias5(BiasLabel5::Left)),
            "left-center" | "leftcenter" | "center-left" => {
                Some(Label::Bias5(BiasLabel5::LeftCenter))
            }
            "center" => Some(Label::Bias5(BiasLabel5::Center)),
            "right-center" | "rightcenter" | "center-right" => {
                Some(Label::Bias5(BiasLabel5::RightCenter))
            }
            "right" => Some(Label::Bias5(BiasLabel5::Right)),
            _ => None,
        },
    };
    label.map(Verdict::Label).ok_or_else(|| Error::UnrecognizedLabel {
        text: text.to_string(),
        task,
    })
}

/// A normalized hostname: lowercase, no scheme, no path, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Domain(String);

impl Domain {
    pub fn parse(raw: &str) -> Result<Self> {
        let mut s = raw.trim().to_lowercase();
        if let Some(idx) = s.find("://") {
            s = s[idx + 3..].to_string();
        }
        if let Some(idx) = s.find(['/', '?', '#']) {
            s.truncate(idx);
        }
        let s = s.trim_end_matches('.').to_string();
        let valid = !s.is_empty()
            && s
                .chars()
                .all(|c| c.is_alphanumeric() || matches!(c, '.' | '-' | '_' | ':'));
        if valid {
            Ok(Domain(s))
        } else {
            Err(Error::InvalidDomain(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Domain {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Domain::parse(&value)
    }
}

impl From<Domain> for String {
    fn from(d: Domain) -> String {
        d.0
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Domain {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "US")]
    Us,
    #[serde(rename = "non-US")]
    NonUs,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

impl Region {
    /// US spellings map to `Us`, blanks and "unknown" to `Unknown`, and any
    /// other value (a country name, "non-US") to `NonUs`.
    pub fn parse(raw: &str) -> Region {
        let t = raw.trim().to_ascii_lowercase();
        match t.as_str() {
            "" | "unknown" | "n/a" | "na" | "-" => Region::Unknown,
            "us" | "u.s." | "usa" | "u.s.a." | "united states" | "united states of america" => {
                Region::Us
            }
            _ => Region::NonUs,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Us => "US",
            Region::NonUs => "non-US",
            Region::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outlet {
    pub domain: Domain,
    pub factuality: Option<FactualityLabel>,
    pub bias3: Option<BiasLabel3>,
    pub bias5: Option<BiasLabel5>,
    pub alexa_rank: Option<u64>,
    #[serde(default)]
    pub region: Region,
}

impl Outlet {
    pub fn new(domain: Domain) -> Self {
        Outlet {
            domain,
            factuality: None,
            bias3: None,
            bias5: None,
            alexa_rank: None,
            region: Region::Unknown,
        }
    }

    /// Sets `bias5` and derives `bias3` under `policy`.
    pub fn with_bias5(mut self, label: BiasLabel5, policy: CollapsePolicy) -> Self {
        self.bias5 = Some(label);
        self.bias3 = policy.apply(label);
        self
    }

    pub fn gold(&self, task: TaskKind) -> Option<Label> {
        match task {
            TaskKind::Factuality => self.factuality.map(Label::Factuality),
            TaskKind::Bias3 => self.bias3.map(Label::Bias3),
            TaskKind::Bias5 => self.bias5.map(Label::Bias5),
        }
    }
}
