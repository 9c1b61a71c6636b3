//! Per-outlet feature documents and TF-IDF vectorization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{read_jsonl, write_jsonl, LabeledCorpus, SplitManifest};
use crate::domain::{Domain, Label};
use crate::elicitation::{ElicitedResponse, ResponseStatus};
use crate::error::{Error, Result};
use crate::prompts::Suite;

/// Which parts of each answer feed the document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    LeaningOnly,
    ReasonOnly,
    #[default]
    LeaningPlusReason,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [
        AblationMode::LeaningOnly,
        AblationMode::ReasonOnly,
        AblationMode::LeaningPlusReason,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::LeaningOnly => "leaning",
            AblationMode::ReasonOnly => "reason",
            AblationMode::LeaningPlusReason => "both",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "leaning" | "leaning-only" => Ok(AblationMode::LeaningOnly),
            "reason" | "reason-only" => Ok(AblationMode::ReasonOnly),
            "both" | "leaning-plus-reason" | "leaning+reason" => Ok(AblationMode::LeaningPlusReason),
            other => Err(Error::Config(format!(
                "unknown ablation mode {other:?} (expected leaning, reason or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub mode: AblationMode,
    /// Prefix each answer with its question token (figure, topic or `Q1`..`Q6`).
    pub include_question_text: bool,
    pub suite: Suite,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDocument {
    pub outlet_domain: Domain,
    pub text: String,
    pub label: Option<Label>,
}

fn push_text(parts: &mut Vec<String>, text: &str) {
    let cleaned = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if !cleaned.is_empty() {
        parts.push(cleaned);
    }
}

/// Concatenate one outlet's responses, in the given order, into a document.
///
/// Parse failures contribute nothing. Abstentions contribute their literal
/// value (`unknown`, `-1`) and reason like any other answer.
pub fn build_document(
    domain: &Domain,
    responses: &[ElicitedResponse],
    config: &AblationConfig,
) -> Result<FeatureDocument> {
    let mut parts = Vec::new();
    for r in responses {
        if let Some(other) = r.outlet_domain.as_ref().filter(|d| *d != domain) {
            return Err(Error::MixedOutlets {
                first: domain.to_string(),
                other: other.to_string(),
            });
        }
        if r.status == ResponseStatus::ParseFailed || !config.suite.includes(r.category) {
            continue;
        }
        for answer in r.answers() {
            if config.include_question_text {
                if let Some(q) = &r.topic {
                    push_text(&mut parts, q);
                }
            }
            if config.mode != AblationMode::ReasonOnly {
                push_text(&mut parts, &answer.value);
            }
            if config.mode != AblationMode::LeaningOnly {
                push_text(&mut parts, &answer.reason);
            }
        }
    }
    Ok(FeatureDocument {
        outlet_domain: domain.clone(),
        text: parts.join(" "),
        label: None,
    })
}

/// One labelled document per outlet of `corpus`, in outlet order.
pub fn build_documents(corpus: &LabeledCorpus, config: &AblationConfig) -> Result<Vec<FeatureDocument>> {
    corpus
        .outlets
        .iter()
        .map(|o| {
            let mut doc = build_document(&o.domain, corpus.responses_for(&o.domain), config)?;
            doc.label = Some(corpus.gold(o));
            Ok(doc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerSettings {
    pub lowercase: bool,
    pub token_pattern: String,
    pub min_df: usize,
    pub ngram_range: (usize, usize),
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        TokenizerSettings {
            lowercase: true,
            token_pattern: r"[^\W_]+".into(),
            min_df: 2,
            ngram_range: (1, 1),
        }
    }
}

/// Compiled tokenizer for a [`TokenizerSettings`].
#[derive(Debug, Clone)]
pub struct Tokenizer {
    settings: TokenizerSettings,
    pattern: Regex,
}

impl Tokenizer {
    pub fn new(settings: &TokenizerSettings) -> Result<Self> {
        let (lo, hi) = settings.ngram_range;
        if lo == 0 || hi < lo {
            return Err(Error::InvalidParameter(format!(
                "ngram_range must satisfy 1 <= min <= max, got ({lo}, {hi})"
            )));
        }
        if settings.min_df == 0 {
            return Err(Error::InvalidParameter("min_df must be >= 1".into()));
        }
        let pattern = Regex::new(&settings.token_pattern)
            .map_err(|e| Error::InvalidParameter(format!("token_pattern: {e}")))?;
        Ok(Tokenizer {
            settings: settings.clone(),
            pattern,
        })
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let text = if self.settings.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        let words: Vec<&str> = self.pattern.find_iter(&text).map(|m| m.as_str()).collect();
        let (lo, hi) = self.settings.ngram_range;
        let mut out = Vec::new();
        for n in lo..=hi {
            for w in words.windows(n) {
                out.push(w.join(" "));
            }
        }
        out
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// From `(index, value)` pairs in any order; duplicates are summed and
    /// zeros dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, v) in pairs {
            if i as usize >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: i as usize + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite weight at {i}")));
            }
            *acc.entry(i).or_insert(0.0) += v;
        }
        let (indices, values) = acc.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Ok(SparseVector { dim, indices, values })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseVector {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    fn check_dim(&self, other: &SparseVector) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(sparse_dot(self, other))
    }

    /// `‖self − other‖²`, computed by merging the index lists.
    pub fn squared_distance(&self, other: &SparseVector) -> Result<f64> {
        self.check_dim(other)?;
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (self, other);
        while i < a.indices.len() && j < b.indices.len() {
            match a.indices[i].cmp(&b.indices[j]) {
                std::cmp::Ordering::Equal => {
                    let d = a.values[i] - b.values[j];
                    acc += d * d;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    acc += a.values[i] * a.values[i];
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    acc += b.values[j] * b.values[j];
                    j += 1;
                }
            }
        }
        acc += a.values[i..].iter().map(|v| v * v).sum::<f64>();
        acc += b.values[j..].iter().map(|v| v * v).sum::<f64>();
        Ok(acc)
    }

    /// Scale to unit L2 norm; the zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
        self
    }
}

pub(crate) fn sparse_dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            std::cmp::Ordering::Equal => {
                acc += a.values[i] * b.values[j];
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    acc
}

/// Fitted TF-IDF vectorizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub settings: TokenizerSettings,
    pub n_documents: usize,
    /// Term to column; columns follow lexicographic term order.
    pub vocabulary: BTreeMap<String, u32>,
    pub idf: Vec<f64>,
}

/// `ln((1 + n) / (1 + df)) + 1`.
pub fn smoothed_idf(n_documents: usize, df: usize) -> f64 {
    ((1.0 + n_documents as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Fit a vocabulary and idf weights on training texts.
pub fn fit_tfidf<S: AsRef<str>>(train: &[S], settings: &TokenizerSettings) -> Result<TfidfModel> {
    let tokenizer = Tokenizer::new(settings)?;
    let tokenized: Vec<BTreeSet<String>> = train
        .iter()
        .map(|t| tokenizer.tokens(t.as_ref()).into_iter().collect())
        .collect();
    if tokenized.iter().all(BTreeSet::is_empty) {
        return Err(Error::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in &tokenized {
        for term in doc {
            *df.entry(term.clone()).or_insert(0) += 1;
        }
    }
    let n = train.len();
    let kept: Vec<(String, usize)> = df.into_iter().filter(|(_, c)| *c >= settings.min_df).collect();
    let idf = kept.iter().map(|(_, c)| smoothed_idf(n, *c)).collect();
    let vocabulary = kept
        .into_iter()
        .enumerate()
        .map(|(i, (t, _))| (t, i as u32))
        .collect();
    Ok(TfidfModel {
        settings: settings.clone(),
        n_documents: n,
        vocabulary,
        idf,
    })
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// L2-normalized `count × idf` vector; unknown terms are ignored.
    pub fn transform(&self, text: &str) -> SparseVector {
        self.transform_with(&self.tokenizer(), text)
    }

    fn tokenizer(&self) -> Tokenizer {
        Tokenizer::new(&self.settings).expect("settings validated at fit and load time")
    }

    fn transform_with(&self, tokenizer: &Tokenizer, text: &str) -> SparseVector {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in tokenizer.tokens(text) {
            if let Some(&i) = self.vocabulary.get(&tok) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let (indices, values) = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i as usize]))
            .unzip();
        SparseVector {
            dim: self.dim(),
            indices,
            values,
        }
        .normalized()
    }

    pub fn transform_all<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Vec<SparseVector> {
        use rayon::prelude::*;
        let tokenizer = self.tokenizer();
        texts
            .par_iter()
            .map(|t| self.transform_with(&tokenizer, t.as_ref()))
            .collect()
    }

    /// Digest of the serialized model, used to tie classifiers to it.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TfidfModel = serde_json::from_str(&text)?;
        Tokenizer::new(&model.settings)?;
        if model.idf.len() != model.vocabulary.len() {
            return Err(Error::DimensionMismatch {
                expected: model.vocabulary.len(),
                actual: model.idf.len(),
            });
        }
        Ok(model)
    }
}

/// One line of the feature export consumed by external trainers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub domain: String,
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// Write labelled documents as JSONL, tagging each with its split when a
/// manifest is given. Documents outside the manifest are skipped.
pub fn export_features(
    path: impl AsRef<Path>,
    docs: &[FeatureDocument],
    manifest: Option<&SplitManifest>,
) -> Result<usize> {
    let (train, test) = match manifest {
        Some(m) => (m.train_domains()?, m.test_domains()?),
        None => Default::default(),
    };
    let records: Vec<FeatureRecord> = docs
        .iter()
        .filter_map(|d| {
            let split = match manifest {
                None => None,
                Some(_) if train.contains(&d.outlet_domain) => Some("train".to_string()),
                Some(_) if test.contains(&d.outlet_domain) => Some("test".to_string()),
                Some(_) => return None,
            };
            Some(FeatureRecord {
                domain: d.outlet_domain.to_string(),
                text: d.text.clone(),
                label: d.label.map(|l| l.as_str().to_string()).unwrap_or_default(),
                split,
            })
        })
        .collect();
    write_jsonl(path, &records)?;
    Ok(records.len())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    read_jsonl(path)
}
