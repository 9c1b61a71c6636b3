//! Classification metrics, report tables and popularity/region breakdowns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::read_jsonl;
use crate::domain::{parse_label, Domain, Label, Outlet, Region, TaskKind, Verdict};
use crate::error::{Error, Result};

/// How abstentions enter the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbstainPolicy {
    /// Scored as an error at the largest distance from the gold code.
    #[default]
    CountWrong,
    /// Dropped from every denominator.
    Exclude,
}

impl AbstainPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AbstainPolicy::CountWrong => "count-wrong",
            AbstainPolicy::Exclude => "exclude",
        }
    }
}

impl std::str::FromStr for AbstainPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "count-wrong" | "countwrong" | "wrong" => Ok(AbstainPolicy::CountWrong),
            "exclude" => Ok(AbstainPolicy::Exclude),
            other => Err(Error::Config(format!("unknown abstain policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    /// Items scored, abstentions included under `CountWrong`.
    pub n: usize,
    pub accuracy: f64,
    pub mae: f64,
    /// Keyed by label, in ordinal order.
    pub per_class: IndexMap<String, ClassMetrics>,
    /// `confusion[gold][pred]` over ordinal codes.
    pub confusion: Vec<Vec<usize>>,
    #[serde(default)]
    pub abstained: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<AbstainPolicy>,
    /// Free-form system name for tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
}

impl EvalReport {
    pub fn with_system(mut self, name: impl Into<String>) -> Self {
        self.system = Some(name.into());
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn macro_f1(&self) -> f64 {
        if self.per_class.is_empty() {
            return 0.0;
        }
        self.per_class.values().map(|m| m.f1).sum::<f64>() / self.per_class.len() as f64
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_task(labels: &[Label], task: TaskKind) -> Result<()> {
    match labels.iter().find(|l| l.task() != task) {
        Some(l) => Err(Error::InvalidParameter(format!(
            "label {l} belongs to {}, not {task}",
            l.task()
        ))),
        None => Ok(()),
    }
}

/// `(gold code, predicted code or abstention)` pairs to a report.
fn score(task: TaskKind, pairs: &[(u8, Option<u8>)], policy: Option<AbstainPolicy>) -> EvalReport {
    let k = task.num_classes();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut abstained_by_gold = vec![0usize; k];
    let mut abs_err = 0u64;
    let mut abstained = 0;
    for &(g, p) in pairs {
        match p {
            Some(p) => {
                confusion[g as usize][p as usize] += 1;
                abs_err += (g as i64 - p as i64).unsigned_abs();
            }
            None => {
                abstained += 1;
                if policy != Some(AbstainPolicy::Exclude) {
                    abstained_by_gold[g as usize] += 1;
                    abs_err += u64::from(g.max(k as u8 - 1 - g));
                }
            }
        }
    }
    let n = pairs.len() - if policy == Some(AbstainPolicy::Exclude) { abstained } else { 0 };
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let mut per_class = IndexMap::new();
    for (c, label) in task.labels().into_iter().enumerate() {
        let tp = confusion[c][c];
        let predicted: usize = (0..k).map(|g| confusion[g][c]).sum();
        let support: usize = confusion[c].iter().sum::<usize>() + abstained_by_gold[c];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        per_class.insert(
            label.as_str().to_string(),
            ClassMetrics {
                precision,
                recall,
                f1: f1(precision, recall),
                support,
            },
        );
    }
    EvalReport {
        task,
        n,
        accuracy: ratio(correct, n),
        mae: if n == 0 { 0.0 } else { abs_err as f64 / n as f64 },
        per_class,
        confusion,
        abstained,
        policy,
        system: None,
    }
}

/// Per-class precision/recall/F1 (0/0 = 0), accuracy and ordinal MAE.
pub fn compute_metrics(preds: &[Label], gold: &[Label], task: TaskKind) -> Result<EvalReport> {
    if preds.len() != gold.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            gold: gold.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty);
    }
    check_task(preds, task)?;
    check_task(gold, task)?;
    let pairs: Vec<(u8, Option<u8>)> = gold
        .iter()
        .zip(preds)
        .map(|(g, p)| (g.code(), Some(p.code())))
        .collect();
    Ok(score(task, &pairs, None))
}

/// Like [`compute_metrics`], with abstentions scored under `policy`.
///
/// Under `CountWrong` an abstention adds to `n` and to the gold class's
/// support, and contributes the largest possible error for its gold code
/// to MAE. Under `Exclude` it only increments `abstained`.
pub fn compute_metrics_with_abstentions(
    preds: &[Verdict],
    gold: &[Label],
    task: TaskKind,
    policy: AbstainPolicy,
) -> Result<EvalReport> {
    if preds.len() != gold.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            gold: gold.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty);
    }
    check_task(gold, task)?;
    let labels: Vec<Label> = preds.iter().filter_map(|v| v.label()).collect();
    check_task(&labels, task)?;
    let pairs: Vec<(u8, Option<u8>)> = gold
        .iter()
        .zip(preds)
        .map(|(g, p)| (g.code(), p.label().map(Label::code)))
        .collect();
    Ok(score(task, &pairs, Some(policy)))
}

/// Three-decimal figure without the leading zero: `0.5713` → `.571`.
pub fn format_metric(x: f64) -> String {
    let s = format!("{x:.3}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => s,
    }
}

/// Aligned text table: one row per report with per-class F1, accuracy and MAE.
pub fn render_table(reports: &[EvalReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut header = vec!["System".to_string()];
    header.extend(first.task.labels().iter().map(|l| format!("F1 {l}")));
    header.push("Acc".into());
    header.push("MAE".into());
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.system.clone().unwrap_or_else(|| "-".into())];
        for l in r.task.labels() {
            row.push(
                r.per_class
                    .get(l.as_str())
                    .map(|m| format_metric(m.f1))
                    .unwrap_or_else(|| "-".into()),
            );
        }
        row.push(format_metric(r.accuracy));
        row.push(format_metric(r.mae));
        rows.push(row);
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (cols - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// Confusion matrix as text, gold in rows.
pub fn render_confusion(report: &EvalReport) -> String {
    let labels = report.task.labels();
    let names: Vec<&str> = labels.iter().map(|l| l.as_str()).collect();
    let w = names
        .iter()
        .map(|s| s.len())
        .chain(report.confusion.iter().flatten().map(|v| v.to_string().len()))
        .max()
        .unwrap_or(1)
        .max("gold\\pred".len());
    let mut out = format!("{:<w$}", "gold\\pred");
    for n in &names {
        let _ = write!(out, "  {n:>w$}");
    }
    out.push('\n');
    for (g, row) in report.confusion.iter().enumerate() {
        let _ = write!(out, "{:<w$}", names[g]);
        for v in row {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StratumDimension {
    AlexaLogRank { bin_width: f64 },
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBin {
    pub descriptor: String,
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub dimension: StratumDimension,
    pub bins: Vec<StratumBin>,
    /// Scored outlets lacking the metadata for this dimension.
    pub remainder: usize,
    /// Outlets with no entry in the correctness map.
    pub unmatched: Vec<String>,
}

impl StratifiedReport {
    pub fn render(&self) -> String {
        let title = match self.dimension {
            StratumDimension::AlexaLogRank { bin_width } => {
                format!("Accuracy by log10 popularity rank (bin width {bin_width})")
            }
            StratumDimension::Region => "Accuracy by region".to_string(),
        };
        let w = self
            .bins
            .iter()
            .map(|b| b.descriptor.len())
            .max()
            .unwrap_or(0)
            .max(3);
        let mut out = format!("{title}\n{:<w$}  {:>6}  {:>7}  {:>5}\n", "bin", "n", "correct", "acc");
        for b in &self.bins {
            let _ = writeln!(
                out,
                "{:<w$}  {:>6}  {:>7}  {:>5}",
                b.descriptor,
                b.n,
                b.n_correct,
                format_metric(b.accuracy)
            );
        }
        let missing = match self.dimension {
            StratumDimension::AlexaLogRank { .. } => "no rank",
            StratumDimension::Region => "unknown region",
        };
        let _ = writeln!(out, "{missing}: {}", self.remainder);
        if !self.unmatched.is_empty() {
            let _ = writeln!(out, "without prediction: {}", self.unmatched.len());
        }
        out
    }
}

fn make_bin(descriptor: String, n: usize, n_correct: usize) -> StratumBin {
    StratumBin {
        descriptor,
        n,
        n_correct,
        accuracy: ratio(n_correct, n),
    }
}

fn trim_float(x: f64) -> String {
    let s = format!("{x}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// Bin index of a rank: `floor(log10(rank) / width)`.
pub fn popularity_bin(rank: u64, bin_width: f64) -> i64 {
    let r = rank as f64;
    let mut b = (r.log10() / bin_width).floor() as i64;
    // log10 may land a hair off at exact powers of ten
    if 10f64.powf((b + 1) as f64 * bin_width) <= r {
        b += 1;
    } else if 10f64.powf(b as f64 * bin_width) > r {
        b -= 1;
    }
    b
}

/// Accuracy per `log10(alexa_rank)` bin of width `bin_width`.
pub fn stratify_by_popularity(
    outlets: &[Outlet],
    correctness: &BTreeMap<Domain, bool>,
    bin_width: f64,
) -> Result<StratifiedReport> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidParameter(format!("bin width must be positive, got {bin_width}")));
    }
    let mut bins: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    let mut remainder = 0;
    let mut unmatched = Vec::new();
    for o in outlets {
        let Some(&ok) = correctness.get(&o.domain) else {
            unmatched.push(o.domain.to_string());
            continue;
        };
        match o.alexa_rank {
            Some(rank) => {
                let e = bins.entry(popularity_bin(rank, bin_width)).or_default();
                e.0 += 1;
                e.1 += usize::from(ok);
            }
            None => remainder += 1,
        }
    }
    let bins = bins
        .into_iter()
        .map(|(b, (n, c))| {
            let lo = b as f64 * bin_width;
            let hi = lo + bin_width;
            make_bin(format!("[{},{})", trim_float(lo), trim_float(hi)), n, c)
        })
        .collect();
    Ok(StratifiedReport {
        dimension: StratumDimension::AlexaLogRank { bin_width },
        bins,
        remainder,
        unmatched,
    })
}

/// Accuracy for US and non-US outlets; unknown regions go to `remainder`.
pub fn stratify_by_region(outlets: &[Outlet], correctness: &BTreeMap<Domain, bool>) -> StratifiedReport {
    let mut counts = [(0usize, 0usize); 2];
    let mut remainder = 0;
    let mut unmatched = Vec::new();
    for o in outlets {
        let Some(&ok) = correctness.get(&o.domain) else {
            unmatched.push(o.domain.to_string());
            continue;
        };
        let slot = match o.region {
            Region::Us => 0,
            Region::NonUs => 1,
            Region::Unknown => {
                remainder += 1;
                continue;
            }
        };
        counts[slot].0 += 1;
        counts[slot].1 += usize::from(ok);
    }
    StratifiedReport {
        dimension: StratumDimension::Region,
        bins: vec![
            make_bin(Region::Us.as_str().into(), counts[0].0, counts[0].1),
            make_bin(Region::NonUs.as_str().into(), counts[1].0, counts[1].1),
        ],
        remainder,
        unmatched,
    }
}

/// Scatter data for plotting: `domain,log10_rank,gold,correct`, one row per
/// scored outlet with a rank.
pub fn write_scatter_csv(
    path: impl AsRef<Path>,
    outlets: &[Outlet],
    correctness: &BTreeMap<Domain, bool>,
    task: TaskKind,
) -> Result<usize> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["domain", "log10_rank", "gold", "correct"])?;
    let mut rows = 0;
    for o in outlets {
        let (Some(rank), Some(&ok)) = (o.alexa_rank, correctness.get(&o.domain)) else {
            continue;
        };
        w.write_record([
            o.domain.as_str(),
            &format!("{:.6}", (rank as f64).log10()),
            o.gold(task).map(|l| l.as_str()).unwrap_or(""),
            if ok { "true" } else { "false" },
        ])?;
        rows += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

/// One prediction line. Zero-shot files name the field `final`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub domain: String,
    #[serde(alias = "final")]
    pub pred: String,
}

/// Read predictions from a JSON array or JSON lines.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('[') {
        Ok(serde_json::from_str(&text)?)
    } else {
        read_jsonl(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEvaluation {
    pub report: EvalReport,
    pub correctness: BTreeMap<Domain, bool>,
    /// Predicted domains with no gold label for the task.
    pub skipped: Vec<String>,
    /// Evaluation domains with no prediction; scored as abstentions.
    pub missing: Vec<String>,
}

/// Join predictions with gold labels and score them.
///
/// The evaluation set is `restrict` when given (typically a split's test
/// domains), otherwise every predicted domain.
pub fn evaluate_predictions(
    outlets: &[Outlet],
    task: TaskKind,
    records: &[PredictionRecord],
    restrict: Option<&BTreeSet<Domain>>,
    policy: AbstainPolicy,
) -> Result<PredictionEvaluation> {
    let gold: BTreeMap<&Domain, Label> = outlets
        .iter()
        .filter_map(|o| o.gold(task).map(|l| (&o.domain, l)))
        .collect();
    let mut preds: BTreeMap<Domain, Verdict> = BTreeMap::new();
    for r in records {
        let d = Domain::parse(&r.domain)?;
        preds.insert(d, parse_label(&r.pred, task)?);
    }
    let domains: Vec<Domain> = match restrict {
        Some(set) => set.iter().cloned().collect(),
        None => preds.keys().cloned().collect(),
    };
    let mut skipped = Vec::new();
    let mut missing = Vec::new();
    let mut verdicts = Vec::new();
    let mut golds = Vec::new();
    let mut scored = Vec::new();
    for d in domains {
        let Some(&g) = gold.get(&d) else {
            skipped.push(d.to_string());
            continue;
        };
        let v = match preds.get(&d) {
            Some(v) => *v,
            None => {
                missing.push(d.to_string());
                Verdict::Abstain
            }
        };
        verdicts.push(v);
        golds.push(g);
        scored.push(d);
    }
    if !skipped.is_empty() {
        warn!("{} predicted domain(s) have no {task} gold label", skipped.len());
    }
    if !missing.is_empty() {
        warn!("{} domain(s) have no prediction and count as abstentions", missing.len());
    }
    let report = compute_metrics_with_abstentions(&verdicts, &golds, task, policy)?;
    let correctness = scored
        .into_iter()
        .zip(verdicts.iter().zip(&golds))
        .map(|(d, (v, g))| (d, v.label() == Some(*g)))
        .collect();
    Ok(PredictionEvaluation {
        report,
        correctness,
        skipped,
        missing,
    })
}
