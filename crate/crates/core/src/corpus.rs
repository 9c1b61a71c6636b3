//! Gold labels, outlet metadata, elicited corpora and train/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::domain::{
    parse_label, BiasLabel5, CollapsePolicy, Domain, Label, OrdinalLabel, Outlet,
    Region,
    TaskKind, Verdict,
};
use crate::elicitation::ElicitedResponse;
use crate::error::{Error, Result};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowReject {
    /// 1-based line number in the source file (header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub outlets: Vec<Outlet>,
    pub rejects: Vec<RowReject>,
}

impl IngestReport {
    /// Count of outlets carrying a gold label for each class of `task`.
    pub fn histogram(&self, task: TaskKind) -> BTreeMap<Label, usize> {
        label_histogram(&self.outlets, task)
    }
}

pub fn label_histogram(outlets: &[Outlet], task: TaskKind) -> BTreeMap<Label, usize> {
    let mut h = BTreeMap::new();
    for o in outlets {
        if let Some(l) = o.gold(task) {
            *h.entry(l).or_insert(0) += 1;
        }
    }
    h
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn require_column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    column(headers, name).ok_or_else(|| Error::MissingColumn {
        path: path.to_path_buf(),
        column: name.to_string(),
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_rank(cell: &str) -> std::result::Result<Option<u64>, String> {
    let cell = cell.trim().replace(',', "");
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<u64>() {
        Ok(0) => Err("alexa_rank must be >= 1".into()),
        Ok(r) => Ok(Some(r)),
        Err(_) => Err(format!("alexa_rank {cell:?} is not a positive integer")),
    }
}

fn parse_cell<T>(
    cell: &str,
    task: TaskKind,
    pick: impl Fn(Label) -> Option<T>,
) -> std::result::Result<Option<T>, String> {
    if cell.trim().is_empty() {
        return Ok(None);
    }
    match parse_label(cell, task) {
        Ok(Verdict::Label(l)) => pick(l)
            .map(Some)
            .ok_or_else(|| format!("unexpected {task} label {cell:?}")),
        Ok(Verdict::Abstain) | Err(_) => Err(format!("unknown {task} label {cell:?}")),
    }
}

/// Read an outlet label CSV.
///
/// Required columns: `domain`, `factuality`, `bias5`; optional: `alexa_rank`,
/// `region`. Label cells may be blank. Rows that fail validation are
/// reported with their line number and skipped.
pub fn ingest_labels(path: impl AsRef<Path>, policy: CollapsePolicy) -> Result<IngestReport> {
    let path = path.as_ref();
    ingest_labels_from_reader(open(path)?, path, policy)
}

pub fn ingest_labels_from_reader(
    reader: impl Read,
    source: &Path,
    policy: CollapsePolicy,
) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile(source.to_path_buf()));
    }
    let domain_col = require_column(&headers, "domain", source)?;
    let fact_col = require_column(&headers, "factuality", source)?;
    let bias_col = require_column(&headers, "bias5", source)?;
    let rank_col = column(&headers, "alexa_rank");
    let region_col = column(&headers, "region");

    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        rows += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let parsed = (|| -> std::result::Result<Outlet, String> {
            let domain = Domain::parse(get(domain_col)).map_err(|e| e.to_string())?;
            let mut outlet = Outlet::new(domain);
            outlet.factuality = parse_cell(get(fact_col), TaskKind::Factuality, |l| match l {
                Label::Factuality(f) => Some(f),
                _ => None,
            })?;
            let bias5: Option<BiasLabel5> = parse_cell(get(bias_col), TaskKind::Bias5, |l| match l {
                Label::Bias5(b) => Some(b),
                _ => None,
            })?;
            if let Some(b) = bias5 {
                outlet = outlet.with_bias5(b, policy);
            }
            if let Some(i) = rank_col {
                outlet.alexa_rank = parse_rank(get(i))?;
            }
            if let Some(i) = region_col {
                outlet.region = Region::parse(get(i));
            }
            Ok(outlet)
        })();
        match parsed {
            Ok(o) if !seen.insert(o.domain.clone()) => report.rejects.push(RowReject {
                line,
                reason: format!("duplicate domain {}", o.domain),
            }),
            Ok(o) => report.outlets.push(o),
            Err(reason) => report.rejects.push(RowReject { line, reason }),
        }
    }
    if rows == 0 {
        return Err(Error::EmptyFile(source.to_path_buf()));
    }
    for r in &report.rejects {
        warn!("{}:{}: rejected row: {}", source.display(), r.line, r.reason);
    }
    Ok(report)
}

/// Write outlets in the format [`ingest_labels`] reads.
pub fn write_labels_csv(path: impl AsRef<Path>, outlets: &[Outlet]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_labels(file, outlets)
}

pub fn write_labels(writer: impl Write, outlets: &[Outlet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["domain", "factuality", "bias5", "alexa_rank", "region"])?;
    for o in outlets {
        w.write_record([
            o.domain.as_str(),
            o.factuality.map(OrdinalLabel::as_str).unwrap_or(""),
            o.bias5.map(OrdinalLabel::as_str).unwrap_or(""),
            &o.alexa_rank.map(|r| r.to_string()).unwrap_or_default(),
            o.region.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(PathBuf::from("<labels>"), e))?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetadataReport {
    pub ranks_joined: usize,
    pub regions_joined: usize,
    pub rejects: Vec<RowReject>,
}

/// Join popularity ranks and regions onto outlets by domain. Outlets absent
/// from a file keep their current values.
pub fn attach_metadata(
    outlets: &mut [Outlet],
    rank_file: Option<&Path>,
    region_file: Option<&Path>,
) -> Result<MetadataReport> {
    let mut report = MetadataReport::default();
    let index: BTreeMap<Domain, usize> = outlets
        .iter()
        .enumerate()
        .map(|(i, o)| (o.domain.clone(), i))
        .collect();

    if let Some(path) = rank_file {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(open(path)?);
        let headers = rdr.headers()?.clone();
        let d = require_column(&headers, "domain", path)?;
        let r = column(&headers, "alexa_rank")
            .or_else(|| column(&headers, "rank"))
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: "alexa_rank".into(),
            })?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let Ok(domain) = Domain::parse(rec.get(d).unwrap_or("")) else {
                report.rejects.push(RowReject { line, reason: "invalid domain".into() });
                continue;
            };
            match parse_rank(rec.get(r).unwrap_or("")) {
                Ok(rank) => {
                    if let Some(&i) = index.get(&domain) {
                        outlets[i].alexa_rank = rank;
                        report.ranks_joined += 1;
                    }
                }
                Err(reason) => report.rejects.push(RowReject { line, reason }),
            }
        }
    }

    if let Some(path) = region_file {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(open(path)?);
        let headers = rdr.headers()?.clone();
        let d = require_column(&headers, "domain", path)?;
        let r = require_column(&headers, "region", path)?;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let Ok(domain) = Domain::parse(rec.get(d).unwrap_or("")) else {
                report.rejects.push(RowReject { line, reason: "invalid domain".into() });
                continue;
            };
            if let Some(&i) = index.get(&domain) {
                outlets[i].region = Region::parse(rec.get(r).unwrap_or(""));
                report.regions_joined += 1;
            }
        }
    }
    Ok(report)
}

/// Write a JSON-lines file, one serialized item per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, responses: &[ElicitedResponse]) -> Result<()> {
    write_jsonl(path, responses)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<ElicitedResponse>> {
    read_jsonl(path)
}

/// Outlets labelled for one task together with their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub task: TaskKind,
    pub outlets: Vec<Outlet>,
    pub responses: BTreeMap<Domain, Vec<ElicitedResponse>>,
}

impl LabeledCorpus {
    /// Keep outlets with a gold label for `task` and the responses that
    /// belong to them. Responses for other outlets are dropped.
    pub fn new(task: TaskKind, outlets: &[Outlet], responses: Vec<ElicitedResponse>) -> Self {
        let outlets: Vec<Outlet> = outlets
            .iter()
            .filter(|o| o.gold(task).is_some())
            .cloned()
            .collect();
        let known: BTreeSet<&Domain> = outlets.iter().map(|o| &o.domain).collect();
        let mut grouped: BTreeMap<Domain, Vec<ElicitedResponse>> = BTreeMap::new();
        let mut dropped = 0usize;
        for r in responses {
            match &r.outlet_domain {
                Some(d) if known.contains(d) => grouped.entry(d.clone()).or_default().push(r),
                _ => dropped += 1,
            }
        }
        if dropped > 0 {
            warn!("{dropped} response(s) have no {task}-labelled outlet and were dropped");
        }
        LabeledCorpus {
            task,
            outlets,
            responses: grouped,
        }
    }

    pub fn len(&self) -> usize {
        self.outlets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outlets.is_empty()
    }

    pub fn gold(&self, outlet: &Outlet) -> Label {
        outlet
            .gold(self.task)
            .expect("LabeledCorpus only holds labelled outlets")
    }

    pub fn responses_for(&self, domain: &Domain) -> &[ElicitedResponse] {
        self.responses.get(domain).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn histogram(&self) -> BTreeMap<Label, usize> {
        label_histogram(&self.outlets, self.task)
    }

    /// Corpus restricted to `domains`, in this corpus's outlet order.
    pub fn subset(&self, domains: &BTreeSet<Domain>) -> LabeledCorpus {
        LabeledCorpus {
            task: self.task,
            outlets: self
                .outlets
                .iter()
                .filter(|o| domains.contains(&o.domain))
                .cloned()
                .collect(),
            responses: self
                .responses
                .iter()
                .filter(|(d, _)| domains.contains(*d))
                .map(|(d, r)| (d.clone(), r.clone()))
                .collect(),
        }
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<(LabeledCorpus, LabeledCorpus, SplitManifest)> {
        let items: Vec<(Domain, Label)> = self
            .outlets
            .iter()
            .map(|o| (o.domain.clone(), self.gold(o)))
            .collect();
        let manifest = split(&items, self.task, spec)?;
        let train: BTreeSet<Domain> = manifest.train_domains()?;
        let test: BTreeSet<Domain> = manifest.test_domains()?;
        Ok((self.subset(&train), self.subset(&test), manifest))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: DEFAULT_SEED,
            stratified: true,
        }
    }
}

/// Record of a split, sufficient to reproduce membership exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub task: TaskKind,
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    fn domains(list: &[String]) -> Result<BTreeSet<Domain>> {
        list.iter().map(|d| Domain::parse(d)).collect()
    }

    pub fn train_domains(&self) -> Result<BTreeSet<Domain>> {
        Self::domains(&self.train)
    }

    pub fn test_domains(&self) -> Result<BTreeSet<Domain>> {
        Self::domains(&self.test)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Per-class train counts: floor or ceil of the exact share, at least one
/// item on each side, summing to `round(fraction * n)` where the clamps allow.
fn allocate(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&n| fraction * n as f64).collect();
    let lo: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(&e, &n)| (e.floor() as usize).max(1).min(n - 1))
        .collect();
    let hi: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(&e, &n)| (e.ceil() as usize).max(1).min(n - 1))
        .collect();
    let mut alloc = lo.clone();
    let mut sum: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // largest fractional remainder first; ties keep class order
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in &order {
        if sum >= target {
            break;
        }
        if alloc[c] < hi[c] {
            alloc[c] += 1;
            sum += 1;
        }
    }
    alloc
}

/// Deterministic train/test split of labelled items.
pub fn split(items: &[(Domain, Label)], task: TaskKind, spec: &SplitSpec) -> Result<SplitManifest> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        let mut by_class: BTreeMap<Label, Vec<&Domain>> = BTreeMap::new();
        for (d, l) in items {
            by_class.entry(*l).or_default().push(d);
        }
        if let Some((l, members)) = by_class.iter().find(|(_, m)| m.len() < 2) {
            return Err(Error::ClassTooSmall {
                label: l.to_string(),
                count: members.len(),
                needed: 2,
            });
        }
        let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
        let alloc = allocate(&sizes, spec.train_fraction);
        for ((_, mut members), n_train) in by_class.into_iter().zip(alloc) {
            members.sort();
            members.shuffle(&mut rng);
            train.extend(members[..n_train].iter().map(|d| d.to_string()));
            test.extend(members[n_train..].iter().map(|d| d.to_string()));
        }
    } else {
        let mut all: Vec<&Domain> = items.iter().map(|(d, _)| d).collect();
        all.sort();
        all.shuffle(&mut rng);
        let n = all.len();
        let mut n_train = (spec.train_fraction * n as f64).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        }
        train.extend(all[..n_train].iter().map(|d| d.to_string()));
        test.extend(all[n_train..].iter().map(|d| d.to_string()));
    }
    train.sort();
    test.sort();
    Ok(SplitManifest {
        task,
        seed: spec.seed,
        train_fraction: spec.train_fraction,
        stratified: spec.stratified,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BiasLabel3, FactualityLabel};
    use proptest::prelude::*;

    fn ingest_str(text: &str) -> Result<IngestReport> {
        ingest_labels_from_reader(text.as_bytes(), Path::new("labels.csv"), CollapsePolicy::default())
    }

    #[test]
    fn ingest_basic_row() {
        let r = ingest_str("domain,factuality,bias5\ncnn.com,high,left\n").unwrap();
        assert_eq!(r.outlets.len(), 1);
        let cnn = &r.outlets[0];
        assert_eq!(cnn.domain.as_str(), "cnn.com");
        assert_eq!(cnn.factuality, Some(FactualityLabel::High));
        assert_eq!(cnn.bias5, Some(BiasLabel5::Left));
        assert_eq!(cnn.bias3, Some(BiasLabel3::Left));
        assert_eq!(cnn.region, Region::Unknown);
    }

    #[test]
    fn ingest_rejects_with_line_numbers() {
        let text = "domain,factuality,bias5,alexa_rank\n\
                    a.com,high,center,10\n\
                    b.com,very-high,center,\n\
                    c.com,low,,0\n\
                    a.com,low,left,\n\
                    d.com,,right-center,5\n";
        let r = ingest_str(text).unwrap();
        let domains: Vec<_> = r.outlets.iter().map(|o| o.domain.as_str()).collect();
        assert_eq!(domains, vec!["a.com", "d.com"]);
        let lines: Vec<u64> = r.rejects.iter().map(|x| x.line).collect();
        assert_eq!(lines, vec![3, 4, 5]);
        assert!(r.rejects[0].reason.contains("very-high"));
        // fringe label kept on the five-point scale, absent on the three-point one
        assert_eq!(r.outlets[1].bias5, Some(BiasLabel5::RightCenter));
        assert_eq!(r.outlets[1].bias3, None);
    }

    #[test]
    fn ingest_errors() {
        assert!(matches!(
            ingest_str("domain,bias5\na.com,left\n"),
            Err(Error::MissingColumn { column, .. }) if column == "factuality"
        ));
        assert!(matches!(ingest_str(""), Err(Error::EmptyFile(_))));
        assert!(matches!(
            ingest_str("domain,factuality,bias5\n"),
            Err(Error::EmptyFile(_))
        ));
    }

    #[test]
    fn outward_policy_at_ingest() {
        let r = ingest_labels_from_reader(
            "domain,factuality,bias5\na.com,,left-center\n".as_bytes(),
            Path::new("x"),
            CollapsePolicy::Outward,
        )
        .unwrap();
        assert_eq!(r.outlets[0].bias3, Some(BiasLabel3::Left));
    }

    #[test]
    fn metadata_join() {
        let dir = tempfile::tempdir().unwrap();
        let ranks = dir.path().join("ranks.csv");
        let regions = dir.path().join("regions.csv");
        std::fs::write(&ranks, "domain,alexa_rank\nfoxnews.com,100\nother.com,5\n").unwrap();
        std::fs::write(&regions, "domain,region\nfoxnews.com,US\nbbc.co.uk,United Kingdom\n").unwrap();
        let mut outlets = vec![
            Outlet::new(Domain::parse("foxnews.com").unwrap()),
            Outlet::new(Domain::parse("bbc.co.uk").unwrap()),
            Outlet::new(Domain::parse("lonely.org").unwrap()),
        ];
        let rep = attach_metadata(&mut outlets, Some(&ranks), Some(&regions)).unwrap();
        assert_eq!(rep.ranks_joined, 1);
        assert_eq!(rep.regions_joined, 2);
        assert_eq!(outlets[0].alexa_rank, Some(100));
        assert_eq!(outlets[0].region, Region::Us);
        assert_eq!(outlets[1].alexa_rank, None);
        assert_eq!(outlets[1].region, Region::NonUs);
        assert_eq!(outlets[2].region, Region::Unknown);

        std::fs::write(&ranks, "site,alexa_rank\nfoxnews.com,100\n").unwrap();
        assert!(matches!(
            attach_metadata(&mut outlets, Some(&ranks), None),
            Err(Error::MissingColumn { .. })
        ));
    }

    fn items(counts: &[usize]) -> Vec<(Domain, Label)> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                let d = Domain::parse(&format!("c{c}-o{i}.com")).unwrap();
                out.push((d, Label::from_code(TaskKind::Bias3, c as u8).unwrap()));
            }
        }
        out
    }

    #[test]
    fn split_sizes() {
        let plain = SplitSpec {
            stratified: false,
            ..SplitSpec::default()
        };
        let m = split(&items(&[10]), TaskKind::Bias3, &plain).unwrap();
        assert_eq!((m.train.len(), m.test.len()), (8, 2));

        let m = split(&items(&[5, 5]), TaskKind::Bias3, &SplitSpec::default()).unwrap();
        let train_a = m.train.iter().filter(|d| d.starts_with("c0")).count();
        let train_b = m.train.iter().filter(|d| d.starts_with("c1")).count();
        assert_eq!((train_a, train_b), (4, 4));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let data = items(&[20, 30, 25]);
        let a = split(&data, TaskKind::Bias3, &SplitSpec::default()).unwrap();
        let b = split(&data, TaskKind::Bias3, &SplitSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = split(
            &data,
            TaskKind::Bias3,
            &SplitSpec {
                seed: 7,
                ..SplitSpec::default()
            },
        )
        .unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split(&items(&[5, 1]), TaskKind::Bias3, &SplitSpec::default()),
            Err(Error::ClassTooSmall { count: 1, .. })
        ));
        assert!(matches!(
            split(&[], TaskKind::Bias3, &SplitSpec::default()),
            Err(Error::EmptyCorpus)
        ));
        let bad = SplitSpec {
            train_fraction: 1.0,
            ..SplitSpec::default()
        };
        assert!(split(&items(&[4]), TaskKind::Bias3, &bad).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(counts in prop::collection::vec(2usize..40, 1..4), frac in 0.05f64..0.95, seed in any::<u64>(), stratified in any::<bool>()) {
            let data = items(&counts);
            let spec = SplitSpec { train_fraction: frac, seed, stratified };
            let m = split(&data, TaskKind::Bias3, &spec).unwrap();
            let train: BTreeSet<_> = m.train.iter().cloned().collect();
            let test: BTreeSet<_> = m.test.iter().cloned().collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), data.len());
            let all: BTreeSet<_> = data.iter().map(|(d, _)| d.to_string()).collect();
            prop_assert_eq!(&train | &test, all);
            if stratified {
                for (c, &n) in counts.iter().enumerate() {
                    let k = m.train.iter().filter(|d| d.starts_with(&format!("c{c}-"))).count();
                    prop_assert!((k as f64 - frac * n as f64).abs() <= 1.0 + 1e-9);
                    prop_assert!(k >= 1 && k < n);
                }
            }
        }

        #[test]
        fn labels_csv_round_trip(rows in prop::collection::vec((0u8..4, 0u8..6, prop::option::of(1u64..10_000_000), 0u8..3), 1..30)) {
            let outlets: Vec<Outlet> = rows.iter().enumerate().map(|(i, &(f, b, rank, region))| {
                let mut o = Outlet::new(Domain::parse(&format!("site{i}.example")).unwrap());
                o.factuality = FactualityLabel::from_code(f);
                if let Some(b5) = BiasLabel5::from_code(b) {
                    o = o.with_bias5(b5, CollapsePolicy::default());
                }
                o.alexa_rank = rank;
                o.region = [Region::Us, Region::NonUs, Region::Unknown][region as usize];
                o
            }).collect();
            let mut buf = Vec::new();
            write_labels(&mut buf, &outlets).unwrap();
            let back = ingest_labels_from_reader(buf.as_slice(), Path::new("mem"), CollapsePolicy::default()).unwrap();
            prop_assert!(back.rejects.is_empty());
            prop_assert_eq!(back.outlets, outlets);
        }
    }
}
