//! Zero-shot baselines: name-only prediction, and article summaries
//! classified one by one and combined by hard voting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::domain::{parse_label, Domain, Label, Outlet, TaskKind, Verdict};
use crate::elicitation::{ElicitedResponse, Elicitor, ResponseStatus};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics_with_abstentions, AbstainPolicy, EvalReport};
use crate::prompts::PromptLibrary;

/// Most articles accepted per outlet.
pub const MAX_ARTICLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroShotMode {
    NameOnly,
    Articles,
}

impl std::str::FromStr for ZeroShotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "name" | "name-only" => Ok(ZeroShotMode::NameOnly),
            "articles" | "article" => Ok(ZeroShotMode::Articles),
            other => Err(Error::Config(format!(
                "unknown zero-shot mode {other:?} (expected name or articles)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleSet {
    pub outlet_domain: Domain,
    pub articles: Vec<String>,
    /// One slot per article once summarized; `None` marks a failed slot.
    pub summaries: Option<Vec<Option<String>>>,
}

impl ArticleSet {
    pub fn new(outlet_domain: Domain, articles: Vec<String>) -> Result<Self> {
        if articles.is_empty() || articles.len() > MAX_ARTICLES {
            return Err(Error::InvalidParameter(format!(
                "{outlet_domain}: expected 1 to {MAX_ARTICLES} articles, got {}",
                articles.len()
            )));
        }
        Ok(ArticleSet {
            outlet_domain,
            articles,
            summaries: None,
        })
    }

    /// Slots whose summary is missing.
    pub fn failed_slots(&self) -> Vec<usize> {
        match &self.summaries {
            Some(s) => s.iter().enumerate().filter(|(_, x)| x.is_none()).map(|(i, _)| i).collect(),
            None => Vec::new(),
        }
    }
}

/// Read `<dir>/<domain>/<n>.txt`, ordered by `n`.
pub fn load_articles(dir: impl AsRef<Path>, domain: &Domain) -> Result<ArticleSet> {
    let outlet_dir = dir.as_ref().join(domain.as_str());
    let entries = std::fs::read_dir(&outlet_dir).map_err(|e| Error::io(&outlet_dir, e))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&outlet_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let Some(n) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u32>().ok()) else {
            continue;
        };
        numbered.push((n, path));
    }
    numbered.sort();
    let articles = numbered
        .iter()
        .map(|(_, p)| std::fs::read_to_string(p).map_err(|e| Error::io(p, e)))
        .collect::<Result<Vec<_>>>()?;
    ArticleSet::new(domain.clone(), articles)
}

/// Label carried by a zero-shot reply; anything unreadable is an abstention.
pub fn verdict_of(response: &ElicitedResponse, task: TaskKind) -> Verdict {
    if response.status == ResponseStatus::ParseFailed {
        warn!(hash = %response.content_hash, "unparseable zero-shot reply counts as abstention");
        return Verdict::Abstain;
    }
    let Some(answer) = response.answers().into_iter().next() else {
        return Verdict::Abstain;
    };
    match parse_label(&answer.value, task) {
        Ok(v) => v,
        Err(e) => {
            warn!(hash = %response.content_hash, "{e}; counted as abstention");
            Verdict::Abstain
        }
    }
}

/// One request with the outlet name only.
pub fn predict_by_name(
    elicitor: &Elicitor,
    library: &PromptLibrary,
    domain: &Domain,
    task: TaskKind,
) -> Result<(Verdict, ElicitedResponse)> {
    let prompt = library.render_zeroshot(domain, task, None)?;
    let response = elicitor.elicit(&prompt)?;
    Ok((verdict_of(&response, task), response))
}

/// Summarize each article with one request. Failures leave their slot empty.
pub fn summarize_articles(elicitor: &Elicitor, library: &PromptLibrary, set: &ArticleSet) -> ArticleSet {
    let rendered: Vec<Option<crate::prompts::PromptInstance>> = set
        .articles
        .iter()
        .enumerate()
        .map(|(i, a)| match library.render_summarize(a) {
            Ok(p) => Some(p),
            Err(e) => {
                warn!("{} article {}: {e}", set.outlet_domain, i + 1);
                None
            }
        })
        .collect();
    let prompts: Vec<_> = rendered.iter().flatten().cloned().collect();
    let mut results = elicitor.elicit_all(&prompts).into_iter();
    let summaries = rendered
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.as_ref()?;
            match results.next().expect("one result per prompt") {
                Ok(r) if r.status == ResponseStatus::Ok => r
                    .answers()
                    .first()
                    .map(|a| a.value.trim().to_string())
                    .filter(|s| !s.is_empty()),
                Ok(_) => None,
                Err(e) => {
                    warn!("{} article {}: summarization failed: {e}", set.outlet_domain, i + 1);
                    None
                }
            }
        })
        .collect();
    ArticleSet {
        summaries: Some(summaries),
        ..set.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteResult {
    pub votes: Vec<Verdict>,
    pub final_label: Label,
    pub tie_broken: bool,
}

/// Majority over labelled votes.
///
/// When several labels share the top count, the winner is the voted label
/// nearest the middle of the scale, then the lower ordinal. With
/// `[left, left, right, right, center]` that is `center`.
pub fn hard_vote(votes: &[Verdict]) -> Result<VoteResult> {
    let labels: Vec<Label> = votes.iter().filter_map(|v| v.label()).collect();
    let Some(first) = labels.first() else {
        return Err(Error::AllAbstained);
    };
    let task = first.task();
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for l in &labels {
        *counts.entry(*l).or_insert(0) += 1;
    }
    let top = *counts.values().max().expect("non-empty");
    let leaders: Vec<Label> = counts.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l).collect();
    if leaders.len() == 1 {
        return Ok(VoteResult {
            votes: votes.to_vec(),
            final_label: leaders[0],
            tie_broken: false,
        });
    }
    let mid = task.max_distance() as f64 / 2.0;
    let final_label = *counts
        .keys()
        .min_by(|a, b| {
            let da = (a.code() as f64 - mid).abs();
            let db = (b.code() as f64 - mid).abs();
            da.partial_cmp(&db).unwrap().then(a.code().cmp(&b.code()))
        })
        .expect("non-empty");
    Ok(VoteResult {
        votes: votes.to_vec(),
        final_label,
        tie_broken: true,
    })
}

/// Classify every available summary and hard-vote the results.
pub fn predict_by_articles(
    elicitor: &Elicitor,
    library: &PromptLibrary,
    set: &ArticleSet,
    task: TaskKind,
) -> Result<VoteResult> {
    let summaries = set.summaries.as_ref().ok_or_else(|| {
        Error::InvalidParameter(format!("{}: articles have not been summarized", set.outlet_domain))
    })?;
    let prompts = summaries
        .iter()
        .flatten()
        .map(|s| library.render_zeroshot(&set.outlet_domain, task, Some(s)))
        .collect::<Result<Vec<_>>>()?;
    let votes = elicitor
        .elicit_all(&prompts)
        .into_iter()
        .map(|r| r.map(|resp| verdict_of(&resp, task)))
        .collect::<Result<Vec<_>>>()?;
    hard_vote(&votes)
}

/// Per-outlet zero-shot output, one JSON line each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroShotRecord {
    pub domain: String,
    pub votes: Vec<String>,
    #[serde(rename = "final")]
    pub final_label: String,
    pub task: TaskKind,
}

impl ZeroShotRecord {
    pub fn new(domain: &Domain, votes: &[Verdict], final_verdict: Verdict, task: TaskKind) -> Self {
        ZeroShotRecord {
            domain: domain.to_string(),
            votes: votes.iter().map(|v| v.as_str().to_string()).collect(),
            final_label: final_verdict.as_str().to_string(),
            task,
        }
    }

    pub fn verdict(&self) -> Result<Verdict> {
        parse_label(&self.final_label, self.task)
    }
}

/// Score zero-shot verdicts against gold labels. Outlets without a verdict
/// count as abstentions.
pub fn evaluate_zeroshot(
    outlets: &[Outlet],
    task: TaskKind,
    verdicts: &BTreeMap<Domain, Verdict>,
    mode: ZeroShotMode,
    policy: AbstainPolicy,
) -> Result<EvalReport> {
    let mut preds = Vec::new();
    let mut gold = Vec::new();
    for o in outlets {
        if let Some(g) = o.gold(task) {
            gold.push(g);
            preds.push(verdicts.get(&o.domain).copied().unwrap_or(Verdict::Abstain));
        }
    }
    let name = match mode {
        ZeroShotMode::NameOnly => "zero-shot (name)",
        ZeroShotMode::Articles => "zero-shot (articles)",
    };
    Ok(compute_metrics_with_abstentions(&preds, &gold, task, policy)?.with_system(name))
}
