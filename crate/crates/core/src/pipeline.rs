//! Train and evaluate end to end: split, featurize, grid-search, score.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::corpus::{LabeledCorpus, SplitManifest, SplitSpec};
use crate::domain::{Domain, Label, Outlet, TaskKind};
use crate::elicitation::ElicitedResponse;
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, EvalReport, PredictionRecord};
use crate::features::{
    build_documents, fit_tfidf, AblationConfig, AblationMode, FeatureDocument, TfidfModel,
    TokenizerSettings,
};
use crate::model::{grid_search, train_svm, GridResult, GridSpec, MajorityBaseline, MultiClass, SvmHyperparams, SvmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub ablation: AblationConfig,
    pub tokenizer: TokenizerSettings,
    pub grid: GridSpec,
    pub svm: SvmHyperparams,
    pub strategy: MultiClass,
    pub split: SplitSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: TaskKind::Factuality,
            ablation: AblationConfig::default(),
            tokenizer: TokenizerSettings::default(),
            grid: GridSpec::default(),
            svm: SvmHyperparams::default(),
            strategy: MultiClass::default(),
            split: SplitSpec::default(),
        }
    }
}

impl TrainConfig {
    /// Route one seed to every random choice.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        self.grid.seed = seed;
        self
    }
}

/// Vectorizer and classifier saved together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub task: TaskKind,
    pub ablation: AblationConfig,
    pub tfidf: TfidfModel,
    pub svm: SvmModel,
    pub grid: GridResult,
}

impl TrainedModel {
    pub fn predict_text(&self, text: &str) -> Result<Label> {
        self.svm.predict(&self.tfidf.transform(text))
    }

    pub fn predict_documents(&self, docs: &[FeatureDocument]) -> Result<Vec<Label>> {
        let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
        self.svm.predict_all(&self.tfidf.transform_all(&texts))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel = serde_json::from_str(&text)?;
        model.svm.check()?;
        if model.svm.vocabulary_hash.as_deref() != Some(model.tfidf.fingerprint().as_str()) {
            return Err(Error::InvalidParameter(
                "classifier was trained on a different vocabulary".into(),
            ));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub manifest: SplitManifest,
    pub report: EvalReport,
    pub baseline: EvalReport,
    pub predictions: Vec<PredictionRecord>,
    pub correctness: BTreeMap<Domain, bool>,
}

/// Split, fit TF-IDF on train, grid-search and train the SVM, then score the
/// test split against the majority baseline.
pub fn train_and_evaluate(
    outlets: &[Outlet],
    responses: Vec<ElicitedResponse>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let corpus = LabeledCorpus::new(config.task, outlets, responses);
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (train, test, manifest) = corpus.split(&config.split)?;
    info!(train = train.len(), test = test.len(), task = %config.task, "split");
    train_on_split(&train, &test, manifest, config)
}

/// Like [`train_and_evaluate`] with an existing split.
pub fn train_on_split(
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    manifest: SplitManifest,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let train_docs = build_documents(train, &config.ablation)?;
    let test_docs = build_documents(test, &config.ablation)?;
    let train_texts: Vec<&str> = train_docs.iter().map(|d| d.text.as_str()).collect();
    let tfidf = fit_tfidf(&train_texts, &config.tokenizer)?;
    let xs = tfidf.transform_all(&train_texts);
    let data: Vec<_> = xs
        .into_iter()
        .zip(train_docs.iter().map(|d| d.label.expect("labelled document")))
        .collect();

    let grid = grid_search(&data, &config.grid, &config.svm, config.strategy)?;
    info!(c = grid.best.c, gamma = grid.best.gamma, cv = grid.cells[grid.best_index].mean_accuracy, "grid search");
    let svm = train_svm(&data, &grid.best, config.strategy)?.with_vocabulary_hash(tfidf.fingerprint());
    let model = TrainedModel {
        task: config.task,
        ablation: config.ablation,
        tfidf,
        svm,
        grid,
    };

    let gold: Vec<Label> = test_docs.iter().map(|d| d.label.expect("labelled document")).collect();
    let preds = model.predict_documents(&test_docs)?;
    let report = compute_metrics(&preds, &gold, config.task)?.with_system("SVM");
    let train_labels: Vec<Label> = data.iter().map(|(_, l)| *l).collect();
    let majority = MajorityBaseline::fit(&train_labels)?;
    let baseline = compute_metrics(&majority.predict_all(gold.len()), &gold, config.task)?
        .with_system("Majority");
    let predictions = test_docs
        .iter()
        .zip(&preds)
        .map(|(d, p)| PredictionRecord {
            domain: d.outlet_domain.to_string(),
            pred: p.as_str().to_string(),
        })
        .collect();
    let correctness = test_docs
        .iter()
        .zip(preds.iter().zip(&gold))
        .map(|(d, (p, g))| (d.outlet_domain.clone(), p == g))
        .collect();
    Ok(TrainOutcome {
        model,
        manifest,
        report,
        baseline,
        predictions,
        correctness,
    })
}

/// One report per ablation mode, all on the same split.
pub fn run_ablation(
    outlets: &[Outlet],
    responses: Vec<ElicitedResponse>,
    config: &TrainConfig,
) -> Result<Vec<(AblationMode, EvalReport)>> {
    let corpus = LabeledCorpus::new(config.task, outlets, responses);
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (train, test, manifest) = corpus.split(&config.split)?;
    AblationMode::ALL
        .iter()
        .map(|&mode| {
            let cfg = TrainConfig {
                ablation: AblationConfig {
                    mode,
                    ..config.ablation
                },
                ..config.clone()
            };
            let out = train_on_split(&train, &test, manifest.clone(), &cfg)?;
            Ok((mode, out.report.with_system(format!("SVM ({mode})"))))
        })
        .collect()
}

/// Majority-class baseline scored on `gold` after fitting on `train`.
pub fn majority_report(train: &[Label], gold: &[Label], task: TaskKind) -> Result<EvalReport> {
    let m = MajorityBaseline::fit(train)?;
    Ok(compute_metrics(&m.predict_all(gold.len()), gold, task)?.with_system("Majority"))
}
